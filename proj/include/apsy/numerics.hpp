#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <span>
#include <vector>

#include "apsy/error.hpp"

namespace apsy {

inline constexpr double kInvSqrt2 = 0.70710678118654752440;
inline constexpr double kInvSqrt2Pi = 0.39894228040143267794;

inline double normal_pdf(double z) noexcept { return kInvSqrt2Pi * std::exp(-0.5 * z * z); }

// erfc keeps both tails accurate; 1 - cdf would cancel for large z.
inline double normal_cdf(double z) noexcept { return 0.5 * std::erfc(-z * kInvSqrt2); }
inline double normal_sf(double z) noexcept { return 0.5 * std::erfc(z * kInvSqrt2); }

namespace detail {

// Acklam's rational approximation (relative error < 1.15e-9), lower region.
inline double acklam_quantile(double p) noexcept {
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                 1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                 6.680131188771972e+01,  -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                 -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                 3.754408661907416e+00};
  constexpr double plow = 0.02425;
  if (p < plow) {
    const double q = std::sqrt(-2.0 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double q = p - 0.5;
  const double r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

}  // namespace detail

/// Standard-normal quantile. Takes the lower tail mass `p` and, optionally, its
/// complement `q = 1 - p` computed by the caller without cancellation. One
/// Halley step on top of the rational approximation brings the result to
/// full double precision.
inline double normal_quantile(double p, double q) {
  require(p > 0.0 && q > 0.0, ErrorCode::DomainError, "normal_quantile: probability must lie in (0,1)");
  if (p > 0.5) return -normal_quantile(q, p);
  double x = detail::acklam_quantile(p);
  const double e = normal_cdf(x) - p;
  const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
  x -= u / (1.0 + 0.5 * x * u);
  return x;
}

inline double normal_quantile(double p) { return normal_quantile(p, 1.0 - p); }

inline double logistic(double t) noexcept {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }

/// SplitMix64 finalizer; used to derive independent RNG streams from a
/// master seed and a stream index.
inline std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) noexcept {
  return mix64(mix64(master) ^ mix64(stream + 0x632be59bd9b4e019ULL));
}

/// Composite Simpson rule with `panels` (rounded up to even) subintervals.
template <class F>
double simpson(F&& f, double a, double b, int panels) {
  if (panels % 2) ++panels;
  const double h = (b - a) / panels;
  double acc = f(a) + f(b);
  for (int i = 1; i < panels; ++i) acc += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return acc * h / 3.0;
}

/// Weighted generalization of linear interpolation between order statistics
/// (R's type 7). With uniform weights it reduces exactly to type 7; e.g. the
/// median of {0.6, 0.9} is 0.75. Values are copied and sorted.
inline std::vector<double> weighted_quantiles(std::span<const double> values, std::span<const double> weights,
                                              std::span<const double> probs) {
  require(!values.empty() && values.size() == weights.size(), ErrorCode::InvalidArgument,
          "weighted_quantiles: size mismatch or empty input");
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });

  std::vector<double> out(probs.size());
  if (n == 1) {
    std::fill(out.begin(), out.end(), values[0]);
    return out;
  }
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  // Position of the i-th order statistic: cumulative weight strictly below it,
  // rescaled so that the first sits at 0 and the last at 1.
  std::vector<double> pos(n);
  double cum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    pos[i] = cum;
    cum += weights[order[i]] / total;
  }
  const double last = pos[n - 1];
  for (auto& p : pos) p /= last;

  for (std::size_t j = 0; j < probs.size(); ++j) {
    const double p = probs[j];
    require(p >= 0.0 && p <= 1.0, ErrorCode::DomainError, "weighted_quantiles: quantile level outside [0,1]");
    auto it = std::upper_bound(pos.begin(), pos.end(), p);
    if (it == pos.end()) {
      out[j] = values[order[n - 1]];
      continue;
    }
    const std::size_t hi = static_cast<std::size_t>(it - pos.begin());
    const std::size_t lo = hi - 1;
    const double span = pos[hi] - pos[lo];
    const double t = span > 0.0 ? (p - pos[lo]) / span : 0.0;
    out[j] = values[order[lo]] + t * (values[order[hi]] - values[order[lo]]);
  }
  return out;
}

}  // namespace apsy
