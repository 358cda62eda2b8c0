#pragma once

// Entropy and mutual-information estimators: closed-form Gaussian, Gaussian
// kernel density estimate, and a histogram plug-in estimator.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <span>
#include <vector>

#include "apsy/error.hpp"
#include "apsy/numerics.hpp"

namespace apsy {

/// Entropy (nats) of a Gaussian with variance v.
inline double gaussian_entropy(double variance) {
  require(variance > 0.0, ErrorCode::DomainError, "gaussian_entropy: variance must be positive");
  return 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e * variance);
}

enum class BandwidthRule { Silverman };

/// Weighted one-dimensional Gaussian-kernel density estimate. Points are kept
/// sorted so each evaluation only touches the kernel's +-8 bandwidth window.
class Kde {
 public:
  Kde(std::vector<double> points, std::vector<double> weights, double bandwidth)
      : points_(std::move(points)), weights_(std::move(weights)), bandwidth_(bandwidth) {
    require(bandwidth_ > 0.0, ErrorCode::DomainError, "KDE bandwidth must be positive");
    require(points_.size() == weights_.size() && !points_.empty(), ErrorCode::InvalidArgument,
            "KDE needs one weight per point");
    std::vector<std::size_t> order(points_.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return points_[a] < points_[b]; });
    std::vector<double> p(points_.size()), w(points_.size());
    double total = 0.0;
    for (double v : weights_) total += v;
    for (std::size_t i = 0; i < order.size(); ++i) {
      p[i] = points_[order[i]];
      w[i] = weights_[order[i]] / total;
    }
    points_ = std::move(p);
    weights_ = std::move(w);
    mean_ = 0.0;
    for (std::size_t i = 0; i < points_.size(); ++i) mean_ += weights_[i] * points_[i];
    double var = 0.0;
    for (std::size_t i = 0; i < points_.size(); ++i) var += weights_[i] * (points_[i] - mean_) * (points_[i] - mean_);
    sd_ = std::sqrt(var);
  }

  double bandwidth() const noexcept { return bandwidth_; }
  double mean() const noexcept { return mean_; }
  double sample_sd() const noexcept { return sd_; }
  const std::vector<double>& points() const noexcept { return points_; }
  const std::vector<double>& weights() const noexcept { return weights_; }

  double density(double x) const noexcept {
    const double reach = 8.0 * bandwidth_;
    auto lo = std::lower_bound(points_.begin(), points_.end(), x - reach);
    auto hi = std::upper_bound(lo, points_.end(), x + reach);
    double acc = 0.0;
    const double inv = 1.0 / bandwidth_;
    for (auto it = lo; it != hi; ++it) {
      const auto i = static_cast<std::size_t>(it - points_.begin());
      acc += weights_[i] * normal_pdf((x - *it) * inv);
    }
    return acc * inv;
  }

  /// Integration range: mean +- 8 effective sd, widened to cover every point.
  std::pair<double, double> support() const noexcept {
    const double eff = std::sqrt(sd_ * sd_ + bandwidth_ * bandwidth_);
    return {std::min(mean_ - 8.0 * eff, points_.front() - 8.0 * bandwidth_),
            std::max(mean_ + 8.0 * eff, points_.back() + 8.0 * bandwidth_)};
  }

 private:
  std::vector<double> points_;
  std::vector<double> weights_;
  double bandwidth_;
  double mean_ = 0.0;
  double sd_ = 0.0;
};

inline constexpr double kKdeWeightFloor = 1e-12;

inline Kde kde_fit(std::span<const double> samples, std::span<const double> weights,
                   BandwidthRule rule = BandwidthRule::Silverman) {
  require(samples.size() == weights.size() && samples.size() >= 2, ErrorCode::InvalidArgument,
          "kde_fit: needs at least two samples with one weight each");
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  require(total > 0.0, ErrorCode::DegenerateWeights, "kde_fit: weights sum to zero");

  // Distinctness is judged only among points carrying non-negligible weight.
  double first = std::numeric_limits<double>::quiet_NaN();
  bool distinct = false;
  for (std::size_t i = 0; i < samples.size() && !distinct; ++i) {
    if (weights[i] / total <= kKdeWeightFloor) continue;
    if (std::isnan(first)) first = samples[i];
    else if (samples[i] != first) distinct = true;
  }
  if (!distinct) fail(ErrorCode::AllIdentical, "kde_fit: samples coincide");

  double mean = 0.0, s2 = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double w = weights[i] / total;
    mean += w * samples[i];
    s2 += w * w;
  }
  double var = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) var += weights[i] / total * (samples[i] - mean) * (samples[i] - mean);
  const double sd = std::sqrt(var);
  if (!(sd > 0.0)) fail(ErrorCode::AllIdentical, "kde_fit: zero spread");
  const double nEff = 1.0 / s2;

  double bw = 0.0;
  switch (rule) {
    case BandwidthRule::Silverman: bw = 1.06 * sd * std::pow(nEff, -0.2); break;
  }
  return Kde(std::vector<double>(samples.begin(), samples.end()), std::vector<double>(weights.begin(), weights.end()),
             bw);
}

inline Kde kde_fit(std::span<const double> samples) {
  std::vector<double> w(samples.size(), 1.0);
  return kde_fit(samples, w);
}

/// Composite Simpson over the support, doubling the panel count until two
/// successive estimates agree to `tolerance` (nats).
template <class F>
double integrate_to_tolerance(F&& f, double a, double b, double tolerance, int startPanels = 512,
                              int maxPanels = 1 << 17) {
  int n = startPanels;
  std::vector<double> vals(static_cast<std::size_t>(n) + 1);
  const auto at = [&](int i, int panels) { return a + (b - a) * i / panels; };
  for (int i = 0; i <= n; ++i) vals[static_cast<std::size_t>(i)] = f(at(i, n));
  const auto simpsonSum = [&](const std::vector<double>& v, int panels) {
    double acc = v.front() + v.back();
    for (int i = 1; i < panels; ++i) acc += v[static_cast<std::size_t>(i)] * (i % 2 ? 4.0 : 2.0);
    return acc * (b - a) / panels / 3.0;
  };
  double prev = simpsonSum(vals, n);
  while (n < maxPanels) {
    std::vector<double> next(static_cast<std::size_t>(2 * n) + 1);
    for (int i = 0; i <= n; ++i) next[static_cast<std::size_t>(2 * i)] = vals[static_cast<std::size_t>(i)];
    for (int i = 0; i < n; ++i) next[static_cast<std::size_t>(2 * i + 1)] = f(at(2 * i + 1, 2 * n));
    n *= 2;
    vals = std::move(next);
    const double cur = simpsonSum(vals, n);
    if (std::abs(cur - prev) < tolerance) return cur;
    prev = cur;
  }
  fail(ErrorCode::QuadratureFailure, "quadrature did not converge");
}

inline double kde_integral(const Kde& k) {
  const auto [a, b] = k.support();
  return integrate_to_tolerance([&](double x) { return k.density(x); }, a, b, 1e-9);
}

/// Differential entropy -int f log f of the kernel density estimate.
inline double kde_entropy(const Kde& k, double tolerance = 1e-4) {
  const auto [a, b] = k.support();
  return integrate_to_tolerance(
      [&](double x) {
        const double f = k.density(x);
        return f > 0.0 ? -f * std::log(f) : 0.0;
      },
      a, b, tolerance);
}

// ---------------------------------------------------------------------------
// Histogram

struct Histogram {
  std::vector<double> edges;   // sorted, size = bins + 1
  std::vector<double> masses;  // normalized, size = bins

  std::size_t bins() const noexcept { return masses.size(); }

  std::size_t bin_of(double x) const noexcept {
    auto it = std::upper_bound(edges.begin() + 1, edges.end() - 1, x);
    return static_cast<std::size_t>(it - (edges.begin() + 1));
  }
};

inline std::size_t sturges_bins(std::size_t n) {
  return static_cast<std::size_t>(std::ceil(std::log2(static_cast<double>(std::max<std::size_t>(n, 1))))) + 1;
}

/// Equal-mass bin edges (weighted quantiles), first/last edge at the extremes.
inline std::vector<double> quantile_edges(std::span<const double> samples, std::span<const double> weights,
                                          std::size_t bins) {
  require(bins >= 2, ErrorCode::InvalidArgument, "histogram needs at least 2 bins");
  std::vector<double> probs(bins + 1);
  for (std::size_t b = 0; b <= bins; ++b) probs[b] = static_cast<double>(b) / static_cast<double>(bins);
  return weighted_quantiles(samples, weights, probs);
}

inline Histogram histogram_fit(std::span<const double> samples, std::span<const double> weights,
                               std::vector<double> edges) {
  require(edges.size() >= 3 && std::is_sorted(edges.begin(), edges.end()), ErrorCode::InvalidArgument,
          "histogram edges must be sorted with at least 2 bins");
  Histogram h{std::move(edges), {}};
  h.masses.assign(h.edges.size() - 1, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    h.masses[h.bin_of(samples[i])] += weights[i];
    total += weights[i];
  }
  for (double& m : h.masses) m /= total;
  return h;
}

/// Plug-in mutual information (nats) between a binned continuous variable and
/// a binary response whose success probability for sample i is probGiven[i].
/// `edges` empty means equal-mass bins; `binCount` 0 means Sturges' rule.
inline double histogram_mi(std::span<const double> samples, std::span<const double> weights,
                           std::span<const double> probGiven, std::size_t binCount = 0,
                           std::vector<double> edges = {}) {
  require(samples.size() == weights.size() && samples.size() == probGiven.size() && !samples.empty(),
          ErrorCode::InvalidArgument, "histogram_mi: input sizes differ");
  if (edges.empty()) {
    if (binCount == 0) binCount = sturges_bins(samples.size());
    require(binCount >= 2, ErrorCode::InvalidArgument, "histogram_mi: binCount must be at least 2");
    edges = quantile_edges(samples, weights, binCount);
  }
  const Histogram h = histogram_fit(samples, weights, edges);
  std::vector<double> joint1(h.bins(), 0.0), marg(h.bins(), 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const std::size_t b = h.bin_of(samples[i]);
    joint1[b] += weights[i] * probGiven[i];
    marg[b] += weights[i];
    total += weights[i];
  }
  double p1 = 0.0;
  for (std::size_t b = 0; b < h.bins(); ++b) {
    joint1[b] /= total;
    marg[b] /= total;
    p1 += joint1[b];
  }
  const double p0 = 1.0 - p1;
  double mi = 0.0;
  for (std::size_t b = 0; b < h.bins(); ++b) {
    if (marg[b] <= 0.0) continue;
    const double j1 = joint1[b];
    const double j0 = marg[b] - j1;
    if (j1 > 0.0 && p1 > 0.0) mi += j1 * std::log(j1 / (marg[b] * p1));
    if (j0 > 0.0 && p0 > 0.0) mi += j0 * std::log(j0 / (marg[b] * p0));
  }
  return mi < 1e-12 ? 0.0 : mi;  // independence comes out as rounding noise
}

inline double histogram_mi(std::span<const double> samples, std::span<const double> probGiven,
                           std::size_t binCount = 0) {
  std::vector<double> w(samples.size(), 1.0);
  return histogram_mi(samples, w, probGiven, binCount);
}

}  // namespace apsy
