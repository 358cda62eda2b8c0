#pragma once

// Brute-force posterior on a cubic grid by the trapezoid rule. Slow but
// independent of the Laplace path, so the tests use it as a reference.

#include <array>
#include <cmath>
#include <vector>

#include "apsy/bayes.hpp"

namespace apsy {

struct GridSpec {
  std::array<double, 3> lo{};
  std::array<double, 3> hi{};
  int points = 61;  // per dimension; odd so the 2x coarser grid is a subset

  /// Box of +-halfWidth prior standard deviations around the prior mean.
  static GridSpec around_prior(const GaussianPrior& prior, double halfWidth = 4.0, int points = 61) {
    require(halfWidth >= 3.0, ErrorCode::InvalidArgument, "grid must cover at least 6 prior sd per dimension");
    GridSpec g;
    for (int i = 0; i < 3; ++i) {
      g.lo[i] = prior.mean[i] - halfWidth * prior.sd[i];
      g.hi[i] = prior.mean[i] + halfWidth * prior.sd[i];
    }
    g.points = points;
    return g;
  }

  /// Box of +-halfWidth posterior standard deviations around a Laplace mode.
  static GridSpec around_laplace(const LaplacePosterior& lp, double halfWidth = 6.0, int points = 61) {
    GridSpec g;
    const Vec3 m = to_vec(lp.mode);
    const Vec3 s = lp.sd();
    for (int i = 0; i < 3; ++i) {
      g.lo[i] = m[i] - halfWidth * s[i];
      g.hi[i] = m[i] + halfWidth * s[i];
    }
    g.points = points;
    return g;
  }

  double step(int dim) const { return (hi[dim] - lo[dim]) / (points - 1); }
  double node(int dim, int i) const { return lo[dim] + i * step(dim); }
};

struct GridPosterior {
  GridSpec spec;
  std::vector<double> mass;  // normalized quadrature mass per node (density * weight)
  Params mean;
  Mat3 covariance = Mat3::Zero();
  Vec3 coarseMeanShift = Vec3::Zero();  // |mean(grid) - mean(2x coarser grid)|

  std::size_t index(int i, int j, int k) const {
    const auto n = static_cast<std::size_t>(spec.points);
    return (static_cast<std::size_t>(i) * n + static_cast<std::size_t>(j)) * n + static_cast<std::size_t>(k);
  }
  Params node(int i, int j, int k) const { return {spec.node(0, i), spec.node(1, j), spec.node(2, k)}; }

  template <class F>
  double expect(F&& fn) const {
    double acc = 0.0;
    const int n = spec.points;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        for (int k = 0; k < n; ++k) {
          const double m = mass[index(i, j, k)];
          if (m > 0.0) acc += m * fn(node(i, j, k));
        }
    return acc;
  }

  /// Marginal cumulative distribution of one coordinate at the grid nodes.
  std::vector<double> marginal_cdf(int dim) const {
    const int n = spec.points;
    std::vector<double> m(static_cast<std::size_t>(n), 0.0);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        for (int k = 0; k < n; ++k) {
          const int at = dim == 0 ? i : (dim == 1 ? j : k);
          m[static_cast<std::size_t>(at)] += mass[index(i, j, k)];
        }
    // Trapezoid masses sit on nodes; accumulate midpoint-style so the CDF at
    // node t includes half of node t's mass.
    std::vector<double> cdf(m.size());
    double cum = 0.0;
    for (std::size_t t = 0; t < m.size(); ++t) {
      cdf[t] = cum + 0.5 * m[t];
      cum += m[t];
    }
    return cdf;
  }
};

namespace detail {

inline double trapezoid_weight(int i, int n, int stride) {
  return (i == 0 || i == n - 1) ? 0.5 * stride : 1.0 * stride;
}

inline void grid_moments(const GridSpec& spec, const std::vector<double>& logp, int stride, std::vector<double>* massOut,
                         Vec3& mean, Mat3& cov) {
  const int n = spec.points;
  const auto idx = [n](int i, int j, int k) {
    return (static_cast<std::size_t>(i) * static_cast<std::size_t>(n) + static_cast<std::size_t>(j)) *
               static_cast<std::size_t>(n) +
           static_cast<std::size_t>(k);
  };
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : logp) mx = std::max(mx, v);

  std::vector<double> mass(logp.size(), 0.0);
  double z = 0.0;
  for (int i = 0; i < n; i += stride)
    for (int j = 0; j < n; j += stride)
      for (int k = 0; k < n; k += stride) {
        const double w = trapezoid_weight(i, n, stride) * trapezoid_weight(j, n, stride) * trapezoid_weight(k, n, stride);
        const double m = w * std::exp(logp[idx(i, j, k)] - mx);
        mass[idx(i, j, k)] = m;
        z += m;
      }
  mean.setZero();
  cov.setZero();
  for (int i = 0; i < n; i += stride)
    for (int j = 0; j < n; j += stride)
      for (int k = 0; k < n; k += stride) {
        double& m = mass[idx(i, j, k)];
        m /= z;
        mean += m * Vec3(spec.node(0, i), spec.node(1, j), spec.node(2, k));
      }
  for (int i = 0; i < n; i += stride)
    for (int j = 0; j < n; j += stride)
      for (int k = 0; k < n; k += stride) {
        const Vec3 d = Vec3(spec.node(0, i), spec.node(1, j), spec.node(2, k)) - mean;
        cov += mass[idx(i, j, k)] * d * d.transpose();
      }
  if (massOut) *massOut = std::move(mass);
}

}  // namespace detail

/// Normalized grid posterior with mean and covariance. Raises GridTooCoarse
/// when halving the resolution moves the mean by more than `tolerance`
/// (measured in prior standard deviations).
inline GridPosterior grid_posterior_oracle(const Dataset& data, const GaussianPrior& prior, const GridSpec& spec,
                                           double tolerance = 0.02) {
  require(spec.points >= 5 && spec.points % 2 == 1, ErrorCode::InvalidArgument, "grid needs an odd number >= 5 of points");
  const int n = spec.points;
  std::vector<double> logp(static_cast<std::size_t>(n) * n * n);
  std::size_t at = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k)
        logp[at++] = log_posterior_unnorm(data, prior, {spec.node(0, i), spec.node(1, j), spec.node(2, k)});

  GridPosterior out;
  out.spec = spec;
  Vec3 mean;
  detail::grid_moments(spec, logp, 1, &out.mass, mean, out.covariance);
  Vec3 coarseMean;
  Mat3 coarseCov;
  detail::grid_moments(spec, logp, 2, nullptr, coarseMean, coarseCov);
  out.mean = to_params(mean);
  for (int i = 0; i < 3; ++i) out.coarseMeanShift[i] = std::abs(mean[i] - coarseMean[i]) / prior.sd[i];
  if (out.coarseMeanShift.maxCoeff() > tolerance)
    fail(ErrorCode::GridTooCoarse, "grid mean moved by " + std::to_string(out.coarseMeanShift.maxCoeff()) +
                                       " prior sd when the resolution was halved");
  return out;
}

}  // namespace apsy
