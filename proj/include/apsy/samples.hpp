#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include "apsy/error.hpp"
#include "apsy/psychometric.hpp"

namespace apsy {

/// A set of draws with normalized, non-negative weights. The currency passed
/// between the posterior, the cost functions and the diagnostics.
template <class T>
struct WeightedSet {
  std::vector<T> values;
  std::vector<double> weights;

  WeightedSet() = default;

  /// Uniformly weighted set.
  explicit WeightedSet(std::vector<T> v) : values(std::move(v)), weights(values.size(), 0.0) {
    require(!values.empty(), ErrorCode::InvalidArgument, "sample set must not be empty");
    const double w = 1.0 / static_cast<double>(values.size());
    std::fill(weights.begin(), weights.end(), w);
  }

  WeightedSet(std::vector<T> v, std::vector<double> w) : values(std::move(v)), weights(std::move(w)) {
    require(!values.empty() && values.size() == weights.size(), ErrorCode::InvalidArgument,
            "sample set needs one weight per value and at least one value");
    normalize();
  }

  std::size_t size() const noexcept { return values.size(); }

  void normalize() {
    double total = 0.0;
    for (double w : weights) {
      require(w >= 0.0 && std::isfinite(w), ErrorCode::InvalidArgument, "weights must be finite and non-negative");
      total += w;
    }
    require(total > 0.0, ErrorCode::DegenerateWeights, "weights sum to zero");
    for (double& w : weights) w /= total;
  }

  bool uniform() const noexcept {
    for (double w : weights)
      if (w != weights.front()) return false;
    return true;
  }

  /// Kish effective sample size.
  double effective_size() const noexcept {
    double s2 = 0.0;
    for (double w : weights) s2 += w * w;
    return 1.0 / s2;
  }
};

struct LocationScale {
  double mu = 0.0;
  double nu = 0.0;
  friend bool operator==(const LocationScale&, const LocationScale&) = default;
};

using SampleSet = WeightedSet<Params>;
using MarginalSampleSet = WeightedSet<LocationScale>;
using ScalarSamples = WeightedSet<double>;

inline double weighted_mean(const ScalarSamples& s) noexcept {
  double m = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) m += s.weights[i] * s.values[i];
  return m;
}

inline double weighted_variance(const ScalarSamples& s) noexcept {
  const double m = weighted_mean(s);
  double v = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) v += s.weights[i] * (s.values[i] - m) * (s.values[i] - m);
  return v;
}

}  // namespace apsy
