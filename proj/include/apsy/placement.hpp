#pragma once

// Stimulus selection: information-based cost functions for the full
// parameter vector (Psi policy) and for scalar functionals (T policy), grid
// optimization with refinement, and stopping rules.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <variant>
#include <vector>

#include "apsy/bayes.hpp"
#include "apsy/density.hpp"
#include "apsy/psychometric.hpp"

namespace apsy {

/// Entropy (nats) of a Bernoulli variable, with h(0) = h(1) = 0.
inline double bernoulli_entropy(double p) {
  require(p >= 0.0 && p <= 1.0, ErrorCode::DomainError, "bernoulli_entropy: p must lie in [0,1]");
  if (p <= 0.0 || p >= 1.0) return 0.0;
  return -p * std::log(p) - (1.0 - p) * std::log1p(-p);
}

namespace detail {

// h() from a probability and its separately computed complement.
inline double bernoulli_entropy2(double p, double q) noexcept {
  double h = 0.0;
  if (p > 0.0) h -= p * std::log(p);
  if (q > 0.0) h -= q * std::log(q);
  return h;
}

// Per-sample constants hoisted out of the per-stimulus loop.
struct PsiTable {
  // Psi = base + span * Phi and 1 - Psi = span * (1 - Phi) + gap, per sample.
  std::vector<double> mu, scale, base, span, gap, weight;

  PsiTable(const SampleSet& s, const Design& d) {
    const std::size_t n = s.size();
    mu.resize(n);
    scale.resize(n);
    base.resize(n);
    span.resize(n);
    gap.resize(n);
    weight = s.weights;
    for (std::size_t i = 0; i < n; ++i) {
      const Params& q = s.values[i];
      const double lam = q.lambda();
      mu[i] = q.mu;
      scale[i] = kInvSqrt2 / q.sigma();
      if (d.task() == Task::ForcedChoice) {
        const double g = d.gamma();
        base[i] = g;
        span[i] = (1.0 - g) * (1.0 - lam);
        gap[i] = (1.0 - g) * lam;
      } else {
        base[i] = 0.5 * lam;
        span[i] = 1.0 - lam;
        gap[i] = 0.5 * lam;
      }
    }
  }

  std::size_t size() const noexcept { return mu.size(); }

  // Response probability and its complement for sample i at level x.
  std::pair<double, double> eval(std::size_t i, double x) const noexcept {
    const double u = (x - mu[i]) * scale[i];
    // One erfc per call: the small tail directly, its complement by subtraction.
    double cdf, sf;
    if (u < 0.0) {
      cdf = 0.5 * std::erfc(-u);
      sf = 1.0 - cdf;
    } else {
      sf = 0.5 * std::erfc(u);
      cdf = 1.0 - sf;
    }
    return {base[i] + span[i] * cdf, span[i] * sf + gap[i]};
  }
};

inline double psi_information(double x, const PsiTable& t) {
  double mean = 0.0, meanCompl = 0.0, condH = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const auto [p, q] = t.eval(i, x);
    const double w = t.weight[i];
    mean += w * p;
    meanCompl += w * q;
    condH += w * bernoulli_entropy2(p, q);
  }
  return bernoulli_entropy2(mean, meanCompl) - condH;
}

}  // namespace detail

/// Mutual information (nats) between the next response at `x` and the
/// parameter vector: h(mean_i Psi_i) - mean_i h(Psi_i). O(n).
inline double psi_information(double x, const SampleSet& s, const Design& d) {
  return detail::psi_information(x, detail::PsiTable(s, d));
}

enum class Estimator { GaussianMoments, KdeNonparametric };

inline constexpr double kVarianceFloor = 1e-12;

/// Functional values prepared for the T cost: widths are log-transformed so
/// their posterior is closer to symmetric; other functionals are used raw.
struct PreparedFunctional {
  std::vector<double> values;
  std::vector<double> weights;  // normalized over the kept samples
  SampleSet kept;               // parameter samples aligned with `values`
  std::size_t dropped = 0;
};

inline PreparedFunctional prepare_functional(const SampleSet& s, const Functional& f, const Design& d) {
  FunctionalSamples fs = functional_samples(s, f, d);
  PreparedFunctional out;
  out.values = std::move(fs.samples.values);
  out.weights = std::move(fs.samples.weights);
  out.dropped = fs.dropped;
  if (f.is_width())
    for (double& v : out.values) v = std::log(v);
  std::vector<Params> kept;
  kept.reserve(fs.source.size());
  for (std::size_t i : fs.source) kept.push_back(s.values[i]);
  out.kept = SampleSet(std::move(kept), out.weights);
  return out;
}

namespace detail {

struct Moments {
  double mass = 0.0;
  double mean = 0.0;
  double var = 0.0;
};

inline Moments weighted_moments(const std::vector<double>& v, const std::vector<double>& w) {
  Moments m;
  for (std::size_t i = 0; i < v.size(); ++i) {
    m.mass += w[i];
    m.mean += w[i] * v[i];
  }
  if (m.mass <= 0.0) return m;
  m.mean /= m.mass;
  for (std::size_t i = 0; i < v.size(); ++i) m.var += w[i] * (v[i] - m.mean) * (v[i] - m.mean);
  m.var /= m.mass;
  return m;
}

inline double t_information(double x, const PreparedFunctional& pf, const PsiTable& table, Estimator est) {
  const std::size_t n = pf.values.size();
  std::vector<double> w1(n), w0(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto [p, q] = table.eval(i, x);
    w1[i] = pf.weights[i] * p;
    w0[i] = pf.weights[i] * q;
  }
  const Moments all = weighted_moments(pf.values, pf.weights);
  if (all.var < kVarianceFloor) return 0.0;  // functional is constant: nothing to learn
  const Moments m1 = weighted_moments(pf.values, w1);
  const Moments m0 = weighted_moments(pf.values, w0);
  const double p1 = m1.mass / (m1.mass + m0.mass);
  const double p0 = 1.0 - p1;

  if (est == Estimator::GaussianMoments) {
    double info = gaussian_entropy(all.var);
    for (auto [pr, m] : {std::pair{p1, m1}, std::pair{p0, m0}}) {
      if (pr <= 0.0) continue;
      if (m.var < kVarianceFloor)
        fail(ErrorCode::DegenerateVariance, "t_information: conditional variance collapsed below the floor");
      info -= pr * gaussian_entropy(m.var);
    }
    return info;
  }

  double info = kde_entropy(kde_fit(pf.values, pf.weights));
  if (p1 > 0.0) info -= p1 * kde_entropy(kde_fit(pf.values, w1));
  if (p0 > 0.0) info -= p0 * kde_entropy(kde_fit(pf.values, w0));
  return info;
}

}  // namespace detail

/// Mutual information (nats) between the next response at `x` and the
/// functional f(theta), from conditional moments weighted by the response
/// probabilities (or kernel density entropies for the nonparametric route).
inline double t_information(double x, const PreparedFunctional& pf, const Design& d, Estimator est) {
  return detail::t_information(x, pf, detail::PsiTable(pf.kept, d), est);
}

inline double t_information(double x, const SampleSet& s, const Functional& f, const Design& d, Estimator est) {
  return t_information(x, prepare_functional(s, f, d), d, est);
}

// ---------------------------------------------------------------------------
// Policies

struct StimulusGrid {
  std::vector<double> levels;
  int refineRounds = 2;
  double refineShrink = 0.2;

  static StimulusGrid uniform(double lo, double hi, int count = 45, int refineRounds = 2, double shrink = 0.2) {
    require(count >= 2, ErrorCode::InvalidArgument, "grid needs at least 2 levels");
    StimulusGrid g;
    g.levels.resize(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) g.levels[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (count - 1);
    g.levels.back() = hi;
    g.refineRounds = refineRounds;
    g.refineShrink = shrink;
    return g;
  }
  static StimulusGrid uniform(const Design& d, int count = 45) { return uniform(d.x_lo(), d.x_hi(), count); }

  void validate(const Design& d) const {
    require(levels.size() >= 2, ErrorCode::InvalidArgument, "grid needs at least 2 levels");
    for (std::size_t i = 1; i < levels.size(); ++i)
      require(levels[i] > levels[i - 1], ErrorCode::InvalidArgument, "grid levels must be strictly increasing");
    require(d.contains(levels.front()) && d.contains(levels.back()), ErrorCode::InvalidArgument,
            "grid levels must lie inside the design domain");
    require(refineRounds >= 0, ErrorCode::InvalidArgument, "refineRounds must be non-negative");
    require(refineShrink > 0.0 && refineShrink < 1.0, ErrorCode::InvalidArgument, "refineShrink must lie in (0,1)");
  }
};

struct PsiPolicy {};
struct TPolicy {
  Functional functional;
  Estimator estimator = Estimator::GaussianMoments;
};

inline constexpr std::size_t kDefaultSampleCount = 5000;
inline constexpr int kDefaultGridPoints = 45;

struct PlacementPolicy {
  std::variant<PsiPolicy, TPolicy> kind;
  std::size_t sampleCount = kDefaultSampleCount;
  StimulusGrid grid;
  bool approximate = false;  // set when a Psi policy stands in for two thresholds

  static PlacementPolicy psi(const Design& d, std::size_t n = kDefaultSampleCount, int points = kDefaultGridPoints) {
    return {PsiPolicy{}, n, StimulusGrid::uniform(d, points), false};
  }
  static PlacementPolicy t(Functional f, const Design& d, Estimator est = Estimator::GaussianMoments,
                           std::size_t n = kDefaultSampleCount, int points = kDefaultGridPoints) {
    return {TPolicy{std::move(f), est}, n, StimulusGrid::uniform(d, points), false};
  }

  bool is_psi() const noexcept { return std::holds_alternative<PsiPolicy>(kind); }

  void validate(const Design& d) const {
    require(sampleCount >= 100, ErrorCode::InvalidArgument, "sampleCount must be at least 100");
    grid.validate(d);
  }
};

struct CostCurve {
  std::vector<double> levels;
  std::vector<double> values;  // nats
  std::size_t chosen = 0;
};

struct Selection {
  double x = 0.0;
  CostCurve curve;
  bool allZeroInformation = false;
};

inline constexpr double kZeroInformation = 1e-12;

/// Draws one shared sample set from the Laplace posterior, evaluates the
/// policy's information on the grid, then refines around the incumbent
/// maximum `refineRounds` times (spacing shrinks by `refineShrink`, point
/// count fixed, window shifted to stay inside the domain).
inline Selection select_next(const PlacementPolicy& policy, const LaplacePosterior& lp, const Design& d,
                             std::uint64_t seed) {
  policy.validate(d);
  const SampleSet samples = sample_laplace(lp, policy.sampleCount, seed);

  std::function<double(double)> info;
  std::optional<PreparedFunctional> prepared;
  std::optional<detail::PsiTable> table;
  if (policy.is_psi()) {
    table.emplace(samples, d);
    info = [&](double x) { return detail::psi_information(x, *table); };
  } else {
    const auto& tp = std::get<TPolicy>(policy.kind);
    prepared = prepare_functional(samples, tp.functional, d);
    table.emplace(prepared->kept, d);
    info = [&, est = tp.estimator](double x) { return detail::t_information(x, *prepared, *table, est); };
  }

  std::vector<std::pair<double, double>> evaluated;
  const auto evaluate = [&](const std::vector<double>& xs) {
    for (double x : xs) evaluated.emplace_back(x, info(x));
  };
  const auto incumbent = [&] {
    std::size_t best = 0;
    for (std::size_t i = 1; i < evaluated.size(); ++i) {
      const auto& [x, v] = evaluated[i];
      if (v > evaluated[best].second || (v == evaluated[best].second && x < evaluated[best].first)) best = i;
    }
    return evaluated[best].first;
  };

  evaluate(policy.grid.levels);
  const std::size_t count = policy.grid.levels.size();
  double spacing = (policy.grid.levels.back() - policy.grid.levels.front()) / static_cast<double>(count - 1);
  for (int round = 0; round < policy.grid.refineRounds; ++round) {
    spacing *= policy.grid.refineShrink;
    const double span = spacing * static_cast<double>(count - 1);
    double start = incumbent() - 0.5 * span;
    start = std::clamp(start, d.x_lo(), std::max(d.x_lo(), d.x_hi() - span));
    std::vector<double> xs(count);
    for (std::size_t i = 0; i < count; ++i) xs[i] = std::min(d.x_hi(), start + spacing * static_cast<double>(i));
    evaluate(xs);
  }

  std::sort(evaluated.begin(), evaluated.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  evaluated.erase(std::unique(evaluated.begin(), evaluated.end(),
                              [](const auto& a, const auto& b) { return a.first == b.first; }),
                  evaluated.end());

  Selection out;
  out.curve.levels.reserve(evaluated.size());
  out.curve.values.reserve(evaluated.size());
  for (const auto& [x, v] : evaluated) {
    out.curve.levels.push_back(x);
    out.curve.values.push_back(v);
  }
  const auto& vals = out.curve.values;
  out.curve.chosen = static_cast<std::size_t>(std::max_element(vals.begin(), vals.end()) - vals.begin());
  if (vals[out.curve.chosen] <= kZeroInformation) {
    out.allZeroInformation = true;
    out.x = 0.5 * (d.x_lo() + d.x_hi());
  } else {
    out.x = out.curve.levels[out.curve.chosen];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Stopping rules

struct FixedTrials {
  std::size_t count;
};
struct EntropyBelow {
  double threshold;  // nats
};
struct ProbabilityWithin {
  Functional functional;
  double lo;
  double hi;
  double confidence;
};

struct StoppingRule {
  std::variant<FixedTrials, EntropyBelow, ProbabilityWithin> kind;

  static StoppingRule fixed(std::size_t n) { return {FixedTrials{n}}; }
  static StoppingRule entropy_below(double nats) { return {EntropyBelow{nats}}; }
  static StoppingRule probability_within(Functional f, double lo, double hi, double confidence) {
    require(confidence > 0.0 && confidence < 1.0, ErrorCode::DomainError, "confidence must lie in (0,1)");
    require(lo < hi, ErrorCode::DomainError, "probability-within rule needs lo < hi");
    return {ProbabilityWithin{std::move(f), lo, hi, confidence}};
  }

  bool needs_samples() const noexcept { return std::holds_alternative<ProbabilityWithin>(kind); }
};

inline bool should_stop(const StoppingRule& rule, const LaplacePosterior& lp, const SampleSet* samples,
                        std::size_t trialCount, const Design& d) {
  return std::visit(
      [&](const auto& k) -> bool {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, FixedTrials>) {
          return trialCount >= k.count;
        } else if constexpr (std::is_same_v<K, EntropyBelow>) {
          return posterior_entropy_gaussian(lp) < k.threshold;
        } else {
          require(samples != nullptr, ErrorCode::InvalidArgument, "probability-within rule needs posterior samples");
          const FunctionalSamples fs = functional_samples(*samples, k.functional, d);
          double inside = 0.0;
          for (std::size_t i = 0; i < fs.samples.size(); ++i)
            if (fs.samples.values[i] >= k.lo && fs.samples.values[i] <= k.hi) inside += fs.samples.weights[i];
          return inside >= k.confidence;
        }
      },
      rule.kind);
}

/// Measuring several thresholds at once reduces to the Psi policy: exactly
/// for three or more levels (thresholds and parameters are in one-to-one
/// correspondence), approximately for two.
inline PlacementPolicy multi_threshold_policy(const std::vector<double>& levels, const Design& d,
                                              std::size_t n = kDefaultSampleCount) {
  require(levels.size() >= 2, ErrorCode::InvalidArgument,
          "multi_threshold_policy needs at least two levels; use a T policy on a single threshold");
  PlacementPolicy p = PlacementPolicy::psi(d, n);
  p.approximate = levels.size() == 2;
  return p;
}

}  // namespace apsy
