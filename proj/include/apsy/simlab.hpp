#pragma once

// Simulated observers, sampling schemes and the Monte-Carlo studies:
// convergence by scheme, prior robustness, Weibull matching and
// drifting-observer posterior predictive checks.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "apsy/bayes.hpp"
#include "apsy/placement.hpp"
#include "apsy/psychometric.hpp"

namespace apsy {

// ---------------------------------------------------------------------------
// Observers

struct GaussianObserver {
  Params truth;
};
struct WeibullObserver {
  WeibullParams truth;
};
struct DriftingObserver {
  Params initial;
  double driftPerTrial = 0.005;  // mu(t) = mu0 - drift * (t - 1)
};

inline constexpr double kDefaultDrift = 0.005;

class SimulatedObserver {
 public:
  using Kind = std::variant<GaussianObserver, WeibullObserver, DriftingObserver>;

  SimulatedObserver(Kind k, Design d) : kind_(std::move(k)), design_(d) {
    if (const auto* w = std::get_if<WeibullObserver>(&kind_)) {
      w->truth.validate();
      require(d.task() == Task::ForcedChoice, ErrorCode::InvalidArgument, "Weibull observer needs a forced-choice design");
      require(d.x_lo() >= 0.0, ErrorCode::DomainError, "Weibull observer needs a non-negative stimulus domain");
    }
  }

  static SimulatedObserver gaussian(Params p, Design d) { return {GaussianObserver{p}, d}; }
  static SimulatedObserver weibull(WeibullParams w, Design d) { return {WeibullObserver{w}, d}; }
  static SimulatedObserver drifting(Params p0, double drift, Design d) { return {DriftingObserver{p0, drift}, d}; }

  const Kind& kind() const noexcept { return kind_; }
  const Design& design() const noexcept { return design_; }

  /// Success probability at level x on trial t (t >= 1).
  double probability(double x, std::size_t t) const {
    return std::visit(
        [&](const auto& k) -> double {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, GaussianObserver>) {
            return psi(x, k.truth, design_);
          } else if constexpr (std::is_same_v<K, WeibullObserver>) {
            return psi_weibull(x, k.truth, design_.gamma());
          } else {
            Params p = k.initial;
            p.mu -= k.driftPerTrial * static_cast<double>(t - 1);
            return psi(x, p, design_);
          }
        },
        kind_);
  }

  /// Parameters at trial 1 (Gaussian and drifting observers only).
  Params initial_params() const {
    if (const auto* g = std::get_if<GaussianObserver>(&kind_)) return g->truth;
    if (const auto* g = std::get_if<DriftingObserver>(&kind_)) return g->initial;
    fail(ErrorCode::InvalidArgument, "Weibull observer has no Gaussian parameters");
  }

 private:
  Kind kind_;
  Design design_;
};

/// Bernoulli draw at the observer's current success probability.
inline int observer_respond(const SimulatedObserver& o, double x, std::size_t trialIndex, std::mt19937_64& rng) {
  require(o.design().contains(x), ErrorCode::DomainError, "stimulus level outside the design domain");
  require(trialIndex >= 1, ErrorCode::InvalidArgument, "trial index starts at 1");
  const double p = o.probability(x, trialIndex);
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p ? 1 : 0;
}

// ---------------------------------------------------------------------------
// Sampling schemes

struct UniformInterval {
  double lo;
  double hi;
};
struct ConstantStimuli {
  std::vector<double> levels;
};
struct Adaptive {
  PlacementPolicy policy;
};

struct SamplingScheme {
  std::variant<UniformInterval, ConstantStimuli, Adaptive> kind;
  std::string label;

  bool adaptive() const noexcept { return std::holds_alternative<Adaptive>(kind); }

  void validate(const Design& d) const {
    std::visit(
        [&](const auto& k) {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, UniformInterval>) {
            require(k.lo < k.hi && d.contains(k.lo) && d.contains(k.hi), ErrorCode::InvalidArgument,
                    "uniform interval must be non-empty and inside the design domain");
          } else if constexpr (std::is_same_v<K, ConstantStimuli>) {
            require(!k.levels.empty(), ErrorCode::InvalidArgument, "constant stimuli need at least one level");
            for (double x : k.levels)
              require(d.contains(x), ErrorCode::InvalidArgument, "constant-stimulus level outside the design domain");
          } else {
            k.policy.validate(d);
          }
        },
        kind);
  }
};

enum class Spread { Wide, Medium, Tight };

inline const char* to_string(Spread s) {
  switch (s) {
    case Spread::Wide: return "wide";
    case Spread::Medium: return "medium";
    case Spread::Tight: return "tight";
  }
  return "?";
}

/// Performance bounds (proportion correct) for each spread.
inline std::pair<double, double> spread_bounds(Spread s) {
  switch (s) {
    case Spread::Wide: return {0.5001, 0.985};
    case Spread::Medium: return {0.55, 0.95};
    case Spread::Tight: return {0.70, 0.85};
  }
  return {0.0, 0.0};
}

/// Stimulus interval on which the true observer performs within the spread's
/// bounds. Raises OutOfRange when a bound is not attainable.
inline std::pair<double, double> scheme_interval(const Params& truth, Spread s, const Design& d) {
  const auto [lo, hi] = spread_bounds(s);
  return {psi_inverse(lo, truth, d), psi_inverse(hi, truth, d)};
}

inline constexpr std::size_t kConstantStimulusLevels = 6;

/// `count` equally spaced levels including both ends.
inline std::vector<double> constant_levels(double lo, double hi, std::size_t count = kConstantStimulusLevels) {
  require(count >= 2 && lo < hi, ErrorCode::InvalidArgument, "constant_levels needs lo < hi and count >= 2");
  std::vector<double> v(count);
  for (std::size_t i = 0; i < count; ++i)
    v[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1);
  v.back() = hi;
  return v;
}

inline SamplingScheme uniform_scheme(const Params& truth, Spread s, const Design& d) {
  const auto [lo, hi] = scheme_interval(truth, s, d);
  return {UniformInterval{lo, hi}, std::string("uniform-") + to_string(s)};
}

inline SamplingScheme constant_scheme(const Params& truth, Spread s, const Design& d,
                                      std::size_t count = kConstantStimulusLevels) {
  const auto [lo, hi] = scheme_interval(truth, s, d);
  return {ConstantStimuli{constant_levels(lo, hi, count)}, std::string("constant-") + to_string(s)};
}

inline SamplingScheme adaptive_scheme(PlacementPolicy p, std::string label) {
  return {Adaptive{std::move(p)}, std::move(label)};
}

// ---------------------------------------------------------------------------
// Studies

struct PosteriorMeanMu {};
struct PosteriorMeanNu {};
struct ThresholdMean {
  double alpha;
};

struct Estimand {
  std::variant<PosteriorMeanMu, PosteriorMeanNu, ThresholdMean> kind;

  static Estimand mu() { return {PosteriorMeanMu{}}; }
  static Estimand nu() { return {PosteriorMeanNu{}}; }
  static Estimand threshold(double alpha) { return {ThresholdMean{alpha}}; }

  std::string label() const {
    if (std::holds_alternative<PosteriorMeanMu>(kind)) return "mu";
    if (std::holds_alternative<PosteriorMeanNu>(kind)) return "nu";
    return "threshold(" + std::to_string(std::get<ThresholdMean>(kind).alpha) + ")";
  }
};

/// Level at which a Weibull forced-choice function reaches `prob`.
inline double weibull_inverse(double prob, const WeibullParams& w, double gamma) {
  const double core = (prob - gamma * (1.0 - w.lambda) - w.lambda * gamma) / ((1.0 - w.lambda) * (1.0 - gamma));
  if (!(core > 0.0 && core < 1.0)) fail(ErrorCode::OutOfRange, "weibull_inverse: level not attainable");
  return w.alpha * std::pow(-std::log1p(-core), 1.0 / w.beta);
}

inline double estimand_truth(const Estimand& e, const SimulatedObserver& o) {
  if (const auto* t = std::get_if<ThresholdMean>(&e.kind)) {
    if (const auto* w = std::get_if<WeibullObserver>(&o.kind())) return weibull_inverse(t->alpha, w->truth, o.design().gamma());
    return psi_inverse(t->alpha, o.initial_params(), o.design());
  }
  const Params p = o.initial_params();
  return std::holds_alternative<PosteriorMeanMu>(e.kind) ? p.mu : p.nu;
}

inline double estimand_value(const Estimand& e, const SampleSet& posterior, const Design& d) {
  if (const auto* t = std::get_if<ThresholdMean>(&e.kind))
    return weighted_mean(functional_samples(posterior, Functional::threshold(t->alpha), d).samples);
  const Params m = weighted_mean(posterior);
  return std::holds_alternative<PosteriorMeanMu>(e.kind) ? m.mu : m.nu;
}

struct StudyConfig {
  SimulatedObserver observer;
  SamplingScheme scheme;
  GaussianPrior prior;
  std::vector<std::size_t> trialCounts{50, 100, 200, 300, 500};
  std::size_t replications = 150;
  Estimand estimand = Estimand::mu();
  std::size_t estimateSamples = 2000;  // importance samples for the posterior mean

  void validate() const {
    require(replications >= 1, ErrorCode::InvalidArgument, "replications must be at least 1");
    require(!trialCounts.empty(), ErrorCode::InvalidArgument, "trialCounts must not be empty");
    for (std::size_t n : trialCounts) require(n >= 1, ErrorCode::InvalidArgument, "trial counts must be positive");
    require(estimateSamples >= 100, ErrorCode::InvalidArgument, "estimateSamples must be at least 100");
    prior.validate();
    scheme.validate(observer.design());
  }
};

struct MseRow {
  std::string scheme;
  std::size_t trials = 0;
  double meanEstimate = 0.0;
  double mse = 0.0;
  std::size_t reps = 0;  // replications that produced an estimate
  std::size_t failures = 0;
  std::vector<double> squaredErrors;  // per successful replication, in replication order
};

struct MseReport {
  std::string estimand;
  double truth = 0.0;
  std::vector<MseRow> rows;

  const MseRow& at(const std::string& scheme, std::size_t trials) const {
    for (const auto& r : rows)
      if (r.scheme == scheme && r.trials == trials) return r;
    fail(ErrorCode::NotFound, "no report row for " + scheme + " at " + std::to_string(trials) + " trials");
  }

  void append(const MseReport& other) { rows.insert(rows.end(), other.rows.begin(), other.rows.end()); }

  std::string to_csv() const {
    std::ostringstream os;
    os.precision(17);
    os << "scheme,trials,mean_estimate,mse,reps,failures\n";
    for (const auto& r : rows)
      os << r.scheme << ',' << r.trials << ',' << r.meanEstimate << ',' << r.mse << ',' << r.reps << ',' << r.failures
         << '\n';
    return os.str();
  }
};

/// Refit from the original prior, warm-started at the previous mode; falls
/// back to the full multi-start when the warm path fails.
inline LaplacePosterior refit(const Dataset& data, const GaussianPrior& prior, const Params& warm) {
  FitOptions quick;
  quick.warmStart = warm;
  quick.multiStart = false;
  try {
    return laplace_fit(data, prior, quick);
  } catch (const Error&) {
    FitOptions full;
    full.warmStart = warm;
    return laplace_fit(data, prior, full);
  }
}

namespace detail {

// Per-replication stimulus source.
class StimulusSource {
 public:
  StimulusSource(const SamplingScheme& s, const Design& d, std::uint64_t seed) : scheme_(s), design_(d), rng_(seed) {}

  double next(const LaplacePosterior& lp, std::size_t t) {
    return std::visit(
        [&](const auto& k) -> double {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, UniformInterval>) {
            return std::uniform_real_distribution<double>(k.lo, k.hi)(rng_);
          } else if constexpr (std::is_same_v<K, ConstantStimuli>) {
            // Levels are presented in shuffled blocks, each level once per block.
            if (block_.empty()) {
              block_ = k.levels;
              std::shuffle(block_.begin(), block_.end(), rng_);
            }
            const double x = block_.back();
            block_.pop_back();
            return x;
          } else {
            return select_next(k.policy, lp, design_, derive_seed(selectSeed_, t)).x;
          }
        },
        scheme_.kind);
  }

  void set_select_seed(std::uint64_t s) { selectSeed_ = s; }

 private:
  const SamplingScheme& scheme_;
  Design design_;
  std::mt19937_64 rng_;
  std::uint64_t selectSeed_ = 0;
  std::vector<double> block_;
};

struct ReplicationResult {
  std::vector<std::vector<double>> estimates;  // [checkpoint][estimand]
  std::vector<bool> ok;                        // per checkpoint
  std::size_t fitFailures = 0;
};

// Streams for one replication, derived from (master, replication index).
enum Stream : std::uint64_t { kObserverStream = 1, kSchemeStream = 2, kSelectStream = 3, kEstimateStream = 4 };

inline ReplicationResult run_replication(const StudyConfig& cfg, const std::vector<Estimand>& estimands,
                                         const std::vector<std::size_t>& checkpoints, std::uint64_t repSeed) {
  const Design& d = cfg.observer.design();
  std::mt19937_64 obsRng(derive_seed(repSeed, kObserverStream));
  StimulusSource source(cfg.scheme, d, derive_seed(repSeed, kSchemeStream));
  source.set_select_seed(derive_seed(repSeed, kSelectStream));

  ReplicationResult out;
  out.estimates.assign(checkpoints.size(), std::vector<double>(estimands.size(), 0.0));
  out.ok.assign(checkpoints.size(), false);

  Dataset data(d);
  LaplacePosterior lp = laplace_from_prior(cfg.prior);
  bool lpCurrent = true;
  std::size_t next = 0;
  const std::size_t total = checkpoints.back();
  for (std::size_t t = 1; t <= total; ++t) {
    const double x = source.next(lp, t);
    data.add(x, observer_respond(cfg.observer, x, t, obsRng));
    lpCurrent = false;
    if (cfg.scheme.adaptive()) {
      try {
        lp = refit(data, cfg.prior, lp.mode);
        lpCurrent = true;
      } catch (const Error&) {
        ++out.fitFailures;  // keep placing from the last good posterior
      }
    }
    if (t != checkpoints[next]) continue;
    try {
      if (!lpCurrent) lp = refit(data, cfg.prior, lp.mode);
      lpCurrent = true;
      const SampleSet post =
          importance_posterior(data, cfg.prior, lp, cfg.estimateSamples, derive_seed(repSeed, kEstimateStream + t));
      for (std::size_t e = 0; e < estimands.size(); ++e) out.estimates[next][e] = estimand_value(estimands[e], post, d);
      out.ok[next] = true;
    } catch (const Error&) {
      ++out.fitFailures;
    }
    ++next;
  }
  return out;
}

}  // namespace detail

/// One simulation per replication up to the largest trial count; estimates
/// are recorded at every requested count along the way, so rows for
/// different counts share their early trials.
inline std::vector<MseReport> run_study_multi(const StudyConfig& cfg, const std::vector<Estimand>& estimands,
                                              std::uint64_t seed) {
  cfg.validate();
  require(!estimands.empty(), ErrorCode::InvalidArgument, "run_study needs at least one estimand");
  std::vector<std::size_t> checkpoints = cfg.trialCounts;
  std::sort(checkpoints.begin(), checkpoints.end());
  checkpoints.erase(std::unique(checkpoints.begin(), checkpoints.end()), checkpoints.end());

  std::vector<detail::ReplicationResult> reps;
  reps.reserve(cfg.replications);
  for (std::size_t r = 0; r < cfg.replications; ++r)
    reps.push_back(detail::run_replication(cfg, estimands, checkpoints, derive_seed(seed, r)));

  std::vector<MseReport> out;
  for (std::size_t e = 0; e < estimands.size(); ++e) {
    MseReport rep;
    rep.estimand = estimands[e].label();
    rep.truth = estimand_truth(estimands[e], cfg.observer);
    for (std::size_t c = 0; c < checkpoints.size(); ++c) {
      MseRow row;
      row.scheme = cfg.scheme.label;
      row.trials = checkpoints[c];
      double sum = 0.0;
      for (const auto& rr : reps) {
        if (!rr.ok[c]) {
          ++row.failures;
          continue;
        }
        const double v = rr.estimates[c][e];
        sum += v;
        row.squaredErrors.push_back((v - rep.truth) * (v - rep.truth));
      }
      row.reps = row.squaredErrors.size();
      if (row.reps > 0) {
        row.meanEstimate = sum / static_cast<double>(row.reps);
        for (double s : row.squaredErrors) row.mse += s;
        row.mse /= static_cast<double>(row.reps);
      } else {
        row.meanEstimate = row.mse = std::numeric_limits<double>::quiet_NaN();
      }
      rep.rows.push_back(std::move(row));
    }
    out.push_back(std::move(rep));
  }
  return out;
}

inline MseReport run_study(const StudyConfig& cfg, std::uint64_t seed) {
  return run_study_multi(cfg, {cfg.estimand}, seed).front();
}

/// Pool-adjacent-violators fit of a non-increasing sequence (equal weights).
inline std::vector<double> isotonic_decreasing(const std::vector<double>& y) {
  std::vector<double> level;
  std::vector<std::size_t> count;
  for (double v : y) {
    level.push_back(v);
    count.push_back(1);
    while (level.size() > 1 && level[level.size() - 2] < level.back()) {
      const std::size_t n = count[count.size() - 2] + count.back();
      const double m = (level[level.size() - 2] * count[count.size() - 2] + level.back() * count.back()) / n;
      level.pop_back();
      count.pop_back();
      level.back() = m;
      count.back() = n;
    }
  }
  std::vector<double> out;
  for (std::size_t b = 0; b < level.size(); ++b) out.insert(out.end(), count[b], level[b]);
  return out;
}

/// Bootstrap probability that mean(a) <= mean(b) (independent resampling of
/// each group).
inline double bootstrap_prob_not_greater(const std::vector<double>& a, const std::vector<double>& b, std::size_t draws,
                                         std::uint64_t seed) {
  require(!a.empty() && !b.empty(), ErrorCode::InvalidArgument, "bootstrap needs non-empty groups");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> ia(0, a.size() - 1), ib(0, b.size() - 1);
  std::size_t hits = 0;
  for (std::size_t k = 0; k < draws; ++k) {
    double sa = 0.0, sb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) sa += a[ia(rng)];
    for (std::size_t i = 0; i < b.size(); ++i) sb += b[ib(rng)];
    if (sa / static_cast<double>(a.size()) <= sb / static_cast<double>(b.size())) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(draws);
}

// ---------------------------------------------------------------------------
// Standard study setups

struct StudySetup {
  Params truth = params_from_natural(3.5, std::exp(0.5), 0.02);
  Design design = Design::two_afc(-4.0, 11.0);
  std::vector<std::size_t> trialCounts{50, 100, 200, 300, 500};
  std::size_t replications = 150;
  std::size_t policySamples = 1000;
  int gridPoints = 45;
  int refineRounds = 2;
  std::size_t estimateSamples = 2000;

  GaussianPrior prior(double muMean = 3.0, double muSd = std::sqrt(0.5)) const {
    return GaussianPrior::make({muMean, 0.0, logit(0.02)}, {muSd, std::sqrt(0.5), 0.3});
  }

  PlacementPolicy policy() const {
    PlacementPolicy p = PlacementPolicy::psi(design, policySamples, gridPoints);
    p.grid.refineRounds = refineRounds;
    return p;
  }

  StudyConfig config(SamplingScheme scheme, GaussianPrior pr) const {
    StudyConfig c{SimulatedObserver::gaussian(truth, design), std::move(scheme), pr};
    c.trialCounts = trialCounts;
    c.replications = replications;
    c.estimateSamples = estimateSamples;
    return c;
  }
};

/// Psi scheme against the three robustness priors: mu ~ N(3, sqrt .5),
/// N(2, sqrt .5) and N(3, 1). Scheme labels name the prior.
inline MseReport robustness_study(std::uint64_t seed, const StudySetup& setup = {}) {
  const std::array<std::pair<std::string, GaussianPrior>, 3> priors{{
      {"prior-N(3,sqrt.5)", setup.prior(3.0, std::sqrt(0.5))},
      {"prior-N(2,sqrt.5)", setup.prior(2.0, std::sqrt(0.5))},
      {"prior-N(3,1)", setup.prior(3.0, 1.0)},
  }};
  MseReport out;
  for (std::size_t i = 0; i < priors.size(); ++i) {
    StudyConfig cfg = setup.config(adaptive_scheme(setup.policy(), priors[i].first), priors[i].second);
    MseReport r = run_study(cfg, derive_seed(seed, i));
    out.estimand = r.estimand;
    out.truth = r.truth;
    out.append(r);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Weibull matching

struct WeibullMatchOptions {
  int panels = 2048;
  int restarts = 5;
  int maxIterations = 4000;
  double tolerance = 1e-12;  // simplex objective spread
};

namespace detail {

// Level above which a forced-choice curve with given ceiling gap stays within
// `eps` of its ceiling.
inline constexpr double kCeilingEps = 1e-6;

inline double gaussian_ceiling_level(const Params& p, double gamma) {
  const double span = (1.0 - gamma) * (1.0 - p.lambda());
  const double tail = kCeilingEps / span;
  return p.mu + p.sigma() * normal_quantile(1.0 - tail, tail);
}

inline double weibull_ceiling_level(const WeibullParams& w, double gamma) {
  const double span = (1.0 - gamma) * (1.0 - w.lambda);
  return w.alpha * std::pow(std::log(span / kCeilingEps), 1.0 / w.beta);
}

struct NelderMeadResult {
  std::array<double, 2> x;
  double f;
  bool converged;
};

template <class F>
NelderMeadResult nelder_mead(F&& f, std::array<double, 2> x0, double step, int maxIter, double tol) {
  using P = std::array<double, 2>;
  std::array<P, 3> s{x0, P{x0[0] + step, x0[1]}, P{x0[0], x0[1] + step}};
  std::array<double, 3> fv{f(s[0]), f(s[1]), f(s[2])};
  const auto lerp = [](const P& a, const P& b, double t) { return P{a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])}; };
  for (int it = 0; it < maxIter; ++it) {
    std::array<int, 3> o{0, 1, 2};
    std::sort(o.begin(), o.end(), [&](int a, int b) { return fv[a] < fv[b]; });
    const P best = s[o[0]], mid = s[o[1]], worst = s[o[2]];
    const double fb = fv[o[0]], fm = fv[o[1]], fw = fv[o[2]];
    const double size = std::max(std::hypot(mid[0] - best[0], mid[1] - best[1]), std::hypot(worst[0] - best[0], worst[1] - best[1]));
    if (fw - fb <= tol * (1.0 + std::abs(fb)) && size < 1e-7) return {best, fb, true};
    const P c{0.5 * (best[0] + mid[0]), 0.5 * (best[1] + mid[1])};
    const P xr = lerp(c, worst, -1.0);
    const double fr = f(xr);
    P repl = worst;
    double frepl = fw;
    if (fr < fb) {
      const P xe = lerp(c, worst, -2.0);
      const double fe = f(xe);
      repl = fe < fr ? xe : xr;
      frepl = std::min(fe, fr);
    } else if (fr < fm) {
      repl = xr;
      frepl = fr;
    } else {
      const P xc = fr < fw ? lerp(c, xr, 0.5) : lerp(c, worst, 0.5);
      const double fc = f(xc);
      if (fc < std::min(fr, fw)) {
        repl = xc;
        frepl = fc;
      } else {
        s = {best, lerp(best, mid, 0.5), lerp(best, worst, 0.5)};
        fv = {fb, f(s[1]), f(s[2])};
        continue;
      }
    }
    s = {best, mid, repl};
    fv = {fb, fm, frepl};
  }
  int b = 0;
  for (int i = 1; i < 3; ++i)
    if (fv[i] < fv[b]) b = i;
  return {s[b], fv[b], false};
}

}  // namespace detail

/// L2 distance squared between the Gaussian-shaped and Weibull forced-choice
/// functions on [0, x_hi], x_hi being where both are within 1e-6 of ceiling.
inline double weibull_l2(const Params& target, const WeibullParams& w, double gamma, int panels = 2048) {
  const double hi = std::max(detail::gaussian_ceiling_level(target, gamma), detail::weibull_ceiling_level(w, gamma));
  if (!(hi > 0.0)) return 0.0;
  Design d = Design::forced_choice(gamma, 0.0, hi);
  return simpson(
      [&](double x) {
        const double diff = psi(x, target, d) - psi_weibull(x, w, gamma);
        return diff * diff;
      },
      0.0, hi, panels);
}

/// Weibull parameters (sharing the target's lapse) closest in L2 to the
/// Gaussian-shaped function. Nelder-Mead in (log alpha, log beta) from
/// deterministic starts; the best converged start wins.
inline WeibullParams match_weibull(const Params& target, double gamma, double lambdaShared,
                                   const WeibullMatchOptions& opt = {}) {
  require(target.finite(), ErrorCode::DomainError, "match_weibull: target must be finite");
  require(gamma > 0.0 && gamma < 1.0, ErrorCode::DomainError, "match_weibull: gamma must lie in (0,1)");
  require(lambdaShared >= 0.0 && lambdaShared < 1.0, ErrorCode::DomainError, "match_weibull: lapse must lie in [0,1)");
  Params t = target;
  t.eta = lambdaShared > 0.0 ? logit(lambdaShared) : -std::numeric_limits<double>::infinity();

  const auto objective = [&](const std::array<double, 2>& v) {
    if (!std::isfinite(v[0]) || !std::isfinite(v[1]) || std::abs(v[0]) > 50.0 || std::abs(v[1]) > 6.0)
      return std::numeric_limits<double>::infinity();
    return weibull_l2(t, {std::exp(v[0]), std::exp(v[1]), lambdaShared}, gamma, opt.panels);
  };

  const double anchor = std::log(std::max(t.mu + 0.5 * t.sigma(), 1e-3));
  const std::array<std::array<double, 2>, 5> starts{{{anchor, std::log(2.0)},
                                                     {anchor, std::log(4.0)},
                                                     {anchor, std::log(8.0)},
                                                     {anchor + 0.3, std::log(3.0)},
                                                     {anchor - 0.3, std::log(3.0)}}};
  std::optional<detail::NelderMeadResult> best;
  const int n = std::min<int>(opt.restarts, static_cast<int>(starts.size()));
  for (int i = 0; i < n; ++i) {
    auto r = detail::nelder_mead(objective, starts[static_cast<std::size_t>(i)], 0.2, opt.maxIterations, opt.tolerance);
    if (!r.converged) continue;
    if (!best || r.f < best->f) best = r;
  }
  if (!best) fail(ErrorCode::NonConvergence, "match_weibull: no restart converged");
  return {std::exp(best->x[0]), std::exp(best->x[1]), lambdaShared};
}

/// Draws targets from the prior and matches each; returns log beta values.
/// Prior on the Gaussian-shaped observer used for the Weibull comparison:
/// threshold around 6 with a somewhat steep expected slope (nu mean -0.4).
inline GaussianPrior weibull_matching_prior() {
  return GaussianPrior::make({6.0, -0.4, logit(0.02)}, {std::sqrt(0.5), std::sqrt(0.5), 0.3});
}

inline std::vector<double> prior_weibull_log_beta(const GaussianPrior& prior, std::size_t count, double gamma,
                                                  std::uint64_t seed) {
  const SampleSet s = sample_laplace(laplace_from_prior(prior), count, seed);
  std::vector<double> out;
  out.reserve(count);
  for (const Params& q : s.values) out.push_back(std::log(match_weibull(q, gamma, q.lambda()).beta));
  return out;
}

// ---------------------------------------------------------------------------
// Posterior predictive checks

struct Triplet {
  std::size_t t;
  double x;
  int r;
};

struct PpcRun {
  Dataset data;
  LaplacePosterior posterior;
  std::vector<Triplet> triplets;
};

/// Adaptive session against an observer, exported as (trial, level, response).
inline PpcRun ppc_dataset(const SimulatedObserver& obs, const PlacementPolicy& policy, const GaussianPrior& prior,
                          std::size_t trials, std::uint64_t seed) {
  const Design& d = obs.design();
  policy.validate(d);
  std::mt19937_64 rng(derive_seed(seed, detail::kObserverStream));
  PpcRun out{Dataset(d), laplace_from_prior(prior), {}};
  for (std::size_t t = 1; t <= trials; ++t) {
    const double x = select_next(policy, out.posterior, d, derive_seed(seed, 1000 + t)).x;
    const int r = observer_respond(obs, x, t, rng);
    out.data.add(x, r);
    out.triplets.push_back({t, x, r});
    out.posterior = refit(out.data, prior, out.posterior.mode);
  }
  return out;
}

enum class PpcSide { Lower, Upper, TwoSided };

struct PpcOptions {
  std::size_t replicates = 1000;
  std::size_t posteriorSamples = 4000;
  double blockFraction = 1.0 / 3.0;  // late block = last third of the trials
  double tail = 0.05;
  PpcSide side = PpcSide::TwoSided;
};

struct PpcResult {
  double observed = 0.0;             // late-block correct rate in the data
  std::vector<double> replicated;    // same statistic per replicate, sorted
  double lowerQuantile = 0.0;        // replicate quantile at `tail`
  double upperQuantile = 0.0;        // replicate quantile at 1 - `tail`
  bool below = false;
  bool above = false;
  bool flagged = false;
};

inline double late_block_rate(const Dataset& data, double fraction) {
  const std::size_t n = data.size();
  const auto start = n - std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n))));
  double hits = 0.0;
  for (std::size_t i = start; i < n; ++i) hits += data.trials()[i].r;
  return hits / static_cast<double>(n - start);
}

/// Compares the late-block correct rate of the data with replicates drawn
/// from the posterior predictive distribution at the same stimulus levels.
inline PpcResult ppc_late_block_test(const Dataset& data, const GaussianPrior& prior, const LaplacePosterior& lp,
                                     const PpcOptions& opt, std::uint64_t seed) {
  require(data.size() >= 3, ErrorCode::InvalidArgument, "posterior predictive check needs at least 3 trials");
  require(opt.tail > 0.0 && opt.tail < 0.5, ErrorCode::DomainError, "tail must lie in (0, 0.5)");
  const SampleSet post = importance_posterior(data, prior, lp, opt.posteriorSamples, derive_seed(seed, 1));
  std::vector<double> xs;
  xs.reserve(data.size());
  for (const auto& t : data.trials()) xs.push_back(t.x);
  const auto reps = posterior_predictive_simulate(post, xs, opt.replicates, data.design(), derive_seed(seed, 2));

  PpcResult out;
  out.observed = late_block_rate(data, opt.blockFraction);
  out.replicated.reserve(reps.size());
  for (const auto& r : reps) out.replicated.push_back(late_block_rate(r, opt.blockFraction));
  std::sort(out.replicated.begin(), out.replicated.end());
  const std::vector<double> ones(out.replicated.size(), 1.0);
  const auto q = weighted_quantiles(out.replicated, ones, std::vector<double>{opt.tail, 1.0 - opt.tail});
  out.lowerQuantile = q[0];
  out.upperQuantile = q[1];
  out.below = out.observed < out.lowerQuantile;
  out.above = out.observed > out.upperQuantile;
  out.flagged = (opt.side != PpcSide::Upper && out.below) || (opt.side != PpcSide::Lower && out.above);
  return out;
}

}  // namespace apsy
