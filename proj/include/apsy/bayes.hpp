#pragma once

// Prior, likelihood, Laplace-approximated posterior, sampling, importance
// resampling, marginalization and posterior summaries.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <optional>
#include <random>
#include <vector>

#include "apsy/error.hpp"
#include "apsy/numerics.hpp"
#include "apsy/psychometric.hpp"
#include "apsy/samples.hpp"

namespace apsy {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline Vec3 to_vec(const Params& p) { return {p.mu, p.nu, p.eta}; }
inline Params to_params(const Vec3& v) { return {v[0], v[1], v[2]}; }

/// Independent Gaussians on (mu, nu, eta).
struct GaussianPrior {
  std::array<double, 3> mean{0.0, 0.0, 0.0};
  std::array<double, 3> sd{1.0, 1.0, 1.0};

  static GaussianPrior make(std::array<double, 3> mean, std::array<double, 3> sd) {
    GaussianPrior p{mean, sd};
    p.validate();
    return p;
  }

  void validate() const {
    for (int i = 0; i < 3; ++i) {
      require(std::isfinite(mean[i]), ErrorCode::DomainError, "prior mean must be finite");
      require(sd[i] > 0.0 && std::isfinite(sd[i]), ErrorCode::DomainError, "prior sd must be positive");
    }
  }

  Params mean_params() const noexcept { return {mean[0], mean[1], mean[2]}; }

  double log_density(const Params& p) const noexcept {
    const Vec3 v = to_vec(p);
    double acc = -1.5 * std::log(2.0 * std::numbers::pi);
    for (int i = 0; i < 3; ++i) {
      const double u = (v[i] - mean[i]) / sd[i];
      acc -= 0.5 * u * u + std::log(sd[i]);
    }
    return acc;
  }

  Vec3 standardize(const Params& p) const noexcept {
    const Vec3 v = to_vec(p);
    return {(v[0] - mean[0]) / sd[0], (v[1] - mean[1]) / sd[1], (v[2] - mean[2]) / sd[2]};
  }
  Params unstandardize(const Vec3& u) const noexcept {
    return {mean[0] + sd[0] * u[0], mean[1] + sd[1] * u[1], mean[2] + sd[2] * u[2]};
  }

  friend bool operator==(const GaussianPrior&, const GaussianPrior&) = default;
};

struct TrialRecord {
  double x = 0.0;
  int r = 0;
  std::size_t index = 1;
  friend bool operator==(const TrialRecord&, const TrialRecord&) = default;
};

/// Ordered trial log for one design; indices are consecutive from 1.
class Dataset {
 public:
  explicit Dataset(Design d) : design_(d) {}

  const Design& design() const noexcept { return design_; }
  const std::vector<TrialRecord>& trials() const noexcept { return trials_; }
  std::size_t size() const noexcept { return trials_.size(); }
  bool empty() const noexcept { return trials_.empty(); }

  void add(double x, int r) {
    require(r == 0 || r == 1, ErrorCode::DomainError, "response must be 0 or 1");
    require(std::isfinite(x), ErrorCode::DomainError, "stimulus level must be finite");
    require(design_.contains(x), ErrorCode::DomainError, "stimulus level outside the design domain");
    trials_.push_back({x, r, trials_.size() + 1});
  }

  /// First `n` trials.
  Dataset prefix(std::size_t n) const {
    Dataset out(design_);
    out.trials_.assign(trials_.begin(), trials_.begin() + static_cast<std::ptrdiff_t>(std::min(n, size())));
    return out;
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;

 private:
  Design design_;
  std::vector<TrialRecord> trials_;
};

// ---------------------------------------------------------------------------
// Likelihood

inline constexpr double kLogFloor = 1e-300;

struct LikelihoodValue {
  double value = 0.0;
  bool clamped = false;  // some probability hit exactly 0 or 1 and was floored
};

inline LikelihoodValue log_likelihood_checked(const Dataset& data, const Params& par) {
  LikelihoodValue out;
  for (const auto& t : data.trials()) {
    const PsiEval e = psi_eval(t.x, par, data.design());
    const double prob = t.r ? e.psi : e.one_minus_psi;
    if (prob < kLogFloor) {
      out.clamped = true;
      out.value += std::log(kLogFloor);
    } else {
      out.value += std::log(prob);
    }
  }
  return out;
}

inline double log_likelihood(const Dataset& data, const Params& par) { return log_likelihood_checked(data, par).value; }

/// Log-likelihood and its analytic gradient with respect to (mu, nu, eta).
inline double log_likelihood_grad(const Dataset& data, const Params& par, Vec3& grad) {
  grad.setZero();
  double value = 0.0;
  const double sigma = par.sigma();
  const double lam = par.lambda();
  const double dlam = lam * (1.0 - lam);
  for (const auto& t : data.trials()) {
    const PsiEval e = psi_eval(t.x, par, data.design());
    const double prob = t.r ? e.psi : e.one_minus_psi;
    if (prob < kLogFloor) {
      value += std::log(kLogFloor);
      continue;
    }
    value += std::log(prob);
    const double coef = t.r ? 1.0 / e.psi : -1.0 / e.one_minus_psi;
    const double phi = normal_pdf(e.z);
    grad[0] += coef * e.dpsi_dphi * (-phi / sigma);
    grad[1] += coef * e.dpsi_dphi * (-phi * e.z);
    grad[2] += coef * e.dpsi_dlambda * dlam;
  }
  return value;
}

inline double log_posterior_unnorm(const Dataset& data, const GaussianPrior& prior, const Params& par) {
  return log_likelihood(data, par) + prior.log_density(par);
}

// ---------------------------------------------------------------------------
// Gaussian density helper

/// Multivariate normal in (mu, nu, eta) with a cached Cholesky factor.
class Gaussian3 {
 public:
  Gaussian3(const Vec3& mean, const Mat3& cov) : mean_(mean), llt_(cov) {
    if (llt_.info() != Eigen::Success) fail(ErrorCode::NonPositiveDefiniteHessian, "covariance is not positive definite");
    const Mat3 L = llt_.matrixL();
    logdet_ = 2.0 * L.diagonal().array().log().sum();
  }

  double log_density(const Params& p) const {
    const Vec3 d = to_vec(p) - mean_;
    const Vec3 w = llt_.matrixL().solve(d);
    return -0.5 * w.squaredNorm() - 0.5 * logdet_ - 1.5 * std::log(2.0 * std::numbers::pi);
  }

  Mat3 lower() const { return llt_.matrixL(); }
  double log_det() const noexcept { return logdet_; }

 private:
  Vec3 mean_;
  Eigen::LLT<Mat3> llt_;
  double logdet_ = 0.0;
};

// ---------------------------------------------------------------------------
// Laplace approximation

struct LaplacePosterior {
  Params mode;
  Mat3 covariance = Mat3::Identity();
  double logPosteriorAtMode = 0.0;

  Vec3 sd() const { return covariance.diagonal().array().sqrt(); }
  Gaussian3 density() const { return Gaussian3(to_vec(mode), covariance); }
};

/// The Gaussian prior is its own Laplace approximation.
inline LaplacePosterior laplace_from_prior(const GaussianPrior& prior) {
  LaplacePosterior lp;
  lp.mode = prior.mean_params();
  lp.covariance = Mat3::Zero();
  for (int i = 0; i < 3; ++i) lp.covariance(i, i) = prior.sd[i] * prior.sd[i];
  lp.logPosteriorAtMode = prior.log_density(lp.mode);
  return lp;
}

struct FitOptions {
  std::optional<Params> warmStart;  // tried before the deterministic starts
  bool multiStart = true;           // prior mean plus +-1 sd in mu and nu
  int maxIterations = 200;
  double gradTol = 1e-6;    // in prior-standardized coordinates
  double hessianStep = 1e-4;
  int polishIterations = 8;
};

namespace detail {

// Negative log posterior in standardized coordinates u = (theta - m) / s.
struct StandardizedObjective {
  const Dataset& data;
  const GaussianPrior& prior;
  mutable long evaluations = 0;

  double operator()(const Vec3& u, Vec3& g) const {
    ++evaluations;
    const Params p = prior.unstandardize(u);
    Vec3 gl;
    const double ll = log_likelihood_grad(data, p, gl);
    const double value = -(ll + prior.log_density(p));
    for (int i = 0; i < 3; ++i) g[i] = -gl[i] * prior.sd[i] + u[i];
    return value;
  }

  Mat3 hessian(const Vec3& u, double h) const {
    Mat3 H;
    Vec3 gp, gm;
    for (int j = 0; j < 3; ++j) {
      Vec3 up = u, um = u;
      up[j] += h;
      um[j] -= h;
      (*this)(up, gp);
      (*this)(um, gm);
      H.col(j) = (gp - gm) / (2.0 * h);
    }
    return 0.5 * (H + H.transpose());
  }
};

struct Descent {
  Vec3 u;
  double f;
  Vec3 g;
  bool converged;
};

inline Descent bfgs(const StandardizedObjective& obj, Vec3 u, const FitOptions& opt, double tol) {
  Vec3 g;
  double f = obj(u, g);
  Mat3 Hinv = Mat3::Identity();
  bool identity = true;
  for (int it = 0; it < opt.maxIterations && g.norm() >= tol; ++it) {
    Vec3 p = -Hinv * g;
    if (g.dot(p) >= 0.0) {
      Hinv.setIdentity();
      identity = true;
      p = -g;
    }
    if (p.norm() > 3.0) p *= 3.0 / p.norm();
    const double slope = g.dot(p);
    double t = 1.0;
    Vec3 un, gn;
    double fn = 0.0;
    bool accepted = false;
    for (int ls = 0; ls < 50; ++ls) {
      un = u + t * p;
      fn = obj(un, gn);
      if (std::isfinite(fn) && fn <= f + 1e-4 * t * slope) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      if (identity) break;  // stalled; leave it to the Newton polish
      Hinv.setIdentity();
      identity = true;
      continue;
    }
    const Vec3 s = un - u;
    const Vec3 y = gn - g;
    const double sy = s.dot(y);
    if (sy > 1e-14) {
      const double rho = 1.0 / sy;
      const Mat3 I = Mat3::Identity();
      Hinv = (I - rho * s * y.transpose()) * Hinv * (I - rho * y * s.transpose()) + rho * s * s.transpose();
      identity = false;
    }
    u = un;
    f = fn;
    g = gn;
  }
  return {u, f, g, g.norm() < tol};
}

// Newton steps on the finite-difference Hessian. Acceptance is judged on the
// gradient norm because near the optimum function differences drown in
// round-off long before the gradient does.
inline Descent newton_polish(const StandardizedObjective& obj, Descent d, const FitOptions& opt) {
  for (int it = 0; it < opt.polishIterations && d.g.norm() >= opt.gradTol * 1e-3; ++it) {
    const Mat3 H = obj.hessian(d.u, opt.hessianStep);
    Eigen::LLT<Mat3> llt(H);
    if (llt.info() != Eigen::Success) break;
    Vec3 step = -llt.solve(d.g);
    bool improved = false;
    for (int ls = 0; ls < 10; ++ls) {
      Vec3 gn;
      const Vec3 un = d.u + step;
      const double fn = obj(un, gn);
      if (std::isfinite(fn) && gn.norm() < d.g.norm() && fn <= d.f + 1e-9 * (1.0 + std::abs(d.f))) {
        d = {un, fn, gn, false};
        improved = true;
        break;
      }
      step *= 0.5;
    }
    if (!improved) break;
  }
  d.converged = d.g.norm() < opt.gradTol;
  return d;
}

}  // namespace detail

/// Mode and inverse negative Hessian of the unnormalized log posterior.
inline LaplacePosterior laplace_fit(const Dataset& data, const GaussianPrior& prior, const FitOptions& opt = {}) {
  prior.validate();
  const detail::StandardizedObjective obj{data, prior};

  std::vector<Vec3> starts;
  if (opt.warmStart) starts.push_back(prior.standardize(*opt.warmStart));
  starts.push_back(Vec3::Zero());
  if (opt.multiStart) {
    starts.push_back({1.0, 0.0, 0.0});
    starts.push_back({-1.0, 0.0, 0.0});
    starts.push_back({0.0, 1.0, 0.0});
    starts.push_back({0.0, -1.0, 0.0});
  }

  // Near the optimum, round-off in the objective stalls the Armijo test long
  // before the gradient is small, so BFGS only gets close and Newton finishes.
  const double coarseTol = std::max(opt.gradTol, 1e-4);
  std::optional<detail::Descent> best;
  for (const Vec3& s : starts) {
    detail::Descent d = detail::bfgs(obj, s, opt, coarseTol);
    d = detail::newton_polish(obj, d, opt);
    if (!d.converged) d = detail::newton_polish(obj, detail::bfgs(obj, d.u, opt, opt.gradTol), opt);
    if (!d.converged) continue;
    if (!best || d.f < best->f) best = d;
  }
  if (!best) fail(ErrorCode::NonConvergence, "laplace_fit: no start reached the gradient tolerance");

  const Mat3 H = obj.hessian(best->u, opt.hessianStep);
  Eigen::LLT<Mat3> llt(H);
  if (llt.info() != Eigen::Success)
    fail(ErrorCode::NonPositiveDefiniteHessian, "laplace_fit: negative Hessian at the mode is not positive definite");
  const Mat3 covU = llt.solve(Mat3::Identity());
  const Vec3 s(prior.sd[0], prior.sd[1], prior.sd[2]);

  LaplacePosterior lp;
  lp.mode = prior.unstandardize(best->u);
  lp.covariance = s.asDiagonal() * covU * s.asDiagonal();
  lp.covariance = 0.5 * (lp.covariance + lp.covariance.transpose()).eval();
  lp.logPosteriorAtMode = -best->f;
  return lp;
}

/// Gradient of the unnormalized log posterior in prior-standardized units.
inline Vec3 standardized_gradient(const Dataset& data, const GaussianPrior& prior, const Params& p) {
  const detail::StandardizedObjective obj{data, prior};
  Vec3 g;
  obj(prior.standardize(p), g);
  return -g;
}

// ---------------------------------------------------------------------------
// Sampling

inline SampleSet sample_laplace(const LaplacePosterior& lp, std::size_t n, std::uint64_t seed) {
  require(n >= 1, ErrorCode::InvalidArgument, "sample_laplace: n must be at least 1");
  Eigen::LLT<Mat3> llt(lp.covariance);
  if (llt.info() != Eigen::Success) fail(ErrorCode::NonPositiveDefiniteHessian, "covariance is not positive definite");
  const Mat3 L = llt.matrixL();
  const Vec3 m = to_vec(lp.mode);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::vector<Params> draws(n);
  for (auto& q : draws) {
    const Vec3 z(normal(rng), normal(rng), normal(rng));
    q = to_params(m + L * z);
  }
  return SampleSet(std::move(draws));
}

using LogDensity = std::function<double(const Params&)>;

/// Normalized importance weights w_i proportional to src_w_i * P(q_i) / Q(q_i).
inline std::vector<double> importance_weights(const SampleSet& src, const LogDensity& target,
                                              const LogDensity& proposal) {
  const std::size_t n = src.size();
  std::vector<double> logw(n);
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    const double lt = target(src.values[i]);
    const double lq = proposal(src.values[i]);
    require(std::isfinite(lt) && std::isfinite(lq), ErrorCode::DomainError,
            "importance_weights: densities must be finite on every sample");
    logw[i] = lt - lq + std::log(src.weights[i]);
    mx = std::max(mx, logw[i]);
  }
  std::vector<double> w(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += (w[i] = std::exp(logw[i] - mx));
  for (double& v : w) v /= total;
  return w;
}

/// Importance proposal built on the Laplace fit: multivariate Student t with
/// `df` degrees of freedom around the mode, covariance inflated by scale^2.
/// Where the likelihood flattens (wide sigma, lapse) the posterior has
/// prior-like tails that a Gaussian proposal undercovers, leaving weights
/// with unbounded variance.
class LaplaceT {
 public:
  static constexpr double kDf = 4.0;
  static constexpr double kScale = std::numbers::sqrt2;

  explicit LaplaceT(const LaplacePosterior& lp, double df = kDf, double scale = kScale)
      : base_(lp.density()), mean_(to_vec(lp.mode)), df_(df), scale_(scale) {
    require(df > 0.0 && scale > 0.0, ErrorCode::DomainError, "LaplaceT: df and scale must be positive");
  }

  SampleSet sample(std::size_t n, std::uint64_t seed) const {
    require(n >= 1, ErrorCode::InvalidArgument, "LaplaceT: n must be at least 1");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    std::chi_squared_distribution<double> chi2(df_);
    const Mat3 L = base_.lower();
    std::vector<Params> draws(n);
    for (auto& q : draws) {
      const Vec3 z(normal(rng), normal(rng), normal(rng));
      q = to_params(mean_ + (scale_ * std::sqrt(df_ / chi2(rng))) * (L * z));
    }
    return SampleSet(std::move(draws));
  }

  // up to a constant, which self-normalized weights do not need
  double log_density(const Params& p) const {
    const Vec3 w = base_.lower().triangularView<Eigen::Lower>().solve((to_vec(p) - mean_) / scale_);
    return -0.5 * (df_ + 3.0) * std::log1p(w.squaredNorm() / df_);
  }

 private:
  Gaussian3 base_;
  Vec3 mean_;
  double df_, scale_;
};

/// Draws reweighted toward the exact posterior by self-normalized importance
/// sampling from the Laplace-centred t proposal.
inline SampleSet importance_posterior(const Dataset& data, const GaussianPrior& prior, const LaplacePosterior& lp,
                                      std::size_t n, std::uint64_t seed) {
  const LaplaceT q(lp);
  SampleSet s = q.sample(n, seed);
  s.weights = importance_weights(
      s, [&](const Params& p) { return log_posterior_unnorm(data, prior, p); },
      [&](const Params& p) { return q.log_density(p); });
  return s;
}

inline Params weighted_mean(const SampleSet& s) {
  Vec3 m = Vec3::Zero();
  for (std::size_t i = 0; i < s.size(); ++i) m += s.weights[i] * to_vec(s.values[i]);
  return to_params(m);
}

inline Mat3 weighted_covariance(const SampleSet& s) {
  const Vec3 m = to_vec(weighted_mean(s));
  Mat3 c = Mat3::Zero();
  for (std::size_t i = 0; i < s.size(); ++i) {
    const Vec3 d = to_vec(s.values[i]) - m;
    c += s.weights[i] * d * d.transpose();
  }
  return c;
}

/// Draws k < n distinct samples with inclusion probability proportional to
/// the importance weights (systematic probability-proportional-to-size
/// sampling over a random ordering; samples whose share exceeds 1/k are
/// taken with certainty). Output weights are uniform.
inline SampleSet importance_resample(const SampleSet& src, const LogDensity& target, const LogDensity& proposal,
                                     std::size_t k, std::uint64_t seed) {
  const std::size_t n = src.size();
  require(k >= 1 && k < n, ErrorCode::InvalidArgument, "importance_resample: requires 1 <= k < n");
  const std::vector<double> w = importance_weights(src, target, proposal);
  if (*std::max_element(w.begin(), w.end()) > 0.999)
    fail(ErrorCode::DegenerateWeights, "importance_resample: one sample carries more than 99.9% of the mass");
  const auto positive = static_cast<std::size_t>(std::count_if(w.begin(), w.end(), [](double v) { return v > 0.0; }));
  if (positive < k) fail(ErrorCode::DegenerateWeights, "importance_resample: fewer positive weights than k");

  std::vector<char> taken(n, 0);
  std::size_t remaining = k;
  for (;;) {
    double mass = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      if (!taken[i]) mass += w[i];
    bool any = false;
    for (std::size_t i = 0; i < n; ++i) {
      if (!taken[i] && remaining * w[i] >= mass) {
        taken[i] = 1;
        --remaining;
        any = true;
      }
    }
    if (!any || remaining == 0) break;
  }

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order;
  order.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    if (!taken[i]) order.push_back(i);
  std::shuffle(order.begin(), order.end(), rng);

  if (remaining > 0) {
    double mass = 0.0;
    for (std::size_t i : order) mass += w[i];
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    double cum = 0.0;
    std::size_t next = 0;  // index of the next systematic point u + next
    for (std::size_t i : order) {
      cum += static_cast<double>(remaining) * w[i] / mass;
      if (next < remaining && cum > u + static_cast<double>(next)) {
        taken[i] = 1;
        ++next;
      }
    }
    // Round-off can leave the final point unmatched; fill from the heaviest.
    if (next < remaining) {
      std::vector<std::size_t> rest;
      for (std::size_t i : order)
        if (!taken[i]) rest.push_back(i);
      std::sort(rest.begin(), rest.end(), [&](std::size_t a, std::size_t b) { return w[a] > w[b]; });
      for (std::size_t j = 0; next < remaining; ++j, ++next) taken[rest[j]] = 1;
    }
  }

  std::vector<Params> out;
  out.reserve(k);
  for (std::size_t i = 0; i < n; ++i)
    if (taken[i]) out.push_back(src.values[i]);
  return SampleSet(std::move(out));
}

/// Drops the lapse component; weights are carried over unchanged.
inline MarginalSampleSet marginalize_lapse(const SampleSet& s) {
  std::vector<LocationScale> v;
  v.reserve(s.size());
  for (const auto& q : s.values) v.push_back({q.mu, q.nu});
  return MarginalSampleSet(std::move(v), s.weights);
}

inline double gaussian_entropy_3d(const Mat3& cov) {
  const double det = cov.determinant();
  require(det > 0.0, ErrorCode::DomainError, "covariance determinant must be positive");
  return 0.5 * (3.0 * std::log(2.0 * std::numbers::pi * std::numbers::e) + std::log(det));
}

/// Entropy (nats) of the Laplace approximation.
inline double posterior_entropy_gaussian(const LaplacePosterior& lp) { return gaussian_entropy_3d(lp.covariance); }

/// Posterior-averaged probability of a positive response at `x`.
inline double predicted_response_prob(const SampleSet& s, double x, const Design& d) {
  double acc = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) acc += s.weights[i] * psi(x, s.values[i], d);
  return acc;
}

struct FunctionalSamples {
  ScalarSamples samples;
  std::vector<std::size_t> source;  // index into the originating SampleSet
  std::size_t dropped = 0;
};

inline constexpr double kMaxDroppedFraction = 0.01;

/// Pushes posterior samples through a functional. Samples for which a
/// threshold level is unattainable are dropped and counted; more than 1%
/// dropped raises DegenerateFunctional.
inline FunctionalSamples functional_samples(const SampleSet& s, const Functional& f, const Design& d) {
  FunctionalSamples out;
  std::vector<double> vals;
  std::vector<double> w;
  vals.reserve(s.size());
  w.reserve(s.size());
  out.source.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    try {
      vals.push_back(evaluate_functional(f, s.values[i], d));
      w.push_back(s.weights[i]);
      out.source.push_back(i);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::OutOfRange) throw;
      ++out.dropped;
    }
  }
  if (static_cast<double>(out.dropped) > kMaxDroppedFraction * static_cast<double>(s.size()) || vals.empty())
    fail(ErrorCode::DegenerateFunctional, "functional undefined on " + std::to_string(out.dropped) + " of " +
                                              std::to_string(s.size()) + " samples");
  out.samples = ScalarSamples(std::move(vals), std::move(w));
  return out;
}

/// Row i holds the requested quantiles of {Psi(xGrid[i]; q_j)}.
inline std::vector<std::vector<double>> posterior_response_quantiles(const SampleSet& s, std::span<const double> xGrid,
                                                                     std::span<const double> probs, const Design& d) {
  for (double p : probs) require(p > 0.0 && p < 1.0, ErrorCode::DomainError, "quantile levels must lie in (0,1)");
  std::vector<std::vector<double>> rows;
  rows.reserve(xGrid.size());
  std::vector<double> vals(s.size());
  for (double x : xGrid) {
    for (std::size_t i = 0; i < s.size(); ++i) vals[i] = psi(x, s.values[i], d);
    rows.push_back(weighted_quantiles(vals, s.weights, probs));
  }
  return rows;
}

/// m replicated datasets: one parameter draw per replicate (by weight), then
/// Bernoulli responses at each stimulus of `xSeq`.
inline std::vector<Dataset> posterior_predictive_simulate(const SampleSet& s, std::span<const double> xSeq,
                                                          std::size_t m, const Design& d, std::uint64_t seed) {
  require(m >= 1, ErrorCode::InvalidArgument, "posterior_predictive_simulate: m must be at least 1");
  std::mt19937_64 rng(seed);
  std::discrete_distribution<std::size_t> pick(s.weights.begin(), s.weights.end());
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<Dataset> out;
  out.reserve(m);
  for (std::size_t rep = 0; rep < m; ++rep) {
    const Params& q = s.values[pick(rng)];
    Dataset ds(d);
    for (double x : xSeq) ds.add(x, unif(rng) < psi(x, q, d) ? 1 : 0);
    out.push_back(std::move(ds));
  }
  return out;
}

}  // namespace apsy
