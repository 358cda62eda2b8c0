#pragma once

// Psychometric function families, parameterizations and the scalar
// functionals (threshold, width, slope) defined on them.

#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <type_traits>
#include <utility>
#include <variant>

#include "apsy/error.hpp"
#include "apsy/numerics.hpp"

namespace apsy {

/// A point in the unconstrained parameter space: location `mu`, log scale
/// `nu = log(sigma)` and logit lapse `eta = logit(lambda)`.
struct Params {
  double mu = 0.0;
  double nu = 0.0;
  double eta = 0.0;

  double sigma() const noexcept { return std::exp(nu); }
  double lambda() const noexcept { return logistic(eta); }

  bool finite() const noexcept { return std::isfinite(mu) && std::isfinite(nu) && std::isfinite(eta); }
  friend bool operator==(const Params&, const Params&) = default;
};

struct NaturalParams {
  double mu = 0.0;
  double sigma = 1.0;
  double lambda = 0.0;
};

inline Params params_from_natural(double mu, double sigma, double lambda) {
  require(std::isfinite(mu), ErrorCode::DomainError, "mu must be finite");
  require(sigma > 0.0 && std::isfinite(sigma), ErrorCode::DomainError, "sigma must be positive");
  require(lambda > 0.0 && lambda < 1.0, ErrorCode::DomainError, "lambda must lie in (0,1)");
  return {mu, std::log(sigma), logit(lambda)};
}

inline NaturalParams params_to_natural(const Params& p) { return {p.mu, p.sigma(), p.lambda()}; }

enum class Task { ForcedChoice, YesNo };

/// Experimental design: task type (with chance rate for forced choice) and the
/// admissible stimulus interval.
class Design {
 public:
  static Design forced_choice(double gamma, double x_lo, double x_hi) {
    require(gamma > 0.0 && gamma < 1.0, ErrorCode::DomainError, "chance rate gamma must lie in (0,1)");
    return Design(Task::ForcedChoice, gamma, x_lo, x_hi);
  }
  static Design two_afc(double x_lo, double x_hi) { return forced_choice(0.5, x_lo, x_hi); }
  static Design yes_no(double x_lo, double x_hi) { return Design(Task::YesNo, 0.0, x_lo, x_hi); }

  Task task() const noexcept { return task_; }
  double gamma() const noexcept { return gamma_; }
  double x_lo() const noexcept { return x_lo_; }
  double x_hi() const noexcept { return x_hi_; }
  bool contains(double x) const noexcept { return x >= x_lo_ && x <= x_hi_; }

  friend bool operator==(const Design&, const Design&) = default;

 private:
  Design(Task t, double g, double lo, double hi) : task_(t), gamma_(g), x_lo_(lo), x_hi_(hi) {
    require(std::isfinite(lo) && std::isfinite(hi) && lo < hi, ErrorCode::DomainError,
            "stimulus domain requires x_lo < x_hi");
  }

  Task task_;
  double gamma_;
  double x_lo_;
  double x_hi_;
};

struct WeibullParams {
  double alpha = 1.0;
  double beta = 1.0;
  double lambda = 0.0;

  void validate() const {
    require(alpha > 0.0 && beta > 0.0, ErrorCode::DomainError, "Weibull alpha and beta must be positive");
    require(lambda >= 0.0 && lambda < 1.0, ErrorCode::DomainError, "Weibull lapse must lie in [0,1)");
  }
};

// ---------------------------------------------------------------------------
// Psychometric functions

/// Pieces of Psi needed by the likelihood and its gradient. `psi` and
/// `one_minus_psi` are each computed without cancellation.
struct PsiEval {
  double psi;
  double one_minus_psi;
  double dpsi_dphi;     // d psi / d Phi
  double dpsi_dlambda;  // d psi / d lambda
  double z;
  double cdf;
};

inline PsiEval psi_eval(double x, const Params& p, const Design& d) noexcept {
  const double sigma = p.sigma();
  const double lam = p.lambda();
  const double z = (x - p.mu) / sigma;
  // The smaller tail comes from erfc directly, the other by subtraction.
  const double cdf = z < 0.0 ? normal_cdf(z) : 1.0 - normal_sf(z);
  const double sf = z < 0.0 ? 1.0 - cdf : normal_sf(z);
  if (d.task() == Task::ForcedChoice) {
    const double g = d.gamma();
    // (1-l)(g + (1-g)F) + l g  ==  g + (1-g)(1-l)F
    return {g + (1.0 - g) * (1.0 - lam) * cdf, (1.0 - g) * ((1.0 - lam) * sf + lam), (1.0 - g) * (1.0 - lam),
            -(1.0 - g) * cdf, z, cdf};
  }
  return {(1.0 - lam) * cdf + 0.5 * lam, (1.0 - lam) * sf + 0.5 * lam, 1.0 - lam, 0.5 - cdf, z, cdf};
}

inline double psi(double x, const Params& p, const Design& d) noexcept { return psi_eval(x, p, d).psi; }

/// Weibull-shaped forced-choice function on x >= 0.
inline double psi_weibull(double x, const WeibullParams& w, double gamma) {
  require(x >= 0.0, ErrorCode::DomainError, "psi_weibull: stimulus level must be non-negative");
  const double core = -std::expm1(-std::pow(x / w.alpha, w.beta));
  return (1.0 - w.lambda) * (gamma + (1.0 - gamma) * core) + w.lambda * gamma;
}

/// Open interval of response probabilities reachable for given parameters.
inline std::pair<double, double> attainable_range(const Params& p, const Design& d) noexcept {
  const double lam = p.lambda();
  if (d.task() == Task::ForcedChoice) {
    const double g = d.gamma();
    return {g, (1.0 - lam) + lam * g};
  }
  return {0.5 * lam, 1.0 - 0.5 * lam};
}

/// Stimulus level at which the psychometric function equals `prob`.
inline double psi_inverse(double prob, const Params& p, const Design& d) {
  const double lam = p.lambda();
  double lower;  // Phi at the solution
  double upper;  // 1 - Phi, computed directly
  if (d.task() == Task::ForcedChoice) {
    const double g = d.gamma();
    const double span = (1.0 - g) * (1.0 - lam);
    lower = (prob - g) / span;
    upper = ((1.0 - g) * (1.0 - lam) - (prob - g)) / span;
  } else {
    const double span = 1.0 - lam;
    lower = (prob - 0.5 * lam) / span;
    upper = (1.0 - 0.5 * lam - prob) / span;
  }
  if (!(lower > 0.0 && upper > 0.0))
    fail(ErrorCode::OutOfRange, "psi_inverse: response probability " + std::to_string(prob) +
                                    " is not attainable for these parameters");
  return p.mu + p.sigma() * normal_quantile(lower, upper);
}

// ---------------------------------------------------------------------------
// Functionals

struct Threshold {
  double level;
};
struct Width {
  double margin;
};
struct Slope {};
struct Custom {
  std::string name;
  std::function<double(const Params&)> fn;
};

/// A real-valued summary of the psychometric function.
struct Functional {
  std::variant<Threshold, Width, Slope, Custom> kind;

  static Functional threshold(double level) { return {Threshold{level}}; }
  static Functional width(double margin) {
    require(margin > 0.0 && margin < 0.5, ErrorCode::DomainError, "width margin must lie in (0, 0.5)");
    return {Width{margin}};
  }
  static Functional slope() { return {Slope{}}; }
  static Functional custom(std::string name, std::function<double(const Params&)> fn) {
    return {Custom{std::move(name), std::move(fn)}};
  }

  bool is_width() const noexcept { return std::holds_alternative<Width>(kind); }
  std::string label() const;
};

inline std::string Functional::label() const {
  return std::visit(
      [](const auto& k) -> std::string {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, Threshold>) return "threshold(" + std::to_string(k.level) + ")";
        else if constexpr (std::is_same_v<K, Width>) return "width(" + std::to_string(k.margin) + ")";
        else if constexpr (std::is_same_v<K, Slope>) return "slope";
        else return "custom(" + k.name + ")";
      },
      kind);
}

inline double evaluate_functional(const Functional& f, const Params& p, const Design& d) {
  return std::visit(
      [&](const auto& k) -> double {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, Threshold>) {
          return psi_inverse(k.level, p, d);
        } else if constexpr (std::is_same_v<K, Width>) {
          const double lowLevel = d.task() == Task::YesNo ? k.margin : d.gamma() + k.margin;
          return psi_inverse(1.0 - k.margin, p, d) - psi_inverse(lowLevel, p, d);
        } else if constexpr (std::is_same_v<K, Slope>) {
          return -p.nu;
        } else {
          const double v = k.fn(p);
          if (!std::isfinite(v)) fail(ErrorCode::DomainError, "custom functional '" + k.name + "' is not finite");
          return v;
        }
      },
      f.kind);
}

}  // namespace apsy
