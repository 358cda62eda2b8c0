#include <random>

#include "catch_amalgamated.hpp"

#include "apsy/psychometric.hpp"
#include "oracle_values.hpp"

using namespace apsy;
using Catch::Approx;

namespace {
constexpr double kNoLapse = -60.0;  // eta with lambda ~ 1e-26
const Design k2afc = Design::two_afc(-10.0, 10.0);
const Design kYesNo = Design::yes_no(-10.0, 10.0);
}  // namespace

TEST_CASE("psi spot values") {
  const Params p{1.3, std::log(0.7), kNoLapse};
  CHECK(psi(p.mu, p, k2afc) == Approx(0.75).epsilon(1e-14));
  CHECK(psi(p.mu + p.sigma(), p, k2afc) == Approx(oracle::kPsiAtMuPlusSigma).epsilon(1e-13));
  const Params lapse{1.3, 0.0, logit(0.02)};
  CHECK(psi(1e6, lapse, k2afc) == Approx(0.99).epsilon(1e-14));
  CHECK(psi(-1e6, lapse, k2afc) == Approx(0.5).epsilon(1e-14));
  CHECK(psi(1e6, lapse, kYesNo) == Approx(0.99).epsilon(1e-14));
  CHECK(psi(-1e6, lapse, kYesNo) == Approx(0.01).epsilon(1e-14));
}

TEST_CASE("psi matches the mixture form term by term") {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int i = 0; i < 200; ++i) {
    const Params p{n(rng) * 3, n(rng) * 0.5, -3.0 + n(rng)};
    const double x = n(rng) * 4;
    const double lam = p.lambda();
    const double cdf = 0.5 * std::erfc(-(x - p.mu) / (p.sigma() * std::sqrt(2.0)));
    const Design fc = Design::forced_choice(0.25, -10, 10);
    CHECK(psi(x, p, fc) == Approx((1 - lam) * (0.25 + 0.75 * cdf) + lam * 0.25).epsilon(1e-12));
    CHECK(psi(x, p, kYesNo) == Approx((1 - lam) * cdf + lam / 2).epsilon(1e-12));
  }
}

TEST_CASE("psi_weibull") {
  CHECK(psi_weibull(0.0, {2.0, 3.0, 0.0}, 0.5) == 0.5);
  CHECK(psi_weibull(2.0, {2.0, 3.0, 0.0}, 0.0) == Approx(1.0 - std::exp(-1.0)).epsilon(1e-14));
  CHECK(psi_weibull(2.0, {2.0, 3.0, 0.0}, 0.5) == Approx(oracle::kWeibullAtAlpha).epsilon(1e-14));
  CHECK_THROWS_AS(psi_weibull(-0.1, {2.0, 3.0, 0.0}, 0.5), Error);
}

TEST_CASE("psi_inverse") {
  const Params p{1.3, std::log(0.7), kNoLapse};
  CHECK(psi_inverse(0.75, p, k2afc) == Approx(p.mu).epsilon(1e-12));
  CHECK(psi_inverse(oracle::kPsiAtMuPlusSigma, p, k2afc) == Approx(p.mu + p.sigma()).epsilon(1e-10));
  const Params lapse{1.3, 0.0, logit(0.02)};
  try {
    psi_inverse(0.999, lapse, k2afc);
    FAIL("expected OutOfRange");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::OutOfRange);
  }
  CHECK_THROWS_AS(psi_inverse(0.5, lapse, k2afc), Error);
  CHECK_THROWS_AS(psi_inverse(0.005, lapse, kYesNo), Error);
}

TEST_CASE("functionals") {
  const Params p{0.4, 0.5, kNoLapse};
  CHECK(evaluate_functional(Functional::slope(), p, k2afc) == -0.5);
  CHECK(evaluate_functional(Functional::width(0.1), p, k2afc) == Approx(oracle::kWidth2afc * p.sigma()).epsilon(1e-10));
  CHECK(evaluate_functional(Functional::width(0.1), p, kYesNo) == Approx(oracle::kWidthYesNo * p.sigma()).epsilon(1e-10));
  CHECK(evaluate_functional(Functional::threshold(0.75), p, k2afc) == Approx(0.4).epsilon(1e-12));
  const auto custom = Functional::custom("mu+1", [](const Params& q) { return q.mu + 1; });
  CHECK(evaluate_functional(custom, p, k2afc) == Approx(1.4));
  const auto bad = Functional::custom("nan", [](const Params&) { return std::nan(""); });
  CHECK_THROWS_AS(evaluate_functional(bad, p, k2afc), Error);
  CHECK_THROWS_AS(Functional::width(0.5), Error);
  CHECK_THROWS_AS(Functional::width(0.0), Error);
  CHECK_THROWS_AS(evaluate_functional(Functional::threshold(0.995), Params{0, 0, logit(0.02)}, k2afc), Error);
}

TEST_CASE("natural parameterization") {
  const Params a = params_from_natural(2.0, 1.0, 0.5);
  CHECK(a.nu == 0.0);
  CHECK(a.eta == Approx(0.0).margin(1e-15));
  const Params b{0.0, 1.0, -3.89182};
  CHECK(params_from_natural(0.0, std::exp(1.0), b.lambda()).nu == Approx(1.0).epsilon(1e-14));
  CHECK(b.lambda() == Approx(0.02).epsilon(1e-5));
  CHECK(logit(0.02) == Approx(oracle::kLogit002).epsilon(1e-14));
  CHECK_THROWS_AS(params_from_natural(0, 0.0, 0.1), Error);
  CHECK_THROWS_AS(params_from_natural(0, -1.0, 0.1), Error);
  CHECK_THROWS_AS(params_from_natural(0, 1.0, 0.0), Error);
  CHECK_THROWS_AS(params_from_natural(0, 1.0, 1.0), Error);

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    const double mu = 20 * u(rng) - 10, sigma = 0.01 + 10 * u(rng), lam = 0.001 + 0.998 * u(rng);
    const auto nat = params_to_natural(params_from_natural(mu, sigma, lam));
    CHECK(nat.mu == mu);
    CHECK(std::abs(nat.sigma - sigma) <= 1e-12 * sigma);
    CHECK(std::abs(nat.lambda - lam) <= 1e-12);
  }
}

TEST_CASE("design validation") {
  CHECK_THROWS_AS(Design::forced_choice(0.0, 0, 1), Error);
  CHECK_THROWS_AS(Design::forced_choice(1.0, 0, 1), Error);
  CHECK_THROWS_AS(Design::two_afc(1.0, 1.0), Error);
  CHECK_THROWS_AS(Design::yes_no(2.0, 1.0), Error);
}

TEST_CASE("property: monotone, bounded, inverse round trip", "[property]") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int rep = 0; rep < 1000; ++rep) {
    const Params p{10 * u(rng) - 5, 2 * u(rng) - 1, -6 + 5 * u(rng)};
    const Design& d = rep % 2 ? k2afc : kYesNo;
    const auto [lo, hi] = attainable_range(p, d);
    // round trip
    const double prob = lo + (hi - lo) * (0.001 + 0.998 * u(rng));
    CHECK(std::abs(psi(psi_inverse(prob, p, d), p, d) - prob) < 1e-10);
    // monotone on a random grid
    if (rep % 10 == 0) {
      std::vector<double> xs(50);
      for (double& x : xs) x = p.mu + p.sigma() * (8 * u(rng) - 4);
      std::sort(xs.begin(), xs.end());
      for (std::size_t i = 1; i < xs.size(); ++i)
        if (xs[i] > xs[i - 1]) CHECK(psi(xs[i], p, d) > psi(xs[i - 1], p, d));
      CHECK(psi(-1e9, p, d) >= lo - 1e-15);
      CHECK(psi(1e9, p, d) <= hi + 1e-15);
    }
  }
}

TEST_CASE("property: full lapse sits at chance", "[property]") {
  const Params p{0.0, 0.0, 40.0};
  for (double x : {-5.0, 0.0, 5.0}) {
    CHECK(psi(x, p, k2afc) == Approx(0.5).epsilon(1e-12));
    CHECK(psi(x, p, kYesNo) == Approx(0.5).epsilon(1e-12));
  }
}

TEST_CASE("property: width equals difference of thresholds", "[property]") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const Design fc = Design::forced_choice(1.0 / 3.0, -10, 10);
  for (int i = 0; i < 200; ++i) {
    const Params p{4 * u(rng) - 2, u(rng) - 0.5, -6 + 2 * u(rng)};
    const double a = 0.02 + 0.15 * u(rng);
    const double w = evaluate_functional(Functional::width(a), p, fc);
    const double t = evaluate_functional(Functional::threshold(1 - a), p, fc) -
                     evaluate_functional(Functional::threshold(fc.gamma() + a), p, fc);
    CHECK(w == t);
  }
}
