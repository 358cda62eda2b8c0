#include <random>

#include "catch_amalgamated.hpp"

#include "apsy/simlab.hpp"
#include "oracle_values.hpp"

using namespace apsy;
using Catch::Approx;

namespace {

const Design k2afc = Design::two_afc(-4.0, 11.0);

double empirical_rate(const SimulatedObserver& o, double x, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  double hits = 0;
  for (std::size_t t = 1; t <= n; ++t) hits += observer_respond(o, x, 1, rng);
  return hits / static_cast<double>(n);
}

StudySetup small_setup() {
  StudySetup s;
  s.replications = 12;
  s.trialCounts = {30, 60};
  s.policySamples = 300;
  s.gridPoints = 15;
  s.refineRounds = 1;
  s.estimateSamples = 500;
  return s;
}

}  // namespace

TEST_CASE("observer_respond rates") {
  const Params p{2.0, 0.3, -60.0};
  CHECK(empirical_rate(SimulatedObserver::gaussian(p, k2afc), 2.0, 100000, 1) == Approx(0.75).margin(0.005));
  const Design pos = Design::two_afc(0.0, 10.0);
  const auto w = SimulatedObserver::weibull({2.0, 3.0, 0.0}, pos);
  CHECK(empirical_rate(w, 2.0, 100000, 2) == Approx(oracle::kWeibullAtAlpha).margin(0.005));
  CHECK_THROWS_AS(SimulatedObserver::weibull({2.0, 3.0, 0.0}, k2afc), Error);
  CHECK_THROWS_AS(SimulatedObserver::weibull({2.0, 3.0, 0.0}, Design::yes_no(0.0, 10.0)), Error);

  std::mt19937_64 rng(3);
  CHECK_THROWS_AS(observer_respond(SimulatedObserver::gaussian(p, k2afc), 12.0, 1, rng), Error);
  CHECK_THROWS_AS(observer_respond(SimulatedObserver::gaussian(p, k2afc), 1.0, 0, rng), Error);
}

TEST_CASE("drifting observer") {
  const Params p{3.5, 0.5, logit(0.02)};
  const auto g = SimulatedObserver::gaussian(p, k2afc);
  const auto still = SimulatedObserver::drifting(p, 0.0, k2afc);
  std::mt19937_64 a(9), b(9);
  for (std::size_t t = 1; t <= 2000; ++t) {
    const double x = -4.0 + 15.0 * static_cast<double>(t % 97) / 96.0;
    CHECK(observer_respond(g, x, t, a) == observer_respond(still, x, t, b));
  }
  const auto drift = SimulatedObserver::drifting(p, kDefaultDrift, k2afc);
  Params later = p;
  later.mu -= kDefaultDrift * 299;
  CHECK(drift.probability(3.0, 300) == Approx(psi(3.0, later, k2afc)).epsilon(1e-14));
  CHECK(drift.probability(3.0, 1) == psi(3.0, p, k2afc));
}

TEST_CASE("sampling schemes") {
  const Params p{3.5, 0.5, -60.0};
  const auto [lo, hi] = scheme_interval(p, Spread::Tight, k2afc);
  CHECK(lo == Approx(psi_inverse(0.70, p, k2afc)).epsilon(1e-12));
  CHECK(hi == Approx(psi_inverse(0.85, p, k2afc)).epsilon(1e-12));
  CHECK(psi(lo, p, k2afc) == Approx(0.70).epsilon(1e-10));

  const Params lapse = params_from_natural(3.5, std::exp(0.5), 0.02);
  const auto [wlo, whi] = scheme_interval(lapse, Spread::Wide, k2afc);
  CHECK(std::isfinite(wlo));
  CHECK(wlo < lapse.mu - 2 * lapse.sigma());
  CHECK(whi > lapse.mu);
  const auto [mlo, mhi] = scheme_interval(lapse, Spread::Medium, k2afc);
  CHECK(wlo < mlo);
  CHECK(mhi < whi);

  CHECK_THROWS_AS(scheme_interval(params_from_natural(3.5, 1.0, 0.2), Spread::Wide, k2afc), Error);

  const auto levels = constant_levels(0.0, 1.0);
  REQUIRE(levels.size() == 6);
  for (std::size_t i = 0; i < 6; ++i) CHECK(levels[i] == Approx(0.2 * i).margin(1e-15));

  const auto c = constant_scheme(lapse, Spread::Medium, k2afc);
  const auto& cl = std::get<ConstantStimuli>(c.kind).levels;
  CHECK(cl.front() == Approx(mlo));
  CHECK(cl.back() == Approx(mhi));

  SamplingScheme bad{UniformInterval{-5.0, 3.0}, "bad"};
  CHECK_THROWS_AS(bad.validate(k2afc), Error);
}

TEST_CASE("run_study with a point prior at the truth has near-zero MSE") {
  const Params truth = params_from_natural(3.5, std::exp(0.5), 0.02);
  StudyConfig cfg{SimulatedObserver::gaussian(truth, k2afc), uniform_scheme(truth, Spread::Medium, k2afc),
                  GaussianPrior::make({truth.mu, truth.nu, truth.eta}, {1e-4, 1e-4, 1e-4})};
  cfg.trialCounts = {20, 40};
  cfg.replications = 10;
  cfg.estimateSamples = 200;
  const auto reports = run_study_multi(cfg, {Estimand::mu(), Estimand::nu()}, 1);
  for (const auto& r : reports)
    for (const auto& row : r.rows) {
      CHECK(row.failures == 0);
      CHECK(row.mse < 1e-6);
    }
}

TEST_CASE("run_study is deterministic and reports per-row statistics") {
  StudySetup s = small_setup();
  const Params truth = s.truth;
  for (const SamplingScheme& scheme :
       {uniform_scheme(truth, Spread::Medium, s.design), constant_scheme(truth, Spread::Tight, s.design),
        adaptive_scheme(s.policy(), "psi")}) {
    const StudyConfig cfg = s.config(scheme, s.prior());
    const MseReport a = run_study(cfg, 77), b = run_study(cfg, 77);
    CHECK(a.to_csv() == b.to_csv());
    REQUIRE(a.rows.size() == 2);
    for (const auto& row : a.rows) {
      CHECK(row.mse >= 0.0);
      CHECK(row.reps + row.failures == s.replications);
      double m = 0;
      for (double e : row.squaredErrors) m += e;
      CHECK(row.mse == Approx(m / row.reps).epsilon(1e-12));
    }
    CHECK(a.to_csv().rfind("scheme,trials,mean_estimate,mse,reps,failures\n", 0) == 0);
  }
  const MseReport other = run_study(s.config(uniform_scheme(truth, Spread::Medium, s.design), s.prior()), 78);
  CHECK(other.to_csv() != run_study(s.config(uniform_scheme(truth, Spread::Medium, s.design), s.prior()), 77).to_csv());
}

TEST_CASE("nested checkpoints match separate runs") {
  StudySetup s = small_setup();
  s.replications = 5;
  StudyConfig both = s.config(uniform_scheme(s.truth, Spread::Wide, s.design), s.prior());
  StudyConfig only = both;
  only.trialCounts = {60};
  // the warm start differs, so the fitted modes agree only to optimizer tolerance
  CHECK(run_study(both, 5).rows[1].mse == Approx(run_study(only, 5).rows[0].mse).epsilon(1e-9));
}

TEST_CASE("property: data beats the prior at 500 trials", "[property]") {
  StudySetup s;
  s.replications = 20;
  s.trialCounts = {500};
  s.estimateSamples = 500;
  const GaussianPrior pr = s.prior();
  for (Spread sp : {Spread::Wide, Spread::Medium, Spread::Tight}) {
    const MseReport r = run_study(s.config(uniform_scheme(s.truth, sp, s.design), pr), 11);
    CHECK(r.rows[0].mse < 0.5);
  }
}

TEST_CASE("threshold estimand") {
  StudySetup s = small_setup();
  s.replications = 4;
  StudyConfig cfg = s.config(uniform_scheme(s.truth, Spread::Medium, s.design), s.prior());
  cfg.estimand = Estimand::threshold(0.75);
  const MseReport r = run_study(cfg, 3);
  CHECK(r.truth == Approx(psi_inverse(0.75, s.truth, s.design)));
  CHECK(r.estimand == Estimand::threshold(0.75).label());
  const auto w = SimulatedObserver::weibull({2.0, 3.0, 0.0}, Design::two_afc(0.0, 10.0));
  CHECK(estimand_truth(Estimand::threshold(oracle::kWeibullAtAlpha), w) == Approx(2.0).epsilon(1e-12));
}

TEST_CASE("isotonic and bootstrap helpers") {
  const auto iso = isotonic_decreasing({5.0, 3.0, 4.0, 1.0, 2.0});
  const std::vector<double> expect{5.0, 3.5, 3.5, 1.5, 1.5};
  for (std::size_t i = 0; i < expect.size(); ++i) CHECK(iso[i] == Approx(expect[i]));
  const std::vector<double> small(50, 1.0), big(50, 2.0);
  CHECK(bootstrap_prob_not_greater(small, big, 200, 1) == 1.0);
  CHECK(bootstrap_prob_not_greater(big, small, 200, 1) == 0.0);
}

TEST_CASE("match_weibull") {
  const Params target = params_from_natural(6.0, std::exp(0.5), 0.02);
  const WeibullParams w = match_weibull(target, 0.5, 0.02);
  CHECK(w.lambda == 0.02);
  const double f = weibull_l2(target, w, 0.5);
  for (double da : {0.99, 1.01})
    CHECK(weibull_l2(target, {w.alpha * da, w.beta, w.lambda}, 0.5) >= f);
  for (double db : {0.99, 1.01})
    CHECK(weibull_l2(target, {w.alpha, w.beta * db, w.lambda}, 0.5) >= f);
  CHECK(f < 0.5 * weibull_l2(target, {6.0, 1.0, 0.02}, 0.5));
  CHECK(w.alpha > 5.0);
  CHECK(w.alpha < 8.0);
}

TEST_CASE("ppc_dataset") {
  StudySetup s = small_setup();
  const auto still = SimulatedObserver::drifting(s.truth, 0.0, s.design);
  const PpcRun a = ppc_dataset(still, s.policy(), s.prior(), 90, 4);
  const PpcRun b = ppc_dataset(still, s.policy(), s.prior(), 90, 4);
  REQUIRE(a.triplets.size() == 90);
  CHECK(a.data == b.data);
  for (std::size_t i = 0; i < 90; ++i) {
    CHECK(a.triplets[i].t == i + 1);
    CHECK(a.triplets[i].x == a.data.trials()[i].x);
    CHECK(a.triplets[i].r == a.data.trials()[i].r);
  }
  // stationarity: late-block accuracy within 3 sd of the early block
  double early = 0, late = 0;
  for (std::size_t i = 0; i < 30; ++i) early += a.data.trials()[i].r;
  for (std::size_t i = 60; i < 90; ++i) late += a.data.trials()[i].r;
  early /= 30, late /= 30;
  const double sd = std::sqrt(early * (1 - early) / 30 + late * (1 - late) / 30);
  CHECK(std::abs(late - early) <= 3 * std::max(sd, 1.0 / 30));
}

TEST_CASE("ppc_late_block_test on stationary data is rarely flagged") {
  const Params truth = params_from_natural(3.5, std::exp(0.5), 0.02);
  const GaussianPrior pr = StudySetup{}.prior();
  PpcOptions opt;
  opt.replicates = 300;
  opt.posteriorSamples = 1000;
  int flagged = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(1.0, 7.0);
    const auto obs = SimulatedObserver::gaussian(truth, k2afc);
    Dataset d(k2afc);
    for (std::size_t t = 1; t <= 150; ++t) {
      const double x = u(rng);
      d.add(x, observer_respond(obs, x, t, rng));
    }
    const PpcResult r = ppc_late_block_test(d, pr, laplace_fit(d, pr), opt, seed);
    CHECK(std::is_sorted(r.replicated.begin(), r.replicated.end()));
    CHECK(r.lowerQuantile <= r.upperQuantile);
    CHECK(r.flagged == (r.below || r.above));
    flagged += r.flagged;
  }
  CHECK(flagged <= 3);
}
