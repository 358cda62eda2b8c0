#include <algorithm>
#include <random>

#include "catch_amalgamated.hpp"

#include "apsy/placement.hpp"
#include "kt_oracle.hpp"
#include "oracle_values.hpp"
#include "test_support.hpp"

using namespace apsy;
using namespace testing;
using Catch::Approx;

namespace {

LaplacePosterior random_posterior(std::mt19937_64& rng, std::size_t trials) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const Params obs{2.0 + 3.0 * u(rng), -0.3 + 0.8 * u(rng), logit(0.01 + 0.03 * u(rng))};
  return laplace_fit(simulate(obs, trials, 0.0, 8.0, rng()), standard_prior());
}

// Level with Psi = p for a no-lapse 2AFC sample at mu = 0, sigma = 1.
Params sample_with_psi(double p, double x) {
  const Params base{0.0, 0.0, -60.0};
  return {x - psi_inverse(p, base, k2afc), 0.0, -60.0};
}

std::vector<double> grid45() {
  std::vector<double> g(45);
  for (int i = 0; i < 45; ++i) g[static_cast<std::size_t>(i)] = -4.0 + 15.0 * i / 44.0;
  return g;
}

std::size_t argmax(const std::vector<double>& v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace

TEST_CASE("bernoulli_entropy") {
  CHECK(bernoulli_entropy(0.5) == Approx(oracle::kLn2).epsilon(1e-15));
  CHECK(bernoulli_entropy(0.0) == 0.0);
  CHECK(bernoulli_entropy(1.0) == 0.0);
  CHECK(std::abs(bernoulli_entropy(0.75) - oracle::kBernoulliEntropy075) < 1e-15);
  CHECK(bernoulli_entropy(0.3) == Approx(bernoulli_entropy(0.7)).epsilon(1e-15));
  CHECK_THROWS_AS(bernoulli_entropy(1.5), Error);
}

TEST_CASE("psi_information spot values") {
  CHECK(std::abs(psi_information(1.0, SampleSet({truth()}), k2afc)) < 1e-15);
  const SampleSet two({sample_with_psi(0.6, 2.0), sample_with_psi(0.9, 2.0)});
  CHECK(std::abs(psi_information(2.0, two, k2afc) - oracle::kMiTwoSamples) < 1e-12);
}

TEST_CASE("psi_information matches the re-update oracle at 1e5 samples") {
  std::mt19937_64 rng(21);
  const LaplacePosterior lp = random_posterior(rng, 30);
  const auto disc = oracle::discretize(lp, 41, 5.0);
  const SampleSet s = sample_laplace(lp, 100000, 5);
  std::vector<double> kt, mc;
  for (double x : grid45()) {
    kt.push_back(oracle::kt_information(x, disc, k2afc));
    mc.push_back(psi_information(x, s, k2afc));
  }
  CHECK(argmax(kt) == argmax(mc));
  for (std::size_t i = 0; i < kt.size(); ++i) CHECK(std::abs(kt[i] - mc[i]) < 1e-3);
}

TEST_CASE("property: decomposition identity on a discrete grid", "[property]") {
  std::mt19937_64 rng(8);
  for (int rep = 0; rep < 5; ++rep) {
    const LaplacePosterior lp = random_posterior(rng, 10 + 20 * rep);
    const auto disc = oracle::discretize(lp, 21, 4.0);
    const SampleSet s = oracle::as_sample_set(disc);
    for (double x : grid45()) CHECK(std::abs(oracle::kt_information(x, disc, k2afc) - psi_information(x, s, k2afc)) < 1e-10);
  }
}

TEST_CASE("property: information is non-negative", "[property]") {
  std::mt19937_64 rng(99);
  for (int rep = 0; rep < 10; ++rep) {
    const LaplacePosterior lp = random_posterior(rng, 5 + 30 * rep);
    const SampleSet s = sample_laplace(lp, 2000, rng());
    const auto pf = prepare_functional(s, Functional::threshold(0.75), k2afc);
    const auto pw = prepare_functional(s, Functional::width(0.1), k2afc);
    for (double x : grid45()) {
      CHECK(psi_information(x, s, k2afc) >= -1e-12);
      CHECK(t_information(x, pf, k2afc, Estimator::GaussianMoments) >= -1e-9);
      CHECK(t_information(x, pw, k2afc, Estimator::GaussianMoments) >= -1e-9);
    }
  }
}

TEST_CASE("property: Monte-Carlo error of psi_information shrinks with n", "[property]") {
  std::mt19937_64 rng(5);
  const LaplacePosterior lp = random_posterior(rng, 40);
  const double x = lp.mode.mu;
  std::vector<double> e2k, e16k;
  const double ref = psi_information(x, sample_laplace(lp, 64000, 1), k2afc);
  for (std::uint64_t s = 0; s < 30; ++s) {
    e2k.push_back(std::abs(psi_information(x, sample_laplace(lp, 2000, 100 + s), k2afc) - ref));
    e16k.push_back(std::abs(psi_information(x, sample_laplace(lp, 16000, 200 + s), k2afc) - ref));
  }
  std::nth_element(e2k.begin(), e2k.begin() + 15, e2k.end());
  std::nth_element(e16k.begin(), e16k.begin() + 15, e16k.end());
  CHECK(e16k[15] < e2k[15]);
}

TEST_CASE("t_information degenerate cases") {
  std::mt19937_64 rng(3);
  const LaplacePosterior lp = random_posterior(rng, 20);
  const SampleSet s = sample_laplace(lp, 2000, 4);
  const auto constant = Functional::custom("one", [](const Params&) { return 1.0; });
  CHECK(t_information(3.0, s, constant, k2afc, Estimator::GaussianMoments) == 0.0);

  // full lapse: every sample responds at chance, so r says nothing about f
  std::vector<Params> v = s.values;
  for (auto& q : v) q.eta = 40.0;
  const SampleSet chance(v);
  const auto mu = Functional::custom("mu", [](const Params& q) { return q.mu; });
  CHECK(std::abs(t_information(3.0, chance, mu, k2afc, Estimator::GaussianMoments)) < 1e-10);

  // one response value pins f to a single sample: conditional variance collapses
  const Design yn = Design::yes_no(-100, 100);
  const SampleSet split({Params{-50.0, 0.0, -60.0}, Params{50.0, 0.0, -60.0}});
  try {
    t_information(0.0, split, mu, yn, Estimator::GaussianMoments);
    FAIL("expected DegenerateVariance");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DegenerateVariance);
  }
}

TEST_CASE("t_information agrees with an independent moment computation") {
  std::mt19937_64 rng(13);
  LaplacePosterior lp = random_posterior(rng, 25);
  lp.mode.eta = -60.0;  // no lapse: threshold(0.75) is mu
  lp.covariance(2, 2) = 1e-10;
  lp.covariance(0, 2) = lp.covariance(2, 0) = lp.covariance(1, 2) = lp.covariance(2, 1) = 0.0;
  const SampleSet s = sample_laplace(lp, 5000, 9);
  const auto pf = prepare_functional(s, Functional::threshold(0.75), k2afc);
  for (std::size_t i = 0; i < s.size(); ++i) CHECK(pf.values[i] == Approx(s.values[i].mu).epsilon(1e-12));

  for (double x : {0.0, 2.5, 4.0, 7.0}) {
    long double a = 0, b = 0, a1 = 0, b1 = 0, c1 = 0, a0 = 0, b0 = 0, c0 = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      const long double w = s.weights[i], f = s.values[i].mu, p = psi(x, s.values[i], k2afc);
      a += w * f, b += w * f * f;
      a1 += w * p, b1 += w * p * f, c1 += w * p * f * f;
      a0 += w * (1 - p), b0 += w * (1 - p) * f, c0 += w * (1 - p) * f * f;
    }
    const auto H = [](long double v) { return 0.5L * std::log(2.0L * std::numbers::pi * std::numbers::e * v); };
    const long double v = b - a * a, v1 = c1 / a1 - (b1 / a1) * (b1 / a1), v0 = c0 / a0 - (b0 / a0) * (b0 / a0);
    const double expect = static_cast<double>(H(v) - a1 * H(v1) - a0 * H(v0));
    CHECK(std::abs(t_information(x, pf, k2afc, Estimator::GaussianMoments) - expect) < 1e-9);
  }

  // argmax within one grid step of the argmax found with 4x the samples
  const auto pf4 = prepare_functional(sample_laplace(lp, 20000, 10), Functional::threshold(0.75), k2afc);
  std::vector<double> c, c4;
  for (double x : grid45()) {
    c.push_back(t_information(x, pf, k2afc, Estimator::GaussianMoments));
    c4.push_back(t_information(x, pf4, k2afc, Estimator::GaussianMoments));
  }
  const auto i = static_cast<long>(argmax(c)), j = static_cast<long>(argmax(c4));
  CHECK(std::abs(i - j) <= 1);
}

TEST_CASE("property: T information on mu alone never exceeds Psi information", "[property]") {
  std::mt19937_64 rng(17);
  LaplacePosterior lp = random_posterior(rng, 30);
  // freeze nu and eta in the samples: mu is then the whole parameter
  for (int i = 1; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      lp.covariance(i, j) = lp.covariance(j, i) = (i == j ? 1e-14 : 0.0);
  const std::size_t batches = 10, per = 2000;
  const SampleSet s = sample_laplace(lp, batches * per, 3);
  const auto mu = Functional::custom("mu", [](const Params& q) { return q.mu; });
  const auto pf = prepare_functional(s, mu, k2afc);
  for (double x : grid45()) {
    std::vector<double> batch;
    for (std::size_t b = 0; b < batches; ++b) {
      std::vector<Params> part(s.values.begin() + static_cast<long>(b * per), s.values.begin() + static_cast<long>((b + 1) * per));
      batch.push_back(psi_information(x, SampleSet(part), k2afc));
    }
    double m = 0, v = 0;
    for (double y : batch) m += y / batches;
    for (double y : batch) v += (y - m) * (y - m) / (batches - 1);
    const double se = std::sqrt(v / batches);
    CHECK(t_information(x, pf, k2afc, Estimator::GaussianMoments) <= psi_information(x, s, k2afc) + 3 * se + 1e-12);
  }
}

TEST_CASE("select_next on a point-mass posterior takes the midpoint") {
  LaplacePosterior lp;
  lp.mode = {3.0, 0.0, -60.0};
  lp.covariance = Mat3::Identity() * 1e-30;
  const Selection s = select_next(PlacementPolicy::psi(k2afc, 500), lp, k2afc, 1);
  CHECK(s.allZeroInformation);
  CHECK(s.x == 3.5);
}

TEST_CASE("select_next under the standard prior stays inside the prior threshold range") {
  const GaussianPrior pr = standard_prior();
  const LaplacePosterior lp = laplace_from_prior(pr);
  const SampleSet draws = sample_laplace(lp, 100000, 77);
  const auto thr = functional_samples(draws, Functional::threshold(0.75), k2afc);
  const std::vector<double> probs{0.005, 0.995};
  const auto q = weighted_quantiles(thr.samples.values, thr.samples.weights, probs);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Selection s = select_next(PlacementPolicy::psi(k2afc), lp, k2afc, seed);
    CHECK(s.x > q[0]);
    CHECK(s.x < q[1]);
    CHECK(s.x > k2afc.x_lo());
    CHECK(s.x < k2afc.x_hi());
    CHECK(!s.allZeroInformation);
  }
}

TEST_CASE("select_next curve invariants and determinism") {
  std::mt19937_64 rng(4);
  const LaplacePosterior lp = random_posterior(rng, 15);
  for (const PlacementPolicy& policy :
       {PlacementPolicy::psi(k2afc, 1000), PlacementPolicy::t(Functional::threshold(0.75), k2afc, Estimator::GaussianMoments, 1000),
        PlacementPolicy::t(Functional::width(0.1), k2afc, Estimator::GaussianMoments, 1000),
        PlacementPolicy::t(Functional::slope(), k2afc, Estimator::GaussianMoments, 1000)}) {
    const Selection a = select_next(policy, lp, k2afc, 42);
    const Selection b = select_next(policy, lp, k2afc, 42);
    CHECK(a.x == b.x);
    CHECK(a.curve.values == b.curve.values);
    const auto& c = a.curve;
    CHECK(std::is_sorted(c.levels.begin(), c.levels.end()));
    CHECK(std::adjacent_find(c.levels.begin(), c.levels.end()) == c.levels.end());
    CHECK(c.levels.front() >= k2afc.x_lo());
    CHECK(c.levels.back() <= k2afc.x_hi());
    CHECK(c.levels.size() > 45);
    for (std::size_t i = 0; i < c.values.size(); ++i) {
      CHECK(c.values[i] <= c.values[c.chosen]);
      if (c.values[i] == c.values[c.chosen]) CHECK(i >= c.chosen);
    }
    CHECK(a.x == c.levels[c.chosen]);
  }
}

TEST_CASE("select_next argmax is stable across seeds") {
  // posteriors along a simulated adaptive run
  const GaussianPrior pr = standard_prior();
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Dataset data(k2afc);
  LaplacePosterior lp = laplace_from_prior(pr);
  const PlacementPolicy policy = PlacementPolicy::psi(k2afc);
  // step of the first refined grid; the final round's step sits below the Monte-Carlo noise floor
  const double fine = 15.0 / 44.0 * 0.2;
  int close = 0;
  for (int t = 0; t < 50; ++t) {
    const Selection a = select_next(policy, lp, k2afc, 1000 + t);
    const Selection b = select_next(policy, lp, k2afc, 5000 + t);
    close += std::abs(a.x - b.x) <= fine * (1 + 1e-9);
    data.add(a.x, u(rng) < psi(a.x, truth(), k2afc) ? 1 : 0);
    lp = laplace_fit(data, pr);
  }
  CHECK(close >= 45);
}

TEST_CASE("policy and grid validation") {
  CHECK_THROWS_AS(PlacementPolicy::psi(k2afc, 99).validate(k2afc), Error);
  StimulusGrid g = StimulusGrid::uniform(k2afc);
  g.levels[3] = g.levels[2];
  CHECK_THROWS_AS(g.validate(k2afc), Error);
  CHECK_THROWS_AS(StimulusGrid::uniform(-5.0, 11.0).validate(k2afc), Error);
  CHECK_THROWS_AS(StimulusGrid::uniform(0.0, 1.0, 1), Error);
  StimulusGrid s = StimulusGrid::uniform(k2afc);
  s.refineShrink = 1.0;
  CHECK_THROWS_AS(s.validate(k2afc), Error);
}

TEST_CASE("should_stop", "[property]") {
  LaplacePosterior lp;
  lp.mode = {3.0, 0.0, logit(0.02)};
  lp.covariance = Mat3::Identity() * 0.01;
  CHECK(should_stop(StoppingRule::fixed(100), lp, nullptr, 100, k2afc));
  CHECK(!should_stop(StoppingRule::fixed(100), lp, nullptr, 99, k2afc));

  // entropy of diag(.01,.01,.01): det 1e-6
  LaplacePosterior ref;
  ref.covariance = Mat3::Identity() * 0.01;
  const StoppingRule ent = StoppingRule::entropy_below(posterior_entropy_gaussian(ref));
  LaplacePosterior below, above;
  below.covariance = Mat3::Identity() * std::cbrt(0.999e-6);
  above.covariance = Mat3::Identity() * std::cbrt(1.001e-6);
  CHECK(should_stop(ent, below, nullptr, 1, k2afc));
  CHECK(!should_stop(ent, above, nullptr, 1, k2afc));

  const SampleSet s = sample_laplace(lp, 2000, 2);
  const auto rule = StoppingRule::probability_within(Functional::threshold(0.75), 1.0, std::numeric_limits<double>::infinity(), 0.95);
  CHECK(rule.needs_samples());
  CHECK(should_stop(rule, lp, &s, 1, k2afc));
  const auto tight = StoppingRule::probability_within(Functional::threshold(0.75), 2.99, 3.01, 0.95);
  CHECK(!should_stop(tight, lp, &s, 1, k2afc));
  CHECK_THROWS_AS(should_stop(rule, lp, nullptr, 1, k2afc), Error);
  CHECK_THROWS_AS(StoppingRule::probability_within(Functional::slope(), 1, 0, 0.9), Error);
  CHECK_THROWS_AS(StoppingRule::probability_within(Functional::slope(), 0, 1, 1.0), Error);
}

TEST_CASE("multi_threshold_policy") {
  const auto three = multi_threshold_policy({0.65, 0.75, 0.85}, k2afc);
  CHECK(three.is_psi());
  CHECK(!three.approximate);
  const auto two = multi_threshold_policy({0.65, 0.85}, k2afc);
  CHECK(two.is_psi());
  CHECK(two.approximate);
  CHECK_THROWS_AS(multi_threshold_policy({0.75}, k2afc), Error);
}
