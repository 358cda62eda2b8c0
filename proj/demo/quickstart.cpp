// Sixty Psi-method trials against a simulated observer, then a summary.

#include <cstdio>
#include <random>

#include "apsy/apsy.hpp"

using namespace apsy;

int main() {
  const Design design = Design::two_afc(-4.0, 11.0);
  const GaussianPrior prior = GaussianPrior::make({3.0, 0.0, logit(0.02)}, {std::sqrt(0.5), std::sqrt(0.5), 0.3});
  SessionState st = session_create(design, prior, PlacementPolicy::psi(design), StoppingRule::fixed(60), 1);

  const auto observer = SimulatedObserver::gaussian(params_from_natural(3.5, std::exp(0.5), 0.02), design);
  std::mt19937_64 rng(2);
  while (!st.stopped) {
    const Proposal p = session_next(st);
    const int r = observer_respond(observer, p.x, st.trials.size() + 1, rng);
    session_respond(st, r);
    if (st.trials.size() % 10 == 0)
      std::printf("trial %3zu  x=%6.3f  r=%d  mode mu=%.3f nu=%.3f\n", st.trials.size(), p.x, r, st.posterior.mode.mu,
                  st.posterior.mode.nu);
  }

  const EstimateReport rep = session_estimate(st, {});
  std::printf("\ntruth: mu=3.500 sigma=%.3f lambda=0.020\n", std::exp(0.5));
  for (const char* k : {"mu", "sigma", "lambda"}) {
    const Interval q = rep.quantile_interval(k);
    std::printf("%-7s 95%% interval [%.3f, %.3f]\n", k, q.lo, q.hi);
  }
  for (const auto& f : rep.functionals) std::printf("%-22s mean %.3f\n", f.label.c_str(), f.mean);
}
