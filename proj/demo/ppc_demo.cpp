// Posterior predictive check on one drifting and one stationary observer.
// Writes the real triplets plus a few replicates as CSV when a path is given.

#include <cstdio>
#include <fstream>
#include <string>

#include "apsy/apsy.hpp"

using namespace apsy;

int main(int argc, char** argv) {
  StudySetup S;
  S.policySamples = 500;
  S.gridPoints = 23;
  for (double drift : {kDefaultDrift, 0.0}) {
    const auto obs = SimulatedObserver::drifting(S.truth, drift, S.design);
    const PpcRun run = ppc_dataset(obs, S.policy(), S.prior(), 300, 11);
    const PpcResult r = ppc_late_block_test(run.data, S.prior(), run.posterior, {}, 5);
    std::printf("drift %.3f: late-block rate %.3f, replicate 5%%-95%% [%.3f, %.3f]%s\n", drift, r.observed,
                r.lowerQuantile, r.upperQuantile, r.flagged ? "  -> flagged" : "");

    if (argc > 1 && drift > 0.0) {
      std::ofstream out(argv[1]);
      out << "dataset,t,x,r\n";
      for (const auto& t : run.triplets) out << "real," << t.t << ',' << t.x << ',' << t.r << '\n';
      const SampleSet post = importance_posterior(run.data, S.prior(), run.posterior, 4000, 1);
      std::vector<double> xs;
      for (const auto& t : run.triplets) xs.push_back(t.x);
      const auto reps = posterior_predictive_simulate(post, xs, 3, S.design, 2);
      for (std::size_t k = 0; k < reps.size(); ++k)
        for (std::size_t i = 0; i < reps[k].size(); ++i)
          out << "replicate" << k + 1 << ',' << i + 1 << ',' << reps[k].trials()[i].x << ',' << reps[k].trials()[i].r
              << '\n';
    }
  }
}
