// How two responses move the threshold posterior: an error at a high level
// pushes it up a lot, a following success at a lower level pulls it back a
// little.

#include <cstdio>

#include "apsy/apsy.hpp"

using namespace apsy;

namespace {

void show(const char* label, const Dataset& data, const GaussianPrior& prior) {
  const LaplacePosterior lp = data.size() ? laplace_fit(data, prior) : laplace_from_prior(prior);
  const SampleSet s = importance_posterior(data, prior, lp, 20000, 3);
  const auto t = functional_samples(s, Functional::threshold(0.75), data.design()).samples;
  const auto q = weighted_quantiles(t.values, t.weights, std::vector<double>{0.05, 0.5, 0.95});
  std::printf("%-26s threshold mean %.3f  median %.3f  90%% [%.3f, %.3f]\n", label, weighted_mean(t), q[1], q[0], q[2]);
}

}  // namespace

int main() {
  const Design design = Design::two_afc(-4.0, 11.0);
  const GaussianPrior prior = GaussianPrior::make({3.0, 0.0, logit(0.02)}, {std::sqrt(0.5), std::sqrt(0.5), 0.3});
  Dataset data(design);
  show("prior", data, prior);
  data.add(6.0, 0);
  show("after r=0 at x=6", data, prior);
  data.add(3.0, 1);
  show("after r=1 at x=3", data, prior);
}
