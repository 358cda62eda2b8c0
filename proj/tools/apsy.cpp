// apsy: command-line front end for sessions, simulations and studies.

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"

#include "apsy/apsy.hpp"
#include "apsy/http_service.hpp"

using namespace apsy;

namespace {

struct Common {
  std::string session;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> samples;
  std::optional<int> grid;
  bool pretty = false;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--session", c.session, "session file");
  app->add_option("--seed", c.seed, "RNG seed");
  app->add_option("--samples", c.samples, "Monte-Carlo sample count");
  app->add_option("--grid", c.grid, "stimulus grid points");
  app->add_flag("--pretty", c.pretty, "human-readable output");
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::NotFound, "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(std::stod(tok));
  return out;
}

std::array<double, 3> parse_triple(const std::string& s) {
  const auto v = parse_list(s);
  require(v.size() == 3, ErrorCode::InvalidArgument, "expected three comma-separated values");
  return {v[0], v[1], v[2]};
}

// "threshold:0.75", "width:0.1", "slope"
Functional parse_functional(const std::string& s) {
  const auto colon = s.find(':');
  const std::string head = s.substr(0, colon);
  const double arg = colon == std::string::npos ? 0.0 : std::stod(s.substr(colon + 1));
  if (head == "threshold") return Functional::threshold(arg);
  if (head == "width") return Functional::width(arg);
  if (head == "slope") return Functional::slope();
  fail(ErrorCode::InvalidArgument, "unknown functional '" + s + "'");
}

Estimand parse_estimand(const std::string& s) {
  if (s == "mu") return Estimand::mu();
  if (s == "nu") return Estimand::nu();
  if (s.rfind("threshold:", 0) == 0) return Estimand::threshold(std::stod(s.substr(10)));
  fail(ErrorCode::InvalidArgument, "unknown estimand '" + s + "'");
}

Params params_any(const Json& j) {
  if (j.contains("sigma")) return params_from_natural(j.at("mu"), j.at("sigma"), j.at("lambda"));
  return params_from_json(j);
}

void emit(const Json& j, bool pretty) { std::cout << (pretty ? j.dump(2) : j.dump()) << '\n'; }

void print_table(const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> w;
  for (const auto& r : rows)
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (w.size() <= i) w.push_back(0);
      w[i] = std::max(w[i], r[i].size());
    }
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) std::cout << std::left << std::setw(static_cast<int>(w[i] + 2)) << r[i];
    std::cout << '\n';
  }
}

std::string num(double v, int prec = 4) {
  std::ostringstream os;
  os << std::setprecision(prec) << v;
  return os.str();
}

SessionState load_required(const Common& c) {
  require(!c.session.empty(), ErrorCode::InvalidArgument, "--session is required");
  return session_load(c.session);
}

void apply_policy_overrides(PlacementPolicy& p, const Common& c, const Design& d) {
  if (c.samples) p.sampleCount = *c.samples;
  if (c.grid) {
    const int rounds = p.grid.refineRounds;
    const double shrink = p.grid.refineShrink;
    p.grid = StimulusGrid::uniform(d, *c.grid);
    p.grid.refineRounds = rounds;
    p.grid.refineShrink = shrink;
  }
  p.validate(d);
}

// ---------------------------------------------------------------------------

struct InitArgs {
  std::string config;
  std::string task = "2afc";
  double gamma = 0.5;
  double lo = -4.0, hi = 11.0;
  std::string priorMean = "3,0,-3.8918202981106265";
  std::string priorSd = "0.7071067811865476,0.7071067811865476,0.3";
  std::string policy = "psi";
  std::string estimator = "gaussian-moments";
  std::size_t stopTrials = 100;
  std::optional<double> stopEntropy;
};

int cmd_init(const Common& c, const InitArgs& a) {
  require(!c.session.empty(), ErrorCode::InvalidArgument, "--session is required");
  Json body = a.config.empty() ? Json::object() : Json::parse(read_file(a.config));
  if (!body.contains("design")) {
    Design d = a.task == "yes-no"  ? Design::yes_no(a.lo, a.hi)
               : a.task == "2afc" ? Design::two_afc(a.lo, a.hi)
                                  : Design::forced_choice(a.gamma, a.lo, a.hi);
    body["design"] = to_json(d);
  }
  const Design d = design_from_json(body["design"]);
  if (!body.contains("prior")) body["prior"] = to_json(GaussianPrior::make(parse_triple(a.priorMean), parse_triple(a.priorSd)));
  PlacementPolicy policy = PlacementPolicy::psi(d);
  if (body.contains("policy")) {
    policy = policy_from_json(body["policy"], d);
  } else if (a.policy != "psi") {
    policy = PlacementPolicy::t(parse_functional(a.policy), d,
                                a.estimator == "kde" ? Estimator::KdeNonparametric : Estimator::GaussianMoments);
  }
  apply_policy_overrides(policy, c, d);
  StoppingRule rule = a.stopEntropy ? StoppingRule::entropy_below(*a.stopEntropy) : StoppingRule::fixed(a.stopTrials);
  if (body.contains("stoppingRule")) rule = stopping_rule_from_json(body["stoppingRule"]);
  std::uint64_t seed = c.seed.value_or(body.value("seed", std::uint64_t{0}));
  if (!c.seed && !body.contains("seed")) {
    std::random_device rd;
    seed = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
  }
  SessionState st = session_create(d, prior_from_json(body["prior"]), policy, rule, seed);
  session_save(st, c.session);
  if (c.pretty) {
    std::cout << "created " << st.id << " (seed " << seed << ") -> " << c.session << '\n';
  } else {
    emit(Json{{"id", st.id}, {"seed", seed}, {"file", c.session}, {"digest", session_digest(st)}}, false);
  }
  return 0;
}

int cmd_next(const Common& c, bool showCurve) {
  SessionState st = load_required(c);
  const PlacementPolicy stored = st.policy;
  apply_policy_overrides(st.policy, c, st.design);
  const Proposal p = session_next(st);
  st.policy = stored;
  session_save(st, c.session);
  if (c.pretty) {
    std::cout << "trial " << st.trials.size() + 1 << ": present x = " << num(p.x, 6)
              << (p.allZeroInformation ? "  (no informative level; domain midpoint)" : "") << '\n';
    if (showCurve) {
      std::vector<std::vector<std::string>> rows{{"x", "value"}};
      for (std::size_t i = 0; i < p.curve.levels.size(); ++i)
        rows.push_back({num(p.curve.levels[i], 6), num(p.curve.values[i], 6)});
      print_table(rows);
    }
  } else {
    Json j{{"x", p.x}, {"trial", st.trials.size() + 1}, {"allZeroInformation", p.allZeroInformation}};
    if (showCurve) j["costCurve"] = to_json(p.curve)["points"];
    emit(j, false);
  }
  return 0;
}

int cmd_respond(const Common& c, int r) {
  SessionState st = load_required(c);
  session_respond(st, r);
  session_save(st, c.session);
  const Params& m = st.posterior.mode;
  if (c.pretty) {
    std::cout << "recorded r=" << r << " (" << st.trials.size() << " trials); mode mu=" << num(m.mu) << " sigma="
              << num(m.sigma()) << " lambda=" << num(m.lambda());
    if (st.stopped) std::cout << "; stopped: " << st.stopReason;
    std::cout << '\n';
  } else {
    emit(Json{{"trials", st.trials.size()}, {"mode", natural_json(m)}, {"stopped", st.stopped}, {"stopReason", st.stopReason}},
         false);
  }
  return 0;
}

int cmd_estimate(const Common& c, bool record) {
  SessionState st = load_required(c);
  EstimateOptions opt;
  opt.seed = c.seed.value_or(0);
  if (c.samples) {
    opt.samples = *c.samples;
    opt.resampled = std::min(opt.resampled, opt.samples / 2);
  }
  if (c.grid) opt.curvePoints = *c.grid;
  const EstimateReport r = session_estimate(st, opt);
  if (record) {
    session_record_estimate(st, r);
    session_save(st, c.session);
  }
  if (!c.pretty) {
    emit(to_json(r), false);
    return 0;
  }
  std::cout << r.trials << " trials, draws: " << r.sampleSource << ", entropy " << num(r.entropy) << " nats\n";
  std::vector<std::vector<std::string>> rows{{"param", "mode", "mean", "quantile CI", "hessian CI"}};
  const auto get = [](const Params& p, const std::string& k) {
    return k == "mu" ? p.mu : k == "nu" ? p.nu : k == "eta" ? p.eta : k == "sigma" ? p.sigma() : p.lambda();
  };
  for (const auto& [k, q] : r.quantileIntervals) {
    const Interval& h = r.hessian_interval(k);
    rows.push_back({k, num(get(r.mode, k)), num(get(r.mean, k)), "[" + num(q.lo) + ", " + num(q.hi) + "]",
                    "[" + num(h.lo) + ", " + num(h.hi) + "]"});
  }
  print_table(rows);
  std::vector<std::vector<std::string>> fr{{"functional", "mean", "median", "interval"}};
  for (const auto& f : r.functionals)
    fr.push_back({f.label, num(f.mean), num(f.median), "[" + num(f.quantile.lo) + ", " + num(f.quantile.hi) + "]"});
  print_table(fr);
  return 0;
}

struct SimArgs {
  std::string kind = "gaussian";
  double mu = 3.5, sigma = std::exp(0.5), lambda = 0.02;
  double drift = kDefaultDrift;
  std::size_t trials = 10;
};

int cmd_simulate(const Common& c, const SimArgs& a) {
  SessionState st = load_required(c);
  const auto obs = a.kind == "drifting"
                       ? SimulatedObserver::drifting(params_from_natural(a.mu, a.sigma, a.lambda), a.drift, st.design)
                       : SimulatedObserver::gaussian(params_from_natural(a.mu, a.sigma, a.lambda), st.design);
  require(a.kind == "gaussian" || a.kind == "drifting", ErrorCode::InvalidArgument, "observer must be gaussian or drifting");
  apply_policy_overrides(st.policy, c, st.design);
  std::mt19937_64 rng(derive_seed(c.seed.value_or(0), st.trials.size()));
  Json trips = Json::array();
  for (std::size_t k = 0; k < a.trials && !st.stopped; ++k) {
    if (!st.pendingStimulus) session_next(st);
    const double x = *st.pendingStimulus;
    const int r = observer_respond(obs, x, st.trials.size() + 1, rng);
    session_respond(st, r);
    trips.push_back(Json::array({st.trials.size(), x, r}));
  }
  session_save(st, c.session);
  if (c.pretty) {
    std::vector<std::vector<std::string>> rows{{"t", "x", "r"}};
    for (const auto& t : trips) rows.push_back({t[0].dump(), num(t[1].get<double>(), 6), t[2].dump()});
    print_table(rows);
    if (st.stopped) std::cout << "stopped: " << st.stopReason << '\n';
  } else {
    emit(Json{{"triplets", trips}, {"mode", natural_json(st.posterior.mode)}, {"stopped", st.stopped}}, false);
  }
  return 0;
}

// Config keys (all optional): truth, design, prior, priors[{label, prior}],
// schemes, estimands, trialCounts, replications, policySamples, gridPoints,
// refineRounds, estimateSamples, seed.
int cmd_study(const Common& c, const std::string& configPath, const std::string& out, std::optional<std::size_t> reps) {
  const Json cfg = configPath.empty() ? Json::object() : Json::parse(read_file(configPath));
  StudySetup S;
  if (cfg.contains("truth")) S.truth = params_any(cfg["truth"]);
  if (cfg.contains("design")) S.design = design_from_json(cfg["design"]);
  S.trialCounts = cfg.value("trialCounts", S.trialCounts);
  S.replications = reps.value_or(cfg.value("replications", S.replications));
  S.policySamples = c.samples.value_or(cfg.value("policySamples", S.policySamples));
  S.gridPoints = c.grid.value_or(cfg.value("gridPoints", S.gridPoints));
  S.refineRounds = cfg.value("refineRounds", S.refineRounds);
  S.estimateSamples = cfg.value("estimateSamples", S.estimateSamples);
  const std::uint64_t seed = c.seed.value_or(cfg.value("seed", std::uint64_t{42}));

  std::vector<std::pair<std::string, GaussianPrior>> priors;
  if (cfg.contains("priors")) {
    for (const auto& p : cfg["priors"]) priors.emplace_back(p.at("label").get<std::string>(), prior_from_json(p.at("prior")));
  } else {
    priors.emplace_back("", cfg.contains("prior") ? prior_from_json(cfg["prior"]) : S.prior());
  }
  std::vector<Estimand> estimands;
  for (const auto& e : cfg.value("estimands", std::vector<std::string>{"mu", "nu"})) estimands.push_back(parse_estimand(e));
  const auto schemeNames = cfg.value("schemes", std::vector<std::string>{"psi", "uniform-wide", "uniform-medium", "uniform-tight"});

  const auto make_scheme = [&](const std::string& name) -> SamplingScheme {
    const auto spread = [&](const std::string& s) {
      if (s == "wide") return Spread::Wide;
      if (s == "medium") return Spread::Medium;
      if (s == "tight") return Spread::Tight;
      fail(ErrorCode::InvalidArgument, "unknown spread '" + s + "'");
    };
    if (name == "psi") return adaptive_scheme(S.policy(), "psi");
    if (name.rfind("uniform-", 0) == 0) return uniform_scheme(S.truth, spread(name.substr(8)), S.design);
    if (name.rfind("constant-", 0) == 0) return constant_scheme(S.truth, spread(name.substr(9)), S.design);
    if (name.rfind("t:", 0) == 0) {
      PlacementPolicy p = PlacementPolicy::t(parse_functional(name.substr(2)), S.design, Estimator::GaussianMoments,
                                             S.policySamples, S.gridPoints);
      p.grid.refineRounds = S.refineRounds;
      return adaptive_scheme(p, name);
    }
    fail(ErrorCode::InvalidArgument, "unknown scheme '" + name + "'");
  };

  std::vector<MseReport> all(estimands.size());
  for (std::size_t pi = 0; pi < priors.size(); ++pi)
    for (std::size_t si = 0; si < schemeNames.size(); ++si) {
      SamplingScheme scheme = make_scheme(schemeNames[si]);
      if (!priors[pi].first.empty()) scheme.label += "/" + priors[pi].first;
      const auto reports = run_study_multi(S.config(scheme, priors[pi].second), estimands,
                                           derive_seed(seed, pi * schemeNames.size() + si));
      for (std::size_t e = 0; e < reports.size(); ++e) {
        all[e].estimand = reports[e].estimand;
        all[e].truth = reports[e].truth;
        all[e].append(reports[e]);
      }
      if (c.pretty) std::cerr << "done " << scheme.label << '\n';
    }

  std::ostringstream csv;
  csv.precision(17);
  csv << "estimand,truth,scheme,trials,mean_estimate,mse,reps,failures\n";
  for (const auto& rep : all)
    for (const auto& r : rep.rows)
      csv << rep.estimand << ',' << rep.truth << ',' << r.scheme << ',' << r.trials << ',' << r.meanEstimate << ','
          << r.mse << ',' << r.reps << ',' << r.failures << '\n';
  if (!out.empty()) {
    std::ofstream f(out);
    f << csv.str();
  }
  if (c.pretty) {
    std::vector<std::vector<std::string>> rows{{"estimand", "scheme", "trials", "mse", "reps", "failures"}};
    for (const auto& rep : all)
      for (const auto& r : rep.rows)
        rows.push_back({rep.estimand, r.scheme, std::to_string(r.trials), num(r.mse), std::to_string(r.reps),
                        std::to_string(r.failures)});
    print_table(rows);
  } else if (out.empty()) {
    std::cout << csv.str();
  }
  return 0;
}

int cmd_diagnose(const Common& c, bool ppc, const std::string& side) {
  const SessionState st = load_required(c);
  Json j = session_diagnostics(st, c.seed.value_or(0));
  if (ppc) {
    PpcOptions opt;
    if (c.samples) opt.posteriorSamples = *c.samples;
    opt.side = side == "lower" ? PpcSide::Lower : side == "upper" ? PpcSide::Upper : PpcSide::TwoSided;
    const PpcResult r = ppc_late_block_test(st.trials, st.prior, st.posterior, opt, c.seed.value_or(0));
    j["lateBlockTest"] = Json{{"observed", r.observed},
                              {"lowerQuantile", r.lowerQuantile},
                              {"upperQuantile", r.upperQuantile},
                              {"below", r.below},
                              {"above", r.above},
                              {"flagged", r.flagged}};
  }
  emit(j, c.pretty);
  return 0;
}

int cmd_serve(const Common& c, const std::string& host, int port, const std::string& store) {
  SessionService svc(store);
  if (!c.session.empty()) svc.adopt(session_load(c.session));
  std::cerr << "listening on " << host << ':' << port << '\n';
  return serve_http(svc, host, port) ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive Bayesian psychometric sessions"};
  app.require_subcommand(1);
  Common c;

  auto* init = app.add_subcommand("init", "create a session file");
  InitArgs ia;
  add_common(init, c);
  init->add_option("--config", ia.config, "JSON body as accepted by POST /sessions");
  init->add_option("--task", ia.task, "2afc, nafc or yes-no")->check(CLI::IsMember({"2afc", "nafc", "yes-no"}));
  init->add_option("--gamma", ia.gamma, "chance rate for nafc");
  init->add_option("--lo", ia.lo, "lowest stimulus level");
  init->add_option("--hi", ia.hi, "highest stimulus level");
  init->add_option("--prior-mean", ia.priorMean, "mu,nu,eta");
  init->add_option("--prior-sd", ia.priorSd, "mu,nu,eta");
  init->add_option("--policy", ia.policy, "psi, threshold:<p>, width:<a> or slope");
  init->add_option("--estimator", ia.estimator, "T-policy estimator")->check(CLI::IsMember({"gaussian-moments", "kde"}));
  init->add_option("--stop-trials", ia.stopTrials, "stop after this many trials");
  init->add_option("--stop-entropy", ia.stopEntropy, "stop when posterior entropy (nats) falls below");

  auto* next = app.add_subcommand("next", "propose the next stimulus");
  bool curve = false;
  add_common(next, c);
  next->add_flag("--curve", curve, "include the cost curve");

  auto* respond = app.add_subcommand("respond", "record the response to the pending stimulus");
  int r = 0;
  add_common(respond, c);
  respond->add_option("-r,--response", r, "1 correct/yes, 0 incorrect/no")->required()->check(CLI::Range(0, 1));

  auto* estimate = app.add_subcommand("estimate", "posterior summary");
  bool record = false;
  add_common(estimate, c);
  estimate->add_flag("--record", record, "append an Estimated event to the session");

  auto* simulate = app.add_subcommand("simulate", "answer trials with a simulated observer");
  SimArgs sa;
  add_common(simulate, c);
  simulate->add_option("--observer", sa.kind, "gaussian or drifting")->check(CLI::IsMember({"gaussian", "drifting"}));
  simulate->add_option("--mu", sa.mu);
  simulate->add_option("--sigma", sa.sigma);
  simulate->add_option("--lambda", sa.lambda);
  simulate->add_option("--drift", sa.drift, "downward mu drift per trial");
  simulate->add_option("--trials", sa.trials, "number of trials to answer");

  auto* study = app.add_subcommand("study", "Monte-Carlo MSE study, CSV output");
  std::string studyConfig, studyOut;
  std::optional<std::size_t> studyReps;
  add_common(study, c);
  study->add_option("--config", studyConfig, "study JSON");
  study->add_option("--out", studyOut, "CSV path");
  study->add_option("--reps", studyReps, "replications");

  auto* diagnose = app.add_subcommand("diagnose", "diagnostic exports for plotting");
  bool ppc = false;
  std::string side = "two-sided";
  add_common(diagnose, c);
  diagnose->add_flag("--ppc", ppc, "run the late-block posterior predictive check");
  diagnose->add_option("--side", side)->check(CLI::IsMember({"lower", "upper", "two-sided"}));

  auto* serve = app.add_subcommand("serve", "HTTP JSON API");
  std::string host = "127.0.0.1", store;
  int port = 8080;
  add_common(serve, c);
  serve->add_option("--host", host, "listen address");
  serve->add_option("--port", port, "listen port");
  serve->add_option("--store", store, "directory for session files");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*init) return cmd_init(c, ia);
    if (*next) return cmd_next(c, curve);
    if (*respond) return cmd_respond(c, r);
    if (*estimate) return cmd_estimate(c, record);
    if (*simulate) return cmd_simulate(c, sa);
    if (*study) return cmd_study(c, studyConfig, studyOut, studyReps);
    if (*diagnose) return cmd_diagnose(c, ppc, side);
    if (*serve) return cmd_serve(c, host, port, store);
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.code()) << "]: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
