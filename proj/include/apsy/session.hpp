#pragma once

// Session lifecycle: create -> propose -> respond -> estimate -> stop, with an
// append-only event log, replay, estimate reports and versioned JSON files.

#include <chrono>
#include <cstdint>
#include <ctime>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "apsy/bayes.hpp"
#include "apsy/placement.hpp"
#include "apsy/simlab.hpp"

namespace apsy {

using Json = nlohmann::ordered_json;

inline constexpr int kSessionSchemaVersion = 1;
inline constexpr const char* kSessionSchemaName = "apsy-session";

inline std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << v;
  return os.str();
}

enum class EventType { Created, Proposed, Responded, Estimated, Stopped };

inline const char* to_string(EventType e) {
  switch (e) {
    case EventType::Created: return "created";
    case EventType::Proposed: return "proposed";
    case EventType::Responded: return "responded";
    case EventType::Estimated: return "estimated";
    case EventType::Stopped: return "stopped";
  }
  return "?";
}

struct SessionEvent {
  EventType type = EventType::Created;
  std::string at;
  double x = 0.0;                 // Proposed, Responded
  int r = 0;                      // Responded
  std::string costCurveDigest;    // Proposed
  std::string text;               // Estimated summary, Stopped reason
};

struct SessionState {
  std::string id;
  Design design = Design::two_afc(0.0, 1.0);
  GaussianPrior prior;
  PlacementPolicy policy;
  StoppingRule stoppingRule = StoppingRule::fixed(100);
  Dataset trials{design};
  LaplacePosterior posterior;
  std::optional<double> pendingStimulus;
  std::optional<CostCurve> lastCostCurve;
  std::uint64_t seed = 0;
  std::uint64_t draws = 0;  // RNG draws consumed; each proposal or sample set uses derive_seed(seed, draws++)
  bool stopped = false;
  std::string stopReason;
  std::string createdAt;
  std::string updatedAt;
  std::vector<SessionEvent> events;
};

// ---------------------------------------------------------------------------
// JSON encoding of the value types

inline Json number_or_inf(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

inline double read_number(const Json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    fail(ErrorCode::CorruptFile, "expected a number, got '" + s + "'");
  }
  return j.get<double>();
}

inline Json to_json(const Params& p) { return Json{{"mu", p.mu}, {"nu", p.nu}, {"eta", p.eta}}; }
inline Params params_from_json(const Json& j) { return {j.at("mu").get<double>(), j.at("nu").get<double>(), j.at("eta").get<double>()}; }

inline Json natural_json(const Params& p) {
  return Json{{"mu", p.mu}, {"sigma", p.sigma()}, {"lambda", p.lambda()}};
}

inline Json to_json(const Design& d) {
  Json j;
  j["task"] = d.task() == Task::ForcedChoice ? "forced-choice" : "yes-no";
  if (d.task() == Task::ForcedChoice) j["gamma"] = d.gamma();
  j["xLo"] = d.x_lo();
  j["xHi"] = d.x_hi();
  return j;
}

inline Design design_from_json(const Json& j) {
  const auto task = j.at("task").get<std::string>();
  const double lo = j.at("xLo").get<double>(), hi = j.at("xHi").get<double>();
  if (task == "forced-choice") return Design::forced_choice(j.at("gamma").get<double>(), lo, hi);
  if (task == "yes-no") return Design::yes_no(lo, hi);
  fail(ErrorCode::InvalidArgument, "unknown task '" + task + "'");
}

inline Json to_json(const GaussianPrior& p) { return Json{{"mean", p.mean}, {"sd", p.sd}}; }
inline GaussianPrior prior_from_json(const Json& j) {
  return GaussianPrior::make(j.at("mean").get<std::array<double, 3>>(), j.at("sd").get<std::array<double, 3>>());
}

inline Json to_json(const Functional& f) {
  return std::visit(
      [](const auto& k) -> Json {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, Threshold>) return Json{{"kind", "threshold"}, {"level", k.level}};
        else if constexpr (std::is_same_v<K, Width>) return Json{{"kind", "width"}, {"margin", k.margin}};
        else if constexpr (std::is_same_v<K, Slope>) return Json{{"kind", "slope"}};
        else fail(ErrorCode::InvalidArgument, "custom functional '" + k.name + "' cannot be serialized");
      },
      f.kind);
}

inline Functional functional_from_json(const Json& j) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "threshold") return Functional::threshold(j.at("level").get<double>());
  if (kind == "width") return Functional::width(j.at("margin").get<double>());
  if (kind == "slope") return Functional::slope();
  fail(ErrorCode::InvalidArgument, "unknown functional kind '" + kind + "'");
}

inline Json to_json(const PlacementPolicy& p) {
  Json j;
  if (p.is_psi()) {
    j["kind"] = "psi";
  } else {
    const auto& t = std::get<TPolicy>(p.kind);
    j["kind"] = "t";
    j["functional"] = to_json(t.functional);
    j["estimator"] = t.estimator == Estimator::GaussianMoments ? "gaussian-moments" : "kde";
  }
  j["sampleCount"] = p.sampleCount;
  j["grid"] = Json{{"levels", p.grid.levels}, {"refineRounds", p.grid.refineRounds}, {"refineShrink", p.grid.refineShrink}};
  j["approximate"] = p.approximate;
  return j;
}

inline PlacementPolicy policy_from_json(const Json& j, const Design& d) {
  PlacementPolicy p = PlacementPolicy::psi(d);
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "t") {
    const auto est = j.value("estimator", std::string("gaussian-moments"));
    require(est == "gaussian-moments" || est == "kde", ErrorCode::InvalidArgument, "unknown estimator");
    p.kind = TPolicy{functional_from_json(j.at("functional")),
                     est == "kde" ? Estimator::KdeNonparametric : Estimator::GaussianMoments};
  } else {
    require(kind == "psi", ErrorCode::InvalidArgument, "policy kind must be 'psi' or 't'");
  }
  p.sampleCount = j.value("sampleCount", kDefaultSampleCount);
  if (j.contains("grid")) {
    const Json& g = j.at("grid");
    if (g.contains("levels")) {
      p.grid.levels = g.at("levels").get<std::vector<double>>();
    } else {
      p.grid = StimulusGrid::uniform(d, g.value("points", kDefaultGridPoints));
    }
    p.grid.refineRounds = g.value("refineRounds", 2);
    p.grid.refineShrink = g.value("refineShrink", 0.2);
  }
  p.approximate = j.value("approximate", false);
  p.validate(d);
  return p;
}

inline Json to_json(const StoppingRule& r) {
  return std::visit(
      [](const auto& k) -> Json {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, FixedTrials>) return Json{{"kind", "fixed-trials"}, {"count", k.count}};
        else if constexpr (std::is_same_v<K, EntropyBelow>) return Json{{"kind", "entropy-below"}, {"threshold", k.threshold}};
        else
          return Json{{"kind", "probability-within"},
                      {"functional", to_json(k.functional)},
                      {"lo", number_or_inf(k.lo)},
                      {"hi", number_or_inf(k.hi)},
                      {"confidence", k.confidence}};
      },
      r.kind);
}

inline StoppingRule stopping_rule_from_json(const Json& j) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "fixed-trials") return StoppingRule::fixed(j.at("count").get<std::size_t>());
  if (kind == "entropy-below") return StoppingRule::entropy_below(j.at("threshold").get<double>());
  if (kind == "probability-within")
    return StoppingRule::probability_within(functional_from_json(j.at("functional")), read_number(j.at("lo")),
                                            read_number(j.at("hi")), j.at("confidence").get<double>());
  fail(ErrorCode::InvalidArgument, "unknown stopping rule '" + kind + "'");
}

inline Json to_json(const LaplacePosterior& lp) {
  std::vector<double> cov;
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) cov.push_back(lp.covariance(i, k));
  return Json{{"mode", to_json(lp.mode)}, {"covariance", cov}, {"logPosteriorAtMode", lp.logPosteriorAtMode}};
}

inline LaplacePosterior posterior_from_json(const Json& j) {
  LaplacePosterior lp;
  lp.mode = params_from_json(j.at("mode"));
  const auto cov = j.at("covariance").get<std::vector<double>>();
  require(cov.size() == 9, ErrorCode::CorruptFile, "covariance must have 9 entries");
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) lp.covariance(i, k) = cov[static_cast<std::size_t>(3 * i + k)];
  lp.logPosteriorAtMode = j.at("logPosteriorAtMode").get<double>();
  return lp;
}

inline Json to_json(const CostCurve& c) {
  Json pts = Json::array();
  for (std::size_t i = 0; i < c.levels.size(); ++i) pts.push_back(Json::array({c.levels[i], c.values[i]}));
  return Json{{"points", pts}, {"chosen", c.chosen}};
}

inline CostCurve cost_curve_from_json(const Json& j) {
  CostCurve c;
  for (const auto& p : j.at("points")) {
    c.levels.push_back(p.at(0).get<double>());
    c.values.push_back(p.at(1).get<double>());
  }
  c.chosen = j.at("chosen").get<std::size_t>();
  return c;
}

inline Json to_json(const SessionEvent& e, bool withTime = true) {
  Json j{{"type", to_string(e.type)}};
  if (withTime) j["at"] = e.at;
  switch (e.type) {
    case EventType::Created: break;
    case EventType::Proposed:
      j["x"] = e.x;
      j["costCurveDigest"] = e.costCurveDigest;
      break;
    case EventType::Responded:
      j["x"] = e.x;
      j["r"] = e.r;
      break;
    case EventType::Estimated: j["summary"] = e.text; break;
    case EventType::Stopped: j["reason"] = e.text; break;
  }
  return j;
}

inline SessionEvent event_from_json(const Json& j) {
  SessionEvent e;
  const auto type = j.at("type").get<std::string>();
  e.at = j.value("at", std::string());
  if (type == "created") {
    e.type = EventType::Created;
  } else if (type == "proposed") {
    e.type = EventType::Proposed;
    e.x = j.at("x").get<double>();
    e.costCurveDigest = j.at("costCurveDigest").get<std::string>();
  } else if (type == "responded") {
    e.type = EventType::Responded;
    e.x = j.at("x").get<double>();
    e.r = j.at("r").get<int>();
  } else if (type == "estimated") {
    e.type = EventType::Estimated;
    e.text = j.at("summary").get<std::string>();
  } else if (type == "stopped") {
    e.type = EventType::Stopped;
    e.text = j.at("reason").get<std::string>();
  } else {
    fail(ErrorCode::CorruptFile, "unknown event type '" + type + "'");
  }
  return e;
}

/// Canonical document. The digest form (`withTimes` false) drops every
/// timestamp and the cached cost curve, which the Proposed events already
/// identify by digest.
inline Json session_to_json(const SessionState& st, bool withTimes = true) {
  Json j;
  j["schema"] = kSessionSchemaName;
  j["version"] = kSessionSchemaVersion;
  j["id"] = st.id;
  if (withTimes) {
    j["createdAt"] = st.createdAt;
    j["updatedAt"] = st.updatedAt;
  }
  j["design"] = to_json(st.design);
  j["prior"] = to_json(st.prior);
  j["policy"] = to_json(st.policy);
  j["stoppingRule"] = to_json(st.stoppingRule);
  j["rng"] = Json{{"seed", st.seed}, {"draws", st.draws}};
  Json trials = Json::array();
  for (const auto& t : st.trials.trials()) trials.push_back(Json::array({t.x, t.r}));
  j["trials"] = trials;
  j["posterior"] = to_json(st.posterior);
  j["pendingStimulus"] = st.pendingStimulus ? Json(*st.pendingStimulus) : Json(nullptr);
  if (withTimes) j["lastCostCurve"] = st.lastCostCurve ? to_json(*st.lastCostCurve) : Json(nullptr);
  j["stopped"] = st.stopped;
  j["stopReason"] = st.stopReason;
  Json ev = Json::array();
  for (const auto& e : st.events) ev.push_back(to_json(e, withTimes));
  j["events"] = ev;
  return j;
}

inline std::string session_digest(const SessionState& st) { return hex64(fnv1a(session_to_json(st, false).dump())); }

inline std::string cost_curve_digest(const CostCurve& c) { return hex64(fnv1a(to_json(c).dump())); }

inline SessionState session_from_json(const Json& j) {
  try {
    if (!j.is_object() || j.value("schema", std::string()) != kSessionSchemaName)
      fail(ErrorCode::CorruptFile, "not an apsy session document");
    const int version = j.at("version").get<int>();
    if (version != kSessionSchemaVersion)
      fail(ErrorCode::SchemaVersionMismatch, "session schema version " + std::to_string(version) +
                                                 " is not supported (expected " +
                                                 std::to_string(kSessionSchemaVersion) + "); migrate the file first");
    SessionState st;
    st.id = j.at("id").get<std::string>();
    st.createdAt = j.value("createdAt", std::string());
    st.updatedAt = j.value("updatedAt", std::string());
    st.design = design_from_json(j.at("design"));
    st.prior = prior_from_json(j.at("prior"));
    st.policy = policy_from_json(j.at("policy"), st.design);
    st.stoppingRule = stopping_rule_from_json(j.at("stoppingRule"));
    st.seed = j.at("rng").at("seed").get<std::uint64_t>();
    st.draws = j.at("rng").at("draws").get<std::uint64_t>();
    st.trials = Dataset(st.design);
    for (const auto& t : j.at("trials")) st.trials.add(t.at(0).get<double>(), t.at(1).get<int>());
    st.posterior = posterior_from_json(j.at("posterior"));
    if (!j.at("pendingStimulus").is_null()) st.pendingStimulus = j.at("pendingStimulus").get<double>();
    if (j.contains("lastCostCurve") && !j.at("lastCostCurve").is_null()) st.lastCostCurve = cost_curve_from_json(j.at("lastCostCurve"));
    st.stopped = j.at("stopped").get<bool>();
    st.stopReason = j.at("stopReason").get<std::string>();
    for (const auto& e : j.at("events")) st.events.push_back(event_from_json(e));
    return st;
  } catch (const Json::exception& e) {
    fail(ErrorCode::CorruptFile, std::string("malformed session document: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Lifecycle

inline std::string session_id_for_seed(std::uint64_t seed) { return "s-" + hex64(mix64(seed)); }

inline void validate_serializable(const PlacementPolicy& p, const StoppingRule& r) {
  (void)to_json(p);
  (void)to_json(r);
}

inline SessionState session_create(const Design& design, const GaussianPrior& prior, const PlacementPolicy& policy,
                                   const StoppingRule& rule, std::uint64_t seed, const std::string& now = utc_now(),
                                   std::optional<std::string> id = std::nullopt) {
  prior.validate();
  policy.validate(design);
  validate_serializable(policy, rule);
  SessionState st;
  st.id = id ? *id : session_id_for_seed(seed);
  st.design = design;
  st.prior = prior;
  st.policy = policy;
  st.stoppingRule = rule;
  st.trials = Dataset(design);
  st.posterior = laplace_from_prior(prior);
  st.seed = seed;
  st.createdAt = st.updatedAt = now;
  st.events.push_back({EventType::Created, now, 0.0, 0, {}, {}});
  return st;
}

struct Proposal {
  double x;
  CostCurve curve;
  bool allZeroInformation;
};

inline Proposal session_next(SessionState& st, const std::string& now = utc_now()) {
  if (st.stopped) fail(ErrorCode::SessionStopped, "session " + st.id + " has stopped: " + st.stopReason);
  if (st.pendingStimulus) fail(ErrorCode::AlreadyPending, "session " + st.id + " already awaits a response");
  const Selection sel = select_next(st.policy, st.posterior, st.design, derive_seed(st.seed, st.draws));
  ++st.draws;
  st.pendingStimulus = sel.x;
  st.lastCostCurve = sel.curve;
  st.updatedAt = now;
  st.events.push_back({EventType::Proposed, now, sel.x, 0, cost_curve_digest(sel.curve), {}});
  return {sel.x, sel.curve, sel.allZeroInformation};
}

namespace detail {

// Trial append, refit and stopping check shared by the live path and replay.
// Returns the stop reason when the rule fires.
inline std::optional<std::string> apply_response(SessionState& st, double x, int r) {
  st.trials.add(x, r);
  st.pendingStimulus.reset();
  st.posterior = refit(st.trials, st.prior, st.posterior.mode);
  std::optional<SampleSet> samples;
  if (st.stoppingRule.needs_samples()) {
    samples = sample_laplace(st.posterior, st.policy.sampleCount, derive_seed(st.seed, st.draws));
    ++st.draws;
  }
  if (should_stop(st.stoppingRule, st.posterior, samples ? &*samples : nullptr, st.trials.size(), st.design))
    return std::string("stopping rule ") + to_json(st.stoppingRule).at("kind").get<std::string>() + " satisfied after " +
           std::to_string(st.trials.size()) + " trials";
  return std::nullopt;
}

}  // namespace detail

inline void session_respond(SessionState& st, int r, const std::string& now = utc_now()) {
  if (!st.pendingStimulus) fail(ErrorCode::NoPendingStimulus, "session " + st.id + " has no pending stimulus");
  require(r == 0 || r == 1, ErrorCode::DomainError, "response must be 0 or 1");
  const double x = *st.pendingStimulus;
  const auto stop = detail::apply_response(st, x, r);
  st.updatedAt = now;
  st.events.push_back({EventType::Responded, now, x, r, {}, {}});
  if (stop) {
    st.stopped = true;
    st.stopReason = *stop;
    st.events.push_back({EventType::Stopped, now, 0.0, 0, {}, *stop});
  }
}

inline void session_stop(SessionState& st, const std::string& reason, const std::string& now = utc_now()) {
  if (st.stopped) return;
  st.stopped = true;
  st.stopReason = reason;
  st.pendingStimulus.reset();
  st.updatedAt = now;
  st.events.push_back({EventType::Stopped, now, 0.0, 0, {}, reason});
}

/// Rebuilds a session from its configuration and event log. Proposals are
/// taken from the log (levels are not recomputed), but the RNG draw counter
/// advances exactly as in the live session.
inline SessionState session_replay(const SessionState& config, const std::vector<SessionEvent>& events) {
  require(!events.empty() && events.front().type == EventType::Created, ErrorCode::CorruptFile,
          "event log must start with a Created event");
  SessionState st = session_create(config.design, config.prior, config.policy, config.stoppingRule, config.seed,
                                   events.front().at, config.id);
  for (std::size_t i = 1; i < events.size(); ++i) {
    const SessionEvent& e = events[i];
    switch (e.type) {
      case EventType::Created: fail(ErrorCode::CorruptFile, "duplicate Created event");
      case EventType::Proposed:
        require(!st.pendingStimulus && !st.stopped, ErrorCode::CorruptFile, "proposal without a free slot");
        st.pendingStimulus = e.x;
        ++st.draws;
        break;
      case EventType::Responded:
        require(st.pendingStimulus && *st.pendingStimulus == e.x, ErrorCode::CorruptFile,
                "response does not match the pending proposal");
        (void)detail::apply_response(st, e.x, e.r);
        break;
      case EventType::Estimated: break;
      case EventType::Stopped:
        st.stopped = true;
        st.stopReason = e.text;
        st.pendingStimulus.reset();
        break;
    }
    st.events.push_back(e);
    if (!e.at.empty()) st.updatedAt = e.at;
  }
  return st;
}

inline SessionState session_replay(const SessionState& st) { return session_replay(st, st.events); }

// ---------------------------------------------------------------------------
// Persistence

inline void session_save(const SessionState& st, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorCode::InvalidArgument, "cannot open session file for writing");
  out << session_to_json(st).dump(2) << '\n';
  require(static_cast<bool>(out), ErrorCode::InvalidArgument, "failed writing session file");
}

inline SessionState session_parse(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::exception& e) {
    fail(ErrorCode::CorruptFile, std::string("session file is not valid JSON: ") + e.what());
  }
  return session_from_json(j);
}

inline SessionState session_load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::NotFound, "session file not found: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return session_parse(ss.str());
}

// ---------------------------------------------------------------------------
// Estimate report

struct EstimateOptions {
  std::size_t samples = 4000;      // Laplace draws before resampling
  std::size_t resampled = 1000;    // importance-resampled draws kept
  double level = 0.95;             // credible level of every interval
  int curvePoints = 41;
  std::uint64_t seed = 0;
};

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

inline Json to_json(const Interval& i) { return Json::array({i.lo, i.hi}); }

struct FunctionalSummary {
  std::string label;
  double mean = 0.0;
  double median = 0.0;
  Interval quantile;
  std::size_t dropped = 0;
};

struct EstimateReport {
  std::size_t trials = 0;
  std::string sampleSource;  // "importance-resampled" or "laplace"
  Params mode;
  Params mean;
  double level = 0.95;
  // Keys: mu, nu, eta, sigma, lambda.
  std::vector<std::pair<std::string, Interval>> quantileIntervals;
  std::vector<std::pair<std::string, Interval>> hessianIntervals;
  std::vector<FunctionalSummary> functionals;
  std::vector<double> curveX;
  std::vector<double> curveMean;
  std::vector<std::vector<double>> curveBands;  // per x: lower, median, upper
  double entropy = 0.0;                         // nats, Gaussian approximation
  bool stopped = false;

  const Interval& quantile_interval(const std::string& k) const {
    for (const auto& [n, i] : quantileIntervals)
      if (n == k) return i;
    fail(ErrorCode::NotFound, "no interval for " + k);
  }
  const Interval& hessian_interval(const std::string& k) const {
    for (const auto& [n, i] : hessianIntervals)
      if (n == k) return i;
    fail(ErrorCode::NotFound, "no interval for " + k);
  }
};

/// Posterior draws for reporting: Laplace draws importance-resampled toward
/// the exact posterior, or the raw Laplace draws when the weights degenerate.
inline std::pair<SampleSet, std::string> report_samples(const Dataset& data, const GaussianPrior& prior,
                                                        const LaplacePosterior& lp, std::size_t n, std::size_t k,
                                                        std::uint64_t seed) {
  const LaplaceT q(lp);
  try {
    return {importance_resample(
                q.sample(n, derive_seed(seed, 1)), [&](const Params& p) { return log_posterior_unnorm(data, prior, p); },
                [&](const Params& p) { return q.log_density(p); }, k, derive_seed(seed, 2)),
            "importance-resampled"};
  } catch (const Error& e) {
    if (e.code() != ErrorCode::DegenerateWeights) throw;
    return {sample_laplace(lp, n, derive_seed(seed, 1)), "laplace"};
  }
}

inline Functional midpoint_threshold(const Design& d) {
  return Functional::threshold(d.task() == Task::ForcedChoice ? 0.5 * (1.0 + d.gamma()) : 0.5);
}

inline EstimateReport session_estimate(const SessionState& st, const EstimateOptions& opt = {}) {
  require(opt.level > 0.0 && opt.level < 1.0, ErrorCode::DomainError, "credible level must lie in (0,1)");
  require(opt.resampled >= 1 && opt.resampled < opt.samples, ErrorCode::InvalidArgument,
          "resampled count must be below the sample count");
  EstimateReport rep;
  rep.trials = st.trials.size();
  rep.level = opt.level;
  rep.mode = st.posterior.mode;
  rep.stopped = st.stopped;
  rep.entropy = posterior_entropy_gaussian(st.posterior);

  auto [s, source] = report_samples(st.trials, st.prior, st.posterior, opt.samples, opt.resampled, opt.seed);
  rep.sampleSource = source;
  rep.mean = weighted_mean(s);

  const double a = 0.5 * (1.0 - opt.level);
  const std::vector<double> probs{a, 0.5, 1.0 - a};
  const auto column = [&](auto get) {
    std::vector<double> v(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) v[i] = get(s.values[i]);
    return v;
  };
  const auto qi = [&](const std::vector<double>& v) {
    const auto q = weighted_quantiles(v, s.weights, probs);
    return Interval{q[0], q[2]};
  };
  const auto mus = column([](const Params& p) { return p.mu; });
  const auto nus = column([](const Params& p) { return p.nu; });
  const auto etas = column([](const Params& p) { return p.eta; });
  const Interval qmu = qi(mus), qnu = qi(nus), qeta = qi(etas);
  rep.quantileIntervals = {{"mu", qmu},
                           {"nu", qnu},
                           {"eta", qeta},
                           {"sigma", {std::exp(qnu.lo), std::exp(qnu.hi)}},
                           {"lambda", {logistic(qeta.lo), logistic(qeta.hi)}}};

  const double z = normal_quantile(1.0 - a, a);
  const Vec3 sd = st.posterior.sd();
  const Vec3 m = to_vec(st.posterior.mode);
  const Interval hmu{m[0] - z * sd[0], m[0] + z * sd[0]}, hnu{m[1] - z * sd[1], m[1] + z * sd[1]},
      heta{m[2] - z * sd[2], m[2] + z * sd[2]};
  rep.hessianIntervals = {{"mu", hmu},
                          {"nu", hnu},
                          {"eta", heta},
                          {"sigma", {std::exp(hnu.lo), std::exp(hnu.hi)}},
                          {"lambda", {logistic(heta.lo), logistic(heta.hi)}}};

  for (const Functional& f : {midpoint_threshold(st.design), Functional::width(0.1), Functional::slope()}) {
    FunctionalSummary fs;
    fs.label = f.label();
    try {
      const FunctionalSamples v = functional_samples(s, f, st.design);
      const auto q = weighted_quantiles(v.samples.values, v.samples.weights, probs);
      fs.mean = weighted_mean(v.samples);
      fs.median = q[1];
      fs.quantile = {q[0], q[2]};
      fs.dropped = v.dropped;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::DegenerateFunctional) throw;
      fs.mean = fs.median = std::numeric_limits<double>::quiet_NaN();
      fs.quantile = {fs.mean, fs.mean};
      fs.dropped = s.size();
    }
    rep.functionals.push_back(fs);
  }

  const int np = std::max(2, opt.curvePoints);
  for (int i = 0; i < np; ++i)
    rep.curveX.push_back(st.design.x_lo() + (st.design.x_hi() - st.design.x_lo()) * i / (np - 1));
  rep.curveBands = posterior_response_quantiles(s, rep.curveX, probs, st.design);
  for (double x : rep.curveX) rep.curveMean.push_back(predicted_response_prob(s, x, st.design));
  return rep;
}

inline Json to_json(const EstimateReport& r) {
  Json j;
  j["trials"] = r.trials;
  j["sampleSource"] = r.sampleSource;
  j["level"] = r.level;
  j["mode"] = Json{{"unconstrained", to_json(r.mode)}, {"natural", natural_json(r.mode)}};
  j["mean"] = Json{{"unconstrained", to_json(r.mean)}, {"natural", natural_json(r.mean)}};
  Json q, h;
  for (const auto& [k, v] : r.quantileIntervals) q[k] = to_json(v);
  for (const auto& [k, v] : r.hessianIntervals) h[k] = to_json(v);
  j["intervals"] = Json{{"quantile", q}, {"hessian", h}};
  Json fs = Json::array();
  for (const auto& f : r.functionals)
    fs.push_back(Json{{"functional", f.label},
                      {"mean", f.mean},
                      {"median", f.median},
                      {"interval", to_json(f.quantile)},
                      {"dropped", f.dropped}});
  j["functionals"] = fs;
  Json curve = Json::array();
  for (std::size_t i = 0; i < r.curveX.size(); ++i)
    curve.push_back(Json{{"x", r.curveX[i]}, {"mean", r.curveMean[i]}, {"band", r.curveBands[i]}});
  j["responseCurve"] = curve;
  j["entropy"] = r.entropy;
  j["stopped"] = r.stopped;
  return j;
}

inline std::string estimate_summary(const EstimateReport& r) {
  std::ostringstream os;
  os.precision(6);
  os << "trials=" << r.trials << " mu=" << r.mean.mu << " sigma=" << r.mean.sigma() << " lambda=" << r.mean.lambda()
     << " entropy=" << r.entropy;
  return os.str();
}

inline void session_record_estimate(SessionState& st, const EstimateReport& r, const std::string& now = utc_now()) {
  st.updatedAt = now;
  st.events.push_back({EventType::Estimated, now, 0.0, 0, {}, estimate_summary(r)});
}

}  // namespace apsy
