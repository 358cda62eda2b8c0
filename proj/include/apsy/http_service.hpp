#pragma once

// JSON session service and its HTTP binding. Handlers are plain functions
// from JSON to JSON so they can be exercised without a socket.

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <shared_mutex>
#include <string>

// Eigen must come first: httplib pulls in <resolv.h>, whose `_res` macro
// collides with Eigen parameter names.
#include "apsy/session.hpp"
#include "apsy/simlab.hpp"

#include "httplib.h"

namespace apsy {

inline int http_status(ErrorCode c) {
  switch (c) {
    case ErrorCode::NotFound: return 404;
    case ErrorCode::AlreadyPending:
    case ErrorCode::NoPendingStimulus:
    case ErrorCode::SessionStopped: return 409;
    case ErrorCode::DomainError:
    case ErrorCode::OutOfRange:
    case ErrorCode::InvalidArgument:
    case ErrorCode::SchemaVersionMismatch:
    case ErrorCode::CorruptFile: return 400;
    default: return 500;
  }
}

/// {kind: gaussian|drifting, mu, nu, eta, drift?}, the same with
/// {mu, sigma, lambda}, or {kind: weibull, alpha, beta, lambda}.
inline SimulatedObserver observer_from_json(const Json& j, const Design& d) {
  const std::string kind = j.value("kind", std::string("gaussian"));
  if (kind == "weibull")
    return SimulatedObserver::weibull({j.at("alpha").get<double>(), j.at("beta").get<double>(), j.at("lambda").get<double>()}, d);
  const Params p = j.contains("sigma") ? params_from_natural(j.at("mu").get<double>(), j.at("sigma").get<double>(),
                                                              j.at("lambda").get<double>())
                                       : params_from_json(j);
  if (kind == "gaussian") return SimulatedObserver::gaussian(p, d);
  if (kind == "drifting") return SimulatedObserver::drifting(p, j.value("drift", kDefaultDrift), d);
  fail(ErrorCode::InvalidArgument, "unknown observer kind '" + kind + "'");
}

inline std::vector<double> linspace(double lo, double hi, int n) {
  std::vector<double> v(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (n - 1);
  return v;
}

/// Each draw as parameters plus its response curve over `xs`.
inline Json function_draws(const SampleSet& s, std::size_t count, const std::vector<double>& xs, const Design& d) {
  Json out = Json::array();
  const Functional mid = midpoint_threshold(d);
  for (std::size_t i = 0; i < std::min(count, s.size()); ++i) {
    const Params& q = s.values[i];
    Json curve = Json::array();
    for (double x : xs) curve.push_back(psi(x, q, d));
    Json thr = nullptr;
    try {
      thr = evaluate_functional(mid, q, d);
    } catch (const Error&) {
    }
    out.push_back(Json{{"params", to_json(q)}, {"natural", natural_json(q)}, {"threshold", thr}, {"curve", curve}});
  }
  return out;
}

inline Json response_quantile_grid(const SampleSet& s, const std::vector<double>& xs, const std::vector<double>& probs,
                                   const Design& d) {
  return Json{{"levels", probs}, {"rows", posterior_response_quantiles(s, xs, probs, d)}};
}

/// Prior hyperparameters -> function draws and response-probability
/// quantiles. Body: {prior:{mean,sd}, design?, draws?, seed?, points?,
/// samples?, quantiles?}.
inline Json prior_preview(const Json& body) {
  const GaussianPrior prior = prior_from_json(body.at("prior"));
  const Design d = body.contains("design") ? design_from_json(body.at("design")) : Design::two_afc(-4.0, 11.0);
  const auto draws = body.value("draws", std::size_t{30});
  const auto seed = body.value("seed", std::uint64_t{0});
  const int points = body.value("points", 41);
  const auto samples = body.value("samples", std::size_t{2000});
  const auto probs = body.value("quantiles", std::vector<double>{0.05, 0.25, 0.5, 0.75, 0.95});
  require(points >= 2 && draws >= 1 && samples >= draws, ErrorCode::InvalidArgument, "preview sizes are invalid");

  const SampleSet s = sample_laplace(laplace_from_prior(prior), samples, seed);
  const auto xs = linspace(d.x_lo(), d.x_hi(), points);
  Json j;
  j["x"] = xs;
  j["draws"] = function_draws(s, draws, xs, d);
  j["responseQuantiles"] = response_quantile_grid(s, xs, probs, d);
  std::vector<double> thr;
  for (const auto& dr : j["draws"])
    if (!dr["threshold"].is_null()) thr.push_back(dr["threshold"].get<double>());
  double m = 0.0, v = 0.0;
  for (double t : thr) m += t;
  m /= static_cast<double>(std::max<std::size_t>(thr.size(), 1));
  for (double t : thr) v += (t - m) * (t - m);
  j["thresholdSpread"] = thr.size() > 1 ? std::sqrt(v / static_cast<double>(thr.size() - 1)) : 0.0;
  return j;
}

/// Normalized posterior density on a 2-D slice through the mode.
inline Json posterior_slice(const SessionState& st, int a, int b, int points = 31, double halfWidth = 4.0) {
  static const char* names[] = {"mu", "nu", "eta"};
  const Vec3 m = to_vec(st.posterior.mode);
  const Vec3 sd = st.posterior.sd();
  const auto xa = linspace(m[a] - halfWidth * sd[a], m[a] + halfWidth * sd[a], points);
  const auto xb = linspace(m[b] - halfWidth * sd[b], m[b] + halfWidth * sd[b], points);
  std::vector<std::vector<double>> lp(xa.size(), std::vector<double>(xb.size()));
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < xa.size(); ++i)
    for (std::size_t k = 0; k < xb.size(); ++k) {
      Vec3 v = m;
      v[a] = xa[i];
      v[b] = xb[k];
      lp[i][k] = log_posterior_unnorm(st.trials, st.prior, to_params(v));
      mx = std::max(mx, lp[i][k]);
    }
  for (auto& row : lp)
    for (double& v : row) v = std::exp(v - mx);
  return Json{{"axes", {names[a], names[b]}}, {"x", xa}, {"y", xb}, {"density", lp}};
}

inline Json session_diagnostics(const SessionState& st, std::uint64_t seed, std::size_t replicates = 5) {
  Json j;
  j["costCurve"] = st.lastCostCurve ? to_json(*st.lastCostCurve)["points"] : Json(nullptr);
  j["slices"] = Json::array({posterior_slice(st, 0, 1), posterior_slice(st, 0, 2), posterior_slice(st, 1, 2)});
  const auto xs = linspace(st.design.x_lo(), st.design.x_hi(), 41);
  const SampleSet prior = sample_laplace(laplace_from_prior(st.prior), 2000, derive_seed(seed, 1));
  const SampleSet post = sample_laplace(st.posterior, 2000, derive_seed(seed, 2));
  j["x"] = xs;
  j["priorDraws"] = function_draws(prior, 30, xs, st.design);
  j["posteriorDraws"] = function_draws(post, 30, xs, st.design);
  j["priorResponse"] = response_quantile_grid(prior, xs, {0.05, 0.25, 0.5, 0.75, 0.95}, st.design);
  Json real = Json::array();
  std::vector<double> seq;
  for (const auto& t : st.trials.trials()) {
    real.push_back(Json::array({t.index, t.x, t.r}));
    seq.push_back(t.x);
  }
  Json reps = Json::array();
  if (!seq.empty()) {
    for (const auto& ds : posterior_predictive_simulate(post, seq, replicates, st.design, derive_seed(seed, 3))) {
      Json trip = Json::array();
      for (const auto& t : ds.trials()) trip.push_back(Json::array({t.index, t.x, t.r}));
      reps.push_back(trip);
    }
  }
  j["ppc"] = Json{{"real", real}, {"replicates", reps}};
  return j;
}

inline Json session_summary(const SessionState& st) {
  Json j = session_to_json(st);
  j["trialCount"] = st.trials.size();
  j["digest"] = session_digest(st);
  return j;
}

/// In-memory session registry. Mutations of one session are serialized by a
/// per-session mutex; reads copy a snapshot under that mutex and work on it
/// unlocked. With a store directory every mutation is also saved to disk.
class SessionService {
 public:
  explicit SessionService(std::string storeDir = {}) : storeDir_(std::move(storeDir)) {
    if (!storeDir_.empty()) std::filesystem::create_directories(storeDir_);
  }

  /// Body: {design, prior, policy?, stoppingRule?, seed?}.
  Json create(const Json& body) {
    const Design d = design_from_json(body.at("design"));
    const GaussianPrior prior = prior_from_json(body.at("prior"));
    const PlacementPolicy policy = body.contains("policy") ? policy_from_json(body.at("policy"), d) : PlacementPolicy::psi(d);
    const StoppingRule rule =
        body.contains("stoppingRule") ? stopping_rule_from_json(body.at("stoppingRule")) : StoppingRule::fixed(100);
    std::uint64_t seed;
    if (body.contains("seed")) {
      seed = body.at("seed").get<std::uint64_t>();
    } else {
      std::random_device rd;
      seed = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
    }
    std::unique_lock lock(registryMutex_);
    std::string id = session_id_for_seed(seed);
    for (int k = 2; sessions_.count(id); ++k) id = session_id_for_seed(seed) + "-" + std::to_string(k);
    auto e = std::make_shared<Entry>();
    e->st = session_create(d, prior, policy, rule, seed, utc_now(), id);
    sessions_.emplace(id, e);
    persist(e->st);
    return session_summary(e->st);
  }

  /// Registers an existing (e.g. loaded) session under its own id.
  void adopt(SessionState st) {
    std::unique_lock lock(registryMutex_);
    require(!sessions_.count(st.id), ErrorCode::InvalidArgument, "session id already registered");
    auto e = std::make_shared<Entry>();
    e->st = std::move(st);
    sessions_.emplace(e->st.id, e);
  }

  Json get(const std::string& id) const { return session_summary(snapshot(id)); }

  Json next(const std::string& id) {
    auto e = find(id);
    std::lock_guard lock(e->m);
    const Proposal p = session_next(e->st);
    persist(e->st);
    return Json{{"x", p.x},
                {"costCurve", to_json(p.curve)["points"]},
                {"chosen", p.curve.chosen},
                {"allZeroInformation", p.allZeroInformation},
                {"trialCount", e->st.trials.size()}};
  }

  /// Body: {r: 0|1}.
  Json respond(const std::string& id, const Json& body) {
    const int r = body.at("r").get<int>();
    auto e = find(id);
    std::lock_guard lock(e->m);
    session_respond(e->st, r);
    persist(e->st);
    return Json{{"trialCount", e->st.trials.size()},
                {"posterior", to_json(e->st.posterior)},
                {"stopped", e->st.stopped},
                {"stopReason", e->st.stopReason}};
  }

  /// Autopilot: proposes and answers `trials` stimuli with a simulated
  /// observer. Body: {observer, trials?, seed?}. Stops early if the session's
  /// stopping rule fires.
  Json simulate(const std::string& id, const Json& body) {
    auto e = find(id);
    std::lock_guard lock(e->m);
    const SimulatedObserver obs = observer_from_json(body.at("observer"), e->st.design);
    const auto count = body.value("trials", std::size_t{1});
    std::mt19937_64 rng(body.value("seed", std::uint64_t{0}));
    Json steps = Json::array();
    for (std::size_t k = 0; k < count && !e->st.stopped; ++k) {
      if (!e->st.pendingStimulus) session_next(e->st);
      const double x = *e->st.pendingStimulus;
      const int r = observer_respond(obs, x, e->st.trials.size() + 1, rng);
      session_respond(e->st, r);
      steps.push_back(Json::array({e->st.trials.size(), x, r}));
    }
    persist(e->st);
    return Json{{"simulated", true}, {"triplets", steps}, {"posterior", to_json(e->st.posterior)}, {"stopped", e->st.stopped}};
  }

  Json estimate(const std::string& id, const EstimateOptions& opt = {}) const {
    return to_json(session_estimate(snapshot(id), opt));
  }

  Json diagnostics(const std::string& id, std::uint64_t seed = 0) const {
    return session_diagnostics(snapshot(id), seed);
  }

  std::size_t size() const {
    std::shared_lock lock(registryMutex_);
    return sessions_.size();
  }

 private:
  struct Entry {
    std::mutex m;
    SessionState st;
  };

  std::shared_ptr<Entry> find(const std::string& id) const {
    std::shared_lock lock(registryMutex_);
    const auto it = sessions_.find(id);
    if (it == sessions_.end()) fail(ErrorCode::NotFound, "unknown session '" + id + "'");
    return it->second;
  }

  SessionState snapshot(const std::string& id) const {
    auto e = find(id);
    std::lock_guard lock(e->m);
    return e->st;
  }

  void persist(const SessionState& st) const {
    if (!storeDir_.empty()) session_save(st, (std::filesystem::path(storeDir_) / (st.id + ".json")).string());
  }

  std::string storeDir_;
  mutable std::shared_mutex registryMutex_;
  std::map<std::string, std::shared_ptr<Entry>> sessions_;
};

namespace detail {

template <class F>
void handle(httplib::Response& res, F&& f) {
  try {
    res.set_content(f().dump(), "application/json");
    res.status = 200;
  } catch (const Error& e) {
    res.status = http_status(e.code());
    res.set_content(Json{{"error", to_string(e.code())}, {"message", e.what()}}.dump(), "application/json");
  } catch (const Json::exception& e) {
    res.status = 400;
    res.set_content(Json{{"error", "BadRequest"}, {"message", e.what()}}.dump(), "application/json");
  } catch (const std::exception& e) {
    res.status = 500;
    res.set_content(Json{{"error", "Internal"}, {"message", e.what()}}.dump(), "application/json");
  }
}

inline Json body_json(const httplib::Request& req) { return req.body.empty() ? Json::object() : Json::parse(req.body); }

inline std::uint64_t query_u64(const httplib::Request& req, const char* key, std::uint64_t fallback) {
  return req.has_param(key) ? std::stoull(req.get_param_value(key)) : fallback;
}

}  // namespace detail

/// Registers every endpoint on `server`.
inline void install_routes(httplib::Server& server, SessionService& svc) {
  using httplib::Request;
  using httplib::Response;
  server.Post("/sessions", [&svc](const Request& req, Response& res) {
    detail::handle(res, [&] { return svc.create(detail::body_json(req)); });
  });
  server.Get(R"(/sessions/([^/]+))", [&svc](const Request& req, Response& res) {
    detail::handle(res, [&] { return svc.get(req.matches[1]); });
  });
  server.Post(R"(/sessions/([^/]+)/next)", [&svc](const Request& req, Response& res) {
    detail::handle(res, [&] { return svc.next(req.matches[1]); });
  });
  server.Post(R"(/sessions/([^/]+)/respond)", [&svc](const Request& req, Response& res) {
    detail::handle(res, [&] { return svc.respond(req.matches[1], detail::body_json(req)); });
  });
  server.Post(R"(/sessions/([^/]+)/simulate)", [&svc](const Request& req, Response& res) {
    detail::handle(res, [&] { return svc.simulate(req.matches[1], detail::body_json(req)); });
  });
  server.Get(R"(/sessions/([^/]+)/estimate)", [&svc](const Request& req, Response& res) {
    detail::handle(res, [&] {
      EstimateOptions opt;
      opt.seed = detail::query_u64(req, "seed", 0);
      opt.samples = detail::query_u64(req, "samples", opt.samples);
      opt.resampled = std::min<std::size_t>(opt.resampled, opt.samples / 2);
      return svc.estimate(req.matches[1], opt);
    });
  });
  server.Get(R"(/sessions/([^/]+)/diagnostics)", [&svc](const Request& req, Response& res) {
    detail::handle(res, [&] { return svc.diagnostics(req.matches[1], detail::query_u64(req, "seed", 0)); });
  });
  server.Post("/priors/preview", [](const Request& req, Response& res) {
    detail::handle(res, [&] { return prior_preview(detail::body_json(req)); });
  });
}

/// Blocks serving the API until the server is stopped.
inline bool serve_http(SessionService& svc, const std::string& host, int port) {
  httplib::Server server;
  install_routes(server, svc);
  return server.listen(host, port);
}

}  // namespace apsy
