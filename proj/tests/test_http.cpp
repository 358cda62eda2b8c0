#include <atomic>
#include <filesystem>
#include <thread>

#include <unistd.h>

#include "catch_amalgamated.hpp"

#include "apsy/http_service.hpp"

using namespace apsy;
using Catch::Approx;

namespace {

Json create_body(std::uint64_t seed) {
  Json j = Json::parse(R"({
    "design": {"task": "forced-choice", "gamma": 0.5, "xLo": -4, "xHi": 11},
    "prior": {"mean": [3.0, 0.0, -3.8918], "sd": [0.7071, 0.7071, 0.3]},
    "policy": {"kind": "psi", "sampleCount": 500, "grid": {"points": 21, "refineRounds": 1}},
    "stoppingRule": {"kind": "fixed-trials", "count": 50}
  })");
  j["seed"] = seed;
  return j;
}

// A real server on a random local port for the duration of one test.
struct LiveServer {
  SessionService svc;
  httplib::Server server;
  std::thread thread;
  int port = 0;

  explicit LiveServer(std::string store = {}) : svc(std::move(store)) {
    install_routes(server, svc);
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~LiveServer() {
    server.stop();
    thread.join();
  }
  httplib::Client client() const { return httplib::Client("127.0.0.1", port); }
};

Json post(httplib::Client& c, const std::string& path, const Json& body, int expect) {
  auto res = c.Post(path, body.dump(), "application/json");
  REQUIRE(res);
  CHECK(res->status == expect);
  return Json::parse(res->body);
}

Json get(httplib::Client& c, const std::string& path, int expect) {
  auto res = c.Get(path);
  REQUIRE(res);
  CHECK(res->status == expect);
  return Json::parse(res->body);
}

}  // namespace

TEST_CASE("error codes map to HTTP statuses") {
  CHECK(http_status(ErrorCode::NotFound) == 404);
  CHECK(http_status(ErrorCode::AlreadyPending) == 409);
  CHECK(http_status(ErrorCode::NoPendingStimulus) == 409);
  CHECK(http_status(ErrorCode::SessionStopped) == 409);
  CHECK(http_status(ErrorCode::InvalidArgument) == 400);
  CHECK(http_status(ErrorCode::NonConvergence) == 500);
}

TEST_CASE("service handlers") {
  SessionService svc;
  const Json created = svc.create(create_body(1));
  const std::string id = created.at("id");
  CHECK(created.at("trialCount") == 0);
  CHECK(svc.get(id).at("digest") == created.at("digest"));
  CHECK_THROWS_AS(svc.respond(id, Json{{"r", 1}}), Error);
  const Json n = svc.next(id);
  CHECK(n.at("x").get<double>() >= -4.0);
  CHECK(n.at("costCurve").size() > 21);
  CHECK(svc.respond(id, Json{{"r", 0}}).at("trialCount") == 1);
  const Json sim = svc.simulate(id, Json{{"observer", {{"kind", "gaussian"}, {"mu", 3.5}, {"sigma", 1.6487}, {"lambda", 0.02}}},
                                         {"trials", 10}, {"seed", 3}});
  CHECK(sim.at("triplets").size() == 10);
  CHECK(svc.get(id).at("trialCount") == 11);
  const Json est = svc.estimate(id);
  CHECK(est.at("trials") == 11);
  CHECK(est.at("intervals").contains("quantile"));
  CHECK(est.at("intervals").contains("hessian"));
  const Json diag = svc.diagnostics(id, 2);
  CHECK(diag.at("slices").size() == 3);
  CHECK(diag.at("ppc").at("real").size() == 11);
  CHECK(diag.at("priorDraws").size() == 30);
  CHECK_THROWS_AS(svc.estimate("s-missing"), Error);
  CHECK(svc.size() == 1);
}

TEST_CASE("prior preview: tight prior draws spread less than loose ones") {
  const auto preview = [](double muSd, double nuSd) {
    return prior_preview(Json{{"prior", {{"mean", {3.0, 0.0, logit(0.02)}}, {"sd", {muSd, nuSd, 0.3}}}}, {"seed", 4}});
  };
  const Json tight = preview(0.3, 0.2), loose = preview(1.5, 0.2);
  CHECK(tight.at("draws").size() == 30);
  CHECK(loose.at("draws").size() == 30);
  CHECK(tight.at("x").size() == 41);
  CHECK(tight.at("draws")[0].at("curve").size() == 41);
  CHECK(tight.at("thresholdSpread").get<double>() < loose.at("thresholdSpread").get<double>());
  CHECK(preview(0.3, 0.2).dump() == tight.dump());
  const Json rows = tight.at("responseQuantiles").at("rows");
  CHECK(rows.size() == 41);
}

TEST_CASE("live server endpoints") {
  LiveServer live;
  auto c = live.client();
  const Json created = post(c, "/sessions", create_body(5), 200);
  const std::string id = created.at("id");
  const std::string base = "/sessions/" + id;

  CHECK(post(c, base + "/respond", Json{{"r", 1}}, 409).at("error") == "NoPendingStimulus");
  const Json n = post(c, base + "/next", Json::object(), 200);
  CHECK(post(c, base + "/next", Json::object(), 409).at("error") == "AlreadyPending");
  const Json r = post(c, base + "/respond", Json{{"r", 1}}, 200);
  CHECK(r.at("trialCount") == 1);
  CHECK(get(c, base, 200).at("trials").size() == 1);
  CHECK(get(c, base, 200).at("trials")[0][0].get<double>() == n.at("x").get<double>());

  CHECK(get(c, base + "/estimate?seed=3&samples=2000", 200).at("responseCurve").size() == 41);
  CHECK(get(c, base + "/diagnostics?seed=1", 200).contains("ppc"));
  CHECK(get(c, "/sessions/s-nope/estimate", 404).at("error") == "NotFound");
  CHECK(get(c, "/sessions/s-nope", 404).at("error") == "NotFound");

  auto bad = c.Post("/sessions", "{not json", "application/json");
  REQUIRE(bad);
  CHECK(bad->status == 400);
  CHECK(post(c, "/sessions", Json{{"design", {{"task", "yes-no"}, {"xLo", 1}, {"xHi", 0}}}, {"prior", create_body(1)["prior"]}},
             400)
            .contains("message"));

  const Json pv = post(c, "/priors/preview", Json{{"prior", create_body(1)["prior"]}, {"draws", 30}}, 200);
  CHECK(pv.at("draws").size() == 30);
}

TEST_CASE("concurrent responses on one session are serialized") {
  LiveServer live;
  auto c = live.client();
  const std::string id = post(c, "/sessions", create_body(6), 200).at("id");
  post(c, "/sessions/" + id + "/next", Json::object(), 200);
  std::atomic<int> ok{0}, conflict{0};
  std::vector<std::thread> threads;
  for (int i = 0; i < 8; ++i)
    threads.emplace_back([&] {
      httplib::Client cl("127.0.0.1", live.port);
      auto res = cl.Post("/sessions/" + id + "/respond", R"({"r":1})", "application/json");
      if (res && res->status == 200) ++ok;
      if (res && res->status == 409) ++conflict;
    });
  for (auto& t : threads) t.join();
  CHECK(ok == 1);
  CHECK(conflict == 7);
  CHECK(get(c, "/sessions/" + id, 200).at("trialCount") == 1);
}

TEST_CASE("sessions persist to the store directory") {
  const auto dir = std::filesystem::temp_directory_path() / ("apsy_store_" + std::to_string(::getpid()));
  std::string id, digest;
  {
    SessionService svc(dir.string());
    id = svc.create(create_body(7)).at("id");
    svc.next(id);
    svc.respond(id, Json{{"r", 0}});
    digest = svc.get(id).at("digest");
  }
  const SessionState loaded = session_load((dir / (id + ".json")).string());
  CHECK(session_digest(loaded) == digest);
  SessionService again;
  again.adopt(loaded);
  CHECK(again.get(id).at("digest") == digest);
  std::filesystem::remove_all(dir);
}
