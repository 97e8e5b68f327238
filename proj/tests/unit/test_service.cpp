#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "cli/commands.hpp"
#include "infosched/artifacts.hpp"
#include "infosched/error.hpp"
#include "infosched/service/http.hpp"
#include "infosched/service/session.hpp"

// Last: <resolv.h> from httplib defines a _res macro that collides with Eigen.
#include <httplib.h>

using namespace infosched;
using namespace infosched::service;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

ModelConfig tiny_ou() {
  ModelConfig c = catalog_config("ou", Scale::desk);
  c.delta = 1e-3;
  c.gamma = 20;
  c.grid = {{-2.0, 9.0, 0.1}};
  c.phi = {0.5, 4.0, 0.25};
  return c;
}

// One precompute directory shared by every test in this file.
const fs::path& fixture_root() {
  static const fs::path root = [] {
    const auto dir = fs::temp_directory_path() / "infosched_service_fixture";
    fs::remove_all(dir);
    cli::PrecomputeOptions opts;
    opts.averaged = true;
    opts.vi = true;
    std::ostringstream log;
    cli::precompute(tiny_ou(), opts, dir / "ou", log);
    return dir;
  }();
  return root;
}

std::shared_ptr<const PolicyStore> fixture_store() {
  static const auto store = [] {
    auto s = std::make_shared<PolicyStore>();
    s->load_root(fixture_root());
    return s;
  }();
  return store;
}

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  return dir;
}

double x1(double v) { return v; }

}  // namespace

TEST(PolicyStoreTest, LoadsEveryArtifact) {
  const auto store = fixture_store();
  EXPECT_EQ(store->names(), std::vector<std::string>{"ou"});
  const auto b = store->find("ou");
  EXPECT_TRUE(b->has(Mode::dp));
  EXPECT_TRUE(b->has(Mode::averaged));
  EXPECT_TRUE(b->has(Mode::vi));
  EXPECT_DOUBLE_EQ(b->dp_theta, 2.0);
  EXPECT_EQ(b->kernels.size(), b->prior.size());
  EXPECT_THROW(store->find("vdp"), NotFoundError);
}

TEST(SessionManagerTest, CreateCarriesBudgetAndInitialState) {
  SessionManager mgr(fixture_store());
  const auto c = mgr.create("ou", Mode::dp);
  EXPECT_EQ(c.n, 3);
  EXPECT_DOUBLE_EQ(c.tau, 2.0);
  ASSERT_TRUE(c.next_time.has_value());
  const auto d = mgr.describe(c.id);
  EXPECT_EQ(d.at("k"), 0);
  EXPECT_EQ(d.at("status"), "active");
  EXPECT_EQ(d.at("history").size(), 1u);
  EXPECT_EQ(d.at("history")[0].at("x"), json::array({8.0}));
  EXPECT_THROW(mgr.create("nope", Mode::dp), NotFoundError);
}

TEST(SessionManagerTest, FirstSubmissionAtZeroIsEarlyAndNotBudgeted) {
  SessionManager mgr(fixture_store());
  const auto c = mgr.create("ou", Mode::dp, std::vector<double>{0.0});
  const double x[] = {8.0};
  const auto r = mgr.submit(c.id, 0.0, x);
  ASSERT_TRUE(r.next_time.has_value());
  EXPECT_FALSE(r.exhausted);
  EXPECT_EQ(mgr.describe(c.id).at("k"), 0);

  const auto b = fixture_store()->find("ou");
  const auto& setup = b->setup;
  const int j = next_index(*b->dp, 1, 0, setup.grid.nearest(x));
  EXPECT_DOUBLE_EQ(*r.next_time, setup.mesh.time(j));
  EXPECT_LT(*r.next_time, setup.mesh.horizon() / 3.0);
}

TEST(SessionManagerTest, RunsToExhaustion) {
  SessionManager mgr(fixture_store());
  const auto c = mgr.create("ou", Mode::dp);
  double t = *c.next_time;
  const double path[] = {5.0, 2.5, 1.0};
  SubmitResult r;
  for (int k = 0; k < 3; ++k) {
    const double x[] = {path[k]};
    r = mgr.submit(c.id, t, x);
    if (k < 2) {
      ASSERT_TRUE(r.next_time.has_value());
      EXPECT_GT(*r.next_time, t);
      t = *r.next_time;
    }
  }
  EXPECT_TRUE(r.exhausted);
  EXPECT_FALSE(r.next_time.has_value());
  const auto d = mgr.describe(c.id);
  EXPECT_EQ(d.at("status"), "exhausted");
  EXPECT_EQ(d.at("k"), 3);
  const double x[] = {0.0};
  EXPECT_THROW(mgr.submit(c.id, 1.99, x), StateError);
}

TEST(SessionManagerTest, RejectedSubmissionsLeaveStateUnchanged) {
  SessionManager mgr(fixture_store());
  const auto c = mgr.create("ou", Mode::dp);
  const double x[] = {4.0};
  mgr.submit(c.id, 0.5, x);
  const auto before = mgr.describe(c.id);
  EXPECT_THROW(mgr.submit(c.id, 0.5, x), StateError);
  EXPECT_THROW(mgr.submit(c.id, 0.3, x), StateError);
  EXPECT_THROW(mgr.submit(c.id, 0.505, x), StateError);  // same mesh step
  EXPECT_THROW(mgr.submit(c.id, 5.0, x), ConfigError);
  const double two[] = {1.0, 2.0};
  EXPECT_THROW(mgr.submit(c.id, 0.8, two), ConfigError);
  EXPECT_THROW(mgr.submit("missing", 0.8, x), NotFoundError);
  EXPECT_EQ(mgr.describe(c.id), before);
}

TEST(SessionManagerTest, OutOfBoxStateIsClampedAndFlagged) {
  SessionManager mgr(fixture_store());
  const auto c = mgr.create("ou", Mode::dp);
  const double far[] = {100.0};
  const auto r = mgr.submit(c.id, 0.4, far);
  EXPECT_TRUE(r.clamped);
  const auto h = mgr.describe(c.id).at("history");
  EXPECT_DOUBLE_EQ(h[1].at("grid_x")[0].get<double>(), 9.0);
  EXPECT_EQ(h[1].at("x")[0].get<double>(), 100.0);
}

TEST(SessionManagerTest, SubmittedStatesRoundLikeSimulation) {
  SessionManager mgr(fixture_store());
  const auto c = mgr.create("ou", Mode::dp);
  const double x[] = {x1(3.04)};
  mgr.submit(c.id, 0.4, x);
  const auto h = mgr.describe(c.id).at("history");
  EXPECT_NEAR(h[1].at("grid_x")[0].get<double>(), 3.0, 1e-12);
  EXPECT_NEAR(h[1].at("mesh_time").get<double>(), 0.4, 1e-12);
}

TEST(SessionManagerTest, DpPosteriorIsPointMass) {
  SessionManager mgr(fixture_store());
  const auto c = mgr.create("ou", Mode::dp);
  const auto p = mgr.posterior(c.id);
  double total = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    total += p.weights[k];
    if (p.weights[k] > 0) EXPECT_DOUBLE_EQ(p.values[k], 2.0);
  }
  EXPECT_DOUBLE_EQ(total, 1.0);
}

TEST(SessionManagerTest, ViSessionUpdatesPosterior) {
  SessionManager mgr(fixture_store());
  const auto c = mgr.create("ou", Mode::vi);
  ASSERT_TRUE(c.next_time.has_value());
  const auto b = fixture_store()->find("ou");
  const auto& setup = b->setup;
  const double xa[] = {5.0};
  const auto r = mgr.submit(c.id, *c.next_time, xa);
  ASSERT_TRUE(r.posterior.has_value());

  const int lag = setup.mesh.floor_index(*c.next_time);
  const auto expected = posterior_update(b->prior, setup.initial_state(), setup.grid.nearest(xa),
                                         lag, b->kernels, setup.mesh.dilation());
  for (std::size_t k = 0; k < expected.size(); ++k) {
    EXPECT_NEAR(r.posterior->weights[k], expected.weights[k], 1e-12);
  }
  ASSERT_TRUE(r.next_time.has_value());
  const double xb[] = {2.0};
  const auto r2 = mgr.submit(c.id, *r.next_time, xb);
  double total = 0.0;
  for (double w : r2.posterior->weights) total += w;
  EXPECT_NEAR(total, 1.0, 1e-12);
  EXPECT_EQ(prior_to_json(mgr.posterior(c.id)), prior_to_json(*r2.posterior));
  // The stationary rule: next = t + Δ̂(x), capped at the last mesh point.
  const int j = setup.mesh.floor_index(*r.next_time);
  const int wait = b->vi->wait[setup.grid.nearest(xb)];
  EXPECT_DOUBLE_EQ(*r2.next_time, setup.mesh.time(std::min(j + wait, setup.mesh.last())));
}

TEST(SessionManagerTest, PolicyViewMatchesExportedHeatmap) {
  SessionManager mgr(fixture_store());
  const auto c = mgr.create("ou", Mode::dp);
  const auto view = mgr.policy_view(c.id, 2);
  const auto b = fixture_store()->find("ou");
  const auto map = export_heatmap(*b->dp, 2, b->setup.grid);
  ASSERT_EQ(view.at("times").size(), static_cast<std::size_t>(b->setup.mesh.size()));
  ASSERT_EQ(view.at("states").size(), b->setup.grid.size());
  const auto& rows = view.at("t_hat");
  for (std::size_t j = 0; j + 1 < rows.size(); j += 7) {
    for (std::size_t k = 0; k < rows[j].size(); k += 5) {
      EXPECT_DOUBLE_EQ(rows[j][k].get<double>(), map.t_hat(j, k));
    }
  }
  EXPECT_TRUE(rows.back()[0].is_null());
  EXPECT_THROW(mgr.policy_view(c.id, 0), ConfigError);
  EXPECT_THROW(mgr.policy_view(c.id, 4), ConfigError);

  const auto vi = mgr.create("ou", Mode::vi);
  const auto vview = mgr.policy_view(vi.id, 1);
  EXPECT_EQ(vview.at("t_hat").size(), static_cast<std::size_t>(b->setup.mesh.size()));
}

TEST(SessionManagerTest, ReplayReproducesSessions) {
  const auto logs = fresh_dir("infosched_service_logs");
  std::string dp_id, vi_id;
  json dp_before, vi_before;
  {
    SessionManager mgr(fixture_store(), logs);
    dp_id = mgr.create("ou", Mode::dp).id;
    vi_id = mgr.create("ou", Mode::vi, std::vector<double>{6.0}).id;
    const double a[] = {4.2}, b[] = {3.1};
    mgr.submit(dp_id, 0.3, a);
    mgr.submit(vi_id, 0.2, a);
    mgr.submit(vi_id, 0.6, b);
    EXPECT_THROW(mgr.submit(dp_id, 0.1, a), StateError);  // not logged
    dp_before = mgr.describe(dp_id);
    vi_before = mgr.describe(vi_id);
  }
  SessionManager again(fixture_store(), logs);
  EXPECT_EQ(again.describe(dp_id), dp_before);
  EXPECT_EQ(again.describe(vi_id), vi_before);
  const double c[] = {1.0};
  const auto next = again.submit(dp_id, 0.9, c);
  EXPECT_EQ(again.describe(dp_id).at("k"), 2);
  // A torn trailing line from a crash is dropped on the next start.
  {
    std::ofstream log(logs / (dp_id + ".jsonl"), std::ios::app);
    log << R"({"op":"observe","t":1.)";
  }
  SessionManager third(fixture_store(), logs);
  EXPECT_EQ(third.describe(dp_id).at("k"), 2);
  EXPECT_EQ(third.describe(dp_id).at("next_time"), to_json(next).at("next_time"));
}

TEST(SessionManagerTest, ConcurrentSessionsAreIndependent) {
  SessionManager mgr(fixture_store());
  std::vector<std::string> ids;
  for (int s = 0; s < 4; ++s) ids.push_back(mgr.create("ou", Mode::dp).id);
  std::vector<json> results(4);
  std::vector<std::thread> workers;
  for (int s = 0; s < 4; ++s) {
    workers.emplace_back([&, s] {
      for (int k = 1; k <= 3; ++k) {
        const double x[] = {1.0 + s};
        mgr.submit(ids[s], 0.5 * k, x);
      }
      results[s] = mgr.describe(ids[s]);
    });
  }
  for (auto& w : workers) w.join();
  SessionManager serial(fixture_store());
  for (int s = 0; s < 4; ++s) {
    const auto id = serial.create("ou", Mode::dp).id;
    for (int k = 1; k <= 3; ++k) {
      const double x[] = {1.0 + s};
      serial.submit(id, 0.5 * k, x);
    }
    auto a = results[s];
    auto b = serial.describe(id);
    a.erase("id");
    b.erase("id");
    EXPECT_EQ(a, b);
  }
}

TEST(HttpStatus, MapsErrorKinds) {
  EXPECT_EQ(http_status(NotFoundError("x")), 404);
  EXPECT_EQ(http_status(StateError("x")), 409);
  EXPECT_EQ(http_status(ConfigError("x")), 400);
  EXPECT_EQ(http_status(NumericError("x")), 422);
  EXPECT_EQ(http_status(std::runtime_error("x")), 500);
}

TEST(HttpServerTest, LoopbackSessionFlow) {
  SessionManager mgr(fixture_store());
  HttpServer server(mgr);
  const int port = server.bind("127.0.0.1", 0);
  std::thread thread([&] { server.listen(); });
  server.wait_until_ready();
  httplib::Client client("127.0.0.1", port);

  auto res = client.Get("/health");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);

  res = client.Get("/policies");
  ASSERT_TRUE(res);
  EXPECT_EQ(json::parse(res->body)[0].at("name"), "ou");

  res = client.Post("/sessions", R"({"policy":"ou","mode":"dp"})", "application/json");
  ASSERT_TRUE(res);
  ASSERT_EQ(res->status, 201) << res->body;
  const auto created = json::parse(res->body);
  const std::string id = created.at("id");
  EXPECT_EQ(created.at("n"), 3);
  EXPECT_EQ(created.at("tau"), 2.0);

  double t = created.at("next_time");
  for (int k = 0; k < 3; ++k) {
    const json body = {{"t", t}, {"x", 8.0 - 3 * k}};
    res = client.Post("/sessions/" + id + "/observations", body.dump(), "application/json");
    ASSERT_TRUE(res);
    ASSERT_EQ(res->status, 200) << res->body;
    const auto r = json::parse(res->body);
    if (k < 2) {
      EXPECT_EQ(r.at("status"), "active");
      t = r.at("next_time");
    } else {
      EXPECT_EQ(r.at("status"), "exhausted");
      EXPECT_TRUE(r.at("next_time").is_null());
    }
  }
  res = client.Post("/sessions/" + id + "/observations", R"({"t":1.99,"x":[0]})",
                    "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 409);

  res = client.Get("/sessions/" + id);
  ASSERT_TRUE(res);
  EXPECT_EQ(json::parse(res->body), mgr.describe(id));

  res = client.Get("/sessions/" + id + "/policy/2");
  ASSERT_TRUE(res);
  ASSERT_EQ(res->status, 200);
  const auto view = json::parse(res->body);
  EXPECT_EQ(view.at("t_hat").size(), view.at("times").size());
  EXPECT_EQ(view.at("t_hat")[0].size(), view.at("states").size());

  res = client.Get("/sessions/" + id + "/policy/9");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);

  res = client.Get("/sessions/" + id + "/posterior");
  ASSERT_TRUE(res);
  EXPECT_EQ(json::parse(res->body), prior_to_json(mgr.posterior(id)));

  res = client.Get("/sessions/unknown");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 404);
  EXPECT_TRUE(json::parse(res->body).contains("error"));

  res = client.Post("/sessions", "{not json", "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);

  res = client.Post("/sessions", R"({"policy":"missing"})", "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 404);

  res = client.Post("/sessions", R"({"policy":"ou","mode":"vi","x0":[6.0]})", "application/json");
  ASSERT_TRUE(res);
  ASSERT_EQ(res->status, 201);
  const auto vi = json::parse(res->body);
  const json obs = {{"t", vi.at("next_time")}, {"x", {5.5}}};
  res = client.Post("/sessions/" + vi.at("id").get<std::string>() + "/observations", obs.dump(),
                    "application/json");
  ASSERT_TRUE(res);
  ASSERT_EQ(res->status, 200);
  const auto r = json::parse(res->body);
  ASSERT_TRUE(r.contains("posterior"));
  EXPECT_EQ(r.at("posterior").at("weights").size(), fixture_store()->find("ou")->prior.size());

  server.stop();
  thread.join();
}
