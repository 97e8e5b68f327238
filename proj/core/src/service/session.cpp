#include "infosched/service/session.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <random>

#include <fmt/format.h>

#include "infosched/artifacts.hpp"
#include "infosched/error.hpp"

namespace infosched::service {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(Mode mode) {
  switch (mode) {
    case Mode::dp:
      return "dp";
    case Mode::averaged:
      return "averaged";
    case Mode::vi:
      return "vi";
  }
  return "dp";
}

Mode parse_mode(std::string_view text) {
  if (text == "dp" || text == "policy") return Mode::dp;
  if (text == "averaged") return Mode::averaged;
  if (text == "vi") return Mode::vi;
  throw ConfigError(fmt::format("unknown session mode '{}' (expected dp, averaged or vi)", text));
}

bool PolicyBundle::has(Mode mode) const {
  switch (mode) {
    case Mode::dp:
      return dp.has_value();
    case Mode::averaged:
      return averaged.has_value();
    case Mode::vi:
      return vi.has_value();
  }
  return false;
}

namespace {

std::optional<PolicyFile> read_if_present(const fs::path& dir, std::string_view type,
                                          const Setup& setup) {
  const auto path = dir / layout::policy_file(type);
  if (!fs::exists(path)) return std::nullopt;
  auto file = read_policy(path);
  if (file.header.type != type) {
    throw ConfigError(fmt::format("{} holds a {} policy", path.string(), file.header.type));
  }
  check_compatible(file.header, setup);
  return file;
}

double reference_theta(const PolicyHeader& header, double fallback) {
  constexpr std::string_view prefix = "theta=";
  if (header.reference.starts_with(prefix)) {
    try {
      return std::stod(header.reference.substr(prefix.size()));
    } catch (const std::exception&) {
      throw ConfigError(fmt::format("malformed policy reference '{}'", header.reference));
    }
  }
  return fallback;
}

}  // namespace

std::shared_ptr<const PolicyBundle> load_bundle(std::string name, const fs::path& dir) {
  auto bundle = std::make_shared<PolicyBundle>(PolicyBundle{
      std::move(name), dir,
      Setup::from_config(ModelConfig::from_json(read_json_file(dir / layout::kConfig)))});
  const Setup& setup = bundle->setup;

  if (auto file = read_if_present(dir, "dp", setup)) {
    bundle->dp_theta = reference_theta(file->header, setup.config.theta_true);
    bundle->dp = std::move(file->table);
  }
  bundle->prior = fs::exists(dir / layout::kPrior)
                      ? prior_from_json(read_json_file(dir / layout::kPrior))
                      : Prior::uniform(setup.candidates);
  if (auto file = read_if_present(dir, "averaged", setup)) {
    bundle->averaged = std::move(file->table);
  }
  if (auto file = read_if_present(dir, "vi", setup)) {
    const std::string expected = "prior=" + prior_hash(bundle->prior);
    if (file->header.reference != expected) {
      throw ConfigError(fmt::format("{}: vi policy was computed for a different prior",
                                    dir.string()));
    }
    if (static_cast<std::size_t>(file->vi->value.size()) != setup.grid.size()) {
      throw ConfigError(fmt::format("{}: vi policy does not match the grid", dir.string()));
    }
    bundle->vi = std::move(file->vi);
    for (double theta : bundle->prior.values) {
      bundle->kernels.push_back(build_kernel(setup.model, setup.grid, theta, setup.config.delta));
    }
  }
  if (!bundle->dp && !bundle->averaged && !bundle->vi) {
    throw ConfigError(fmt::format("{} holds no policy files", dir.string()));
  }
  return bundle;
}

void PolicyStore::add(std::shared_ptr<const PolicyBundle> bundle) {
  const std::string name = bundle->name;
  bundles_[name] = std::move(bundle);
}

void PolicyStore::load_root(const fs::path& root) {
  if (!fs::is_directory(root)) {
    throw NotFoundError(fmt::format("policy directory {} not found", root.string()));
  }
  if (fs::exists(root / layout::kConfig)) {
    add(load_bundle(fs::absolute(root).filename().string(), root));
    return;
  }
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory() && fs::exists(entry.path() / layout::kConfig)) {
      dirs.push_back(entry.path());
    }
  }
  std::sort(dirs.begin(), dirs.end());
  for (const auto& dir : dirs) add(load_bundle(dir.filename().string(), dir));
}

std::shared_ptr<const PolicyBundle> PolicyStore::find(std::string_view name) const {
  const auto it = bundles_.find(name);
  if (it == bundles_.end()) throw NotFoundError(fmt::format("unknown policy '{}'", name));
  return it->second;
}

std::vector<std::string> PolicyStore::names() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : bundles_) out.push_back(name);
  return out;
}

json to_json(const SubmitResult& result) {
  json out = {{"status", result.exhausted ? "exhausted" : "active"},
              {"next_time", result.next_time ? json(*result.next_time) : json(nullptr)},
              {"clamped", result.clamped},
              {"horizon", result.horizon}};
  if (result.posterior) out["posterior"] = prior_to_json(*result.posterior);
  return out;
}

namespace {

struct SessionState {
  std::vector<HistoryEntry> history;  // entry 0 is the initial state
  Prior prior;

  int k() const { return static_cast<int>(history.size()) - 1; }
};

HistoryEntry make_entry(const Setup& setup, double t, std::span<const double> x) {
  if (!std::isfinite(t) || t < 0.0) {
    throw ConfigError(fmt::format("observation time {} must be finite and >= 0", t));
  }
  if (t > setup.mesh.horizon() * (1.0 + 1e-12)) {
    throw ConfigError(
        fmt::format("observation time {} lies beyond the horizon {}", t, setup.mesh.horizon()));
  }
  if (x.size() != setup.grid.dimension()) {
    throw ConfigError(fmt::format("state has {} coordinates, model {} has dimension {}",
                                  x.size(), setup.config.name, setup.grid.dimension()));
  }
  for (double v : x) {
    if (!std::isfinite(v)) throw ConfigError("state coordinates must be finite");
  }
  HistoryEntry e;
  e.t = t;
  e.x.assign(x.begin(), x.end());
  e.mesh_index = setup.mesh.floor_index(t);
  e.state = setup.grid.nearest(x, &e.clamped);
  return e;
}

const FitgTable& table_for(const PolicyBundle& b, Mode mode) {
  return mode == Mode::averaged ? *b.averaged : *b.dp;
}

SubmitResult outlook(const PolicyBundle& b, Mode mode, const SessionState& s) {
  const auto& mesh = b.setup.mesh;
  const HistoryEntry& last = s.history.back();
  SubmitResult r;
  r.clamped = last.clamped;
  r.exhausted = s.k() >= b.setup.config.n;
  if (!r.exhausted) {
    if (last.mesh_index >= mesh.last()) {
      r.horizon = true;
    } else if (mode == Mode::vi) {
      const int wait = b.vi->wait.at(last.state);
      r.next_time = mesh.time(std::min(last.mesh_index + wait, mesh.last()));
    } else {
      r.next_time = mesh.time(next_index(table_for(b, mode), s.k() + 1, last.mesh_index,
                                         last.state));
    }
  }
  if (mode == Mode::vi) r.posterior = s.prior;
  return r;
}

SessionState advance(const PolicyBundle& b, Mode mode, const SessionState& s, double t,
                     std::span<const double> x) {
  HistoryEntry e = make_entry(b.setup, t, x);
  SessionState next = s;
  const HistoryEntry& last = s.history.back();
  if (s.k() == 0 && e.mesh_index == last.mesh_index) {
    // Re-anchors the initial state; not counted against the budget.
    next.history.back() = std::move(e);
    return next;
  }
  if (s.k() >= b.setup.config.n) {
    throw StateError(
        fmt::format("observation budget of {} is already spent", b.setup.config.n));
  }
  if (!(t > last.t) || e.mesh_index <= last.mesh_index) {
    throw StateError(fmt::format(
        "observation at t={} must come at least one mesh step ({}) after the previous one at t={}",
        t, b.setup.mesh.step(), last.t));
  }
  if (mode == Mode::vi) {
    next.prior = posterior_update(s.prior, last.state, e.state, e.mesh_index - last.mesh_index,
                                  b.kernels, b.setup.mesh.dilation());
  }
  next.history.push_back(std::move(e));
  return next;
}

std::string new_id() {
  static std::mt19937_64 rng{std::random_device{}()};
  return fmt::format("{:016x}", rng());
}

json entry_json(const HistoryEntry& e, const Setup& setup) {
  return {{"t", e.t},
          {"x", e.x},
          {"grid_x", setup.grid.coordinates(e.state)},
          {"mesh_time", setup.mesh.time(e.mesh_index)},
          {"clamped", e.clamped}};
}

}  // namespace

struct SessionManager::Session {
  std::string id;
  std::shared_ptr<const PolicyBundle> bundle;
  Mode mode = Mode::dp;
  SessionState state;
  std::ofstream log;
  mutable std::mutex mutex;

  void append(const json& event) {
    if (!log.is_open()) return;
    log << event.dump() << '\n';
    log.flush();
    if (!log) throw Error(fmt::format("failed writing the event log of session {}", id));
  }
};

SessionManager::SessionManager(std::shared_ptr<const PolicyStore> store, fs::path log_dir)
    : store_(std::move(store)), log_dir_(std::move(log_dir)) {
  if (!store_) throw ConfigError("session manager needs a policy store");
  if (log_dir_.empty()) return;
  fs::create_directories(log_dir_);
  std::vector<fs::path> logs;
  for (const auto& entry : fs::directory_iterator(log_dir_)) {
    if (entry.is_regular_file() && entry.path().extension() == ".jsonl") {
      logs.push_back(entry.path());
    }
  }
  std::sort(logs.begin(), logs.end());
  for (const auto& log : logs) {
    try {
      replay(log);
    } catch (const std::exception& e) {
      fmt::print(stderr, "warning: skipping session log {}: {}\n", log.string(), e.what());
    }
  }
}

SessionManager::~SessionManager() = default;

void SessionManager::replay(const fs::path& log) {
  std::ifstream in(log);
  std::string line;
  std::shared_ptr<Session> session;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json event;
    try {
      event = json::parse(line);
    } catch (const json::parse_error&) {
      // A torn final line from a crash mid-write is dropped.
      if (in.peek() == std::char_traits<char>::eof()) break;
      throw ConfigError(fmt::format("line {} is not JSON", line_no));
    }
    const std::string op = event.at("op");
    if (op == "create") {
      auto s = std::make_shared<Session>();
      s->id = event.at("id");
      s->bundle = store_->find(event.at("policy").get<std::string>());
      s->mode = parse_mode(event.at("mode").get<std::string>());
      if (!s->bundle->has(s->mode)) throw ConfigError("policy lacks the session's mode");
      const auto x0 = event.at("x0").get<std::vector<double>>();
      s->state.history.push_back(make_entry(s->bundle->setup, 0.0, x0));
      s->state.prior = s->bundle->prior;
      session = std::move(s);
    } else if (op == "observe") {
      if (!session) throw ConfigError("observation before create");
      const auto x = event.at("x").get<std::vector<double>>();
      session->state = advance(*session->bundle, session->mode, session->state,
                               event.at("t").get<double>(), x);
    } else {
      throw ConfigError(fmt::format("unknown event '{}'", op));
    }
  }
  if (!session) return;
  session->log.open(log, std::ios::app);
  std::unique_lock lock(mutex_);
  sessions_[session->id] = std::move(session);
}

CreateResult SessionManager::create(std::string_view policy, Mode mode,
                                    std::optional<std::vector<double>> x0) {
  auto s = std::make_shared<Session>();
  s->bundle = store_->find(policy);
  s->mode = mode;
  if (!s->bundle->has(mode)) {
    throw NotFoundError(
        fmt::format("policy '{}' has no {} artifact", policy, to_string(mode)));
  }
  const Setup& setup = s->bundle->setup;
  const std::vector<double> start = x0 ? *x0 : setup.config.x0;
  s->state.history.push_back(make_entry(setup, 0.0, start));
  s->state.prior = s->bundle->prior;

  std::unique_lock lock(mutex_);
  do {
    s->id = new_id();
  } while (sessions_.count(s->id) != 0);
  if (!log_dir_.empty()) {
    s->log.open(log_dir_ / (s->id + ".jsonl"), std::ios::trunc);
    if (!s->log) throw Error(fmt::format("cannot create event log for session {}", s->id));
    s->append({{"op", "create"},
               {"id", s->id},
               {"policy", s->bundle->name},
               {"mode", to_string(mode)},
               {"x0", start}});
  }
  sessions_[s->id] = s;
  return {s->id, setup.config.n, setup.mesh.horizon(),
          outlook(*s->bundle, s->mode, s->state).next_time};
}

std::shared_ptr<SessionManager::Session> SessionManager::lookup(std::string_view id) const {
  std::shared_lock lock(mutex_);
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) throw NotFoundError(fmt::format("unknown session '{}'", id));
  return it->second;
}

SubmitResult SessionManager::submit(std::string_view id, double t, std::span<const double> x) {
  const auto s = lookup(id);
  std::lock_guard lock(s->mutex);
  SessionState next = advance(*s->bundle, s->mode, s->state, t, x);
  s->append({{"op", "observe"}, {"t", t}, {"x", std::vector<double>(x.begin(), x.end())}});
  s->state = std::move(next);
  return outlook(*s->bundle, s->mode, s->state);
}

json SessionManager::policy_view(std::string_view id, int i, std::size_t axis,
                                 std::optional<std::vector<double>> at) const {
  const auto s = lookup(id);
  std::lock_guard lock(s->mutex);
  const PolicyBundle& b = *s->bundle;
  const Setup& setup = b.setup;
  const int n = setup.config.n;
  if (i < 1 || i > n) throw ConfigError(fmt::format("observation index {} outside 1..{}", i, n));
  HeatmapSlice slice{axis, at ? *at : setup.grid.coordinates(s->state.history.back().state)};
  if (slice.at.size() != setup.grid.dimension()) {
    throw ConfigError(fmt::format("slice anchor needs {} coordinates", setup.grid.dimension()));
  }

  Heatmap map;
  if (s->mode == Mode::vi) {
    // The discounted policy is stationary, so every i shares one surface.
    if (axis >= setup.grid.dimension()) {
      throw ConfigError(fmt::format("slice axis {} but the grid has {} axes", axis,
                                    setup.grid.dimension()));
    }
    std::vector<double> anchor = slice.at;
    anchor[axis] = setup.grid.axis(axis).lo;
    const std::size_t base = setup.grid.nearest(anchor);
    for (std::size_t k = 0; k < setup.grid.points(axis); ++k) {
      map.states.push_back(base + k * setup.grid.stride(axis));
      map.positions.push_back(setup.grid.coordinate(map.states.back(), axis));
    }
    const int rows = setup.mesh.size();
    map.i = i;
    map.t_hat.resize(rows, static_cast<Eigen::Index>(map.states.size()));
    for (int j = 0; j < rows; ++j) {
      map.times.push_back(setup.mesh.time(j));
      for (std::size_t k = 0; k < map.states.size(); ++k) {
        map.t_hat(j, static_cast<Eigen::Index>(k)) =
            j >= setup.mesh.last()
                ? std::numeric_limits<double>::quiet_NaN()
                : setup.mesh.time(std::min(j + b.vi->wait[map.states[k]], setup.mesh.last()));
      }
    }
  } else {
    map = export_heatmap(table_for(b, s->mode), i, setup.grid, slice);
  }

  json rows = json::array();
  for (Eigen::Index j = 0; j < map.t_hat.rows(); ++j) {
    json row = json::array();
    for (Eigen::Index k = 0; k < map.t_hat.cols(); ++k) {
      const double v = map.t_hat(j, k);
      row.push_back(std::isnan(v) ? json(nullptr) : json(v));
    }
    rows.push_back(std::move(row));
  }
  return {{"i", i}, {"axis", axis}, {"anchor", slice.at}, {"times", map.times},
          {"states", map.positions}, {"t_hat", std::move(rows)}};
}

Prior SessionManager::posterior(std::string_view id) const {
  const auto s = lookup(id);
  std::lock_guard lock(s->mutex);
  if (s->mode == Mode::dp) {
    return Prior::point_mass(s->bundle->setup.candidates, s->bundle->dp_theta);
  }
  return s->state.prior;
}

json SessionManager::describe(std::string_view id) const {
  const auto s = lookup(id);
  std::lock_guard lock(s->mutex);
  const PolicyBundle& b = *s->bundle;
  const auto now = outlook(b, s->mode, s->state);
  json history = json::array();
  for (const auto& e : s->state.history) history.push_back(entry_json(e, b.setup));
  json out = {{"id", s->id},
              {"policy", b.name},
              {"model", b.setup.config.name},
              {"mode", to_string(s->mode)},
              {"n", b.setup.config.n},
              {"tau", b.setup.mesh.horizon()},
              {"k", s->state.k()},
              {"status", now.exhausted ? "exhausted" : "active"},
              {"horizon", now.horizon},
              {"next_time", now.next_time ? json(*now.next_time) : json(nullptr)},
              {"history", std::move(history)}};
  if (s->mode == Mode::vi) out["posterior"] = prior_to_json(s->state.prior);
  return out;
}

std::vector<std::string> SessionManager::ids() const {
  std::shared_lock lock(mutex_);
  std::vector<std::string> out;
  for (const auto& [id, _] : sessions_) out.push_back(id);
  return out;
}

}  // namespace infosched::service
