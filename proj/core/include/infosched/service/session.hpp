#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "infosched/catalog.hpp"
#include "infosched/chain.hpp"
#include "infosched/policy.hpp"
#include "infosched/vi.hpp"

namespace infosched::service {

/// dp and averaged sessions follow a FITG table; vi sessions follow the
/// discounted policy and update the posterior after every observation.
enum class Mode { dp, averaged, vi };

std::string_view to_string(Mode mode);
Mode parse_mode(std::string_view text);

/// A precompute output directory, loaded read-only.
struct PolicyBundle {
  std::string name;
  std::filesystem::path dir;
  Setup setup;
  std::optional<FitgTable> dp;
  double dp_theta = 0.0;  ///< θ the dp table was computed at
  std::optional<FitgTable> averaged;
  std::optional<ViPolicy> vi;
  Prior prior;  ///< prior behind the averaged and vi artifacts
  /// One chain kernel per prior candidate (vi only), for posterior updates.
  std::vector<TransitionKernel> kernels;

  bool has(Mode mode) const;
};

/// Loads config.json and whichever policy files exist in `dir`.
std::shared_ptr<const PolicyBundle> load_bundle(std::string name,
                                                const std::filesystem::path& dir);

class PolicyStore {
 public:
  void add(std::shared_ptr<const PolicyBundle> bundle);
  /// Loads `root` itself when it holds a config.json, otherwise every
  /// subdirectory that does. Bundles are named after their directory.
  void load_root(const std::filesystem::path& root);
  /// Throws NotFoundError for unknown names.
  std::shared_ptr<const PolicyBundle> find(std::string_view name) const;
  std::vector<std::string> names() const;

 private:
  std::map<std::string, std::shared_ptr<const PolicyBundle>, std::less<>> bundles_;
};

struct HistoryEntry {
  double t = 0.0;
  std::vector<double> x;  ///< as submitted
  int mesh_index = 0;
  std::size_t state = 0;
  bool clamped = false;
};

struct SubmitResult {
  std::optional<double> next_time;
  bool exhausted = false;
  bool horizon = false;  ///< budget left but no future mesh point
  bool clamped = false;
  std::optional<Prior> posterior;  ///< vi sessions only
};

nlohmann::json to_json(const SubmitResult& result);

struct CreateResult {
  std::string id;
  int n = 0;
  double tau = 0.0;
  std::optional<double> next_time;
};

/// Live sessions. Sessions are independent; calls on one session are
/// serialized. With a log directory every mutation is appended to
/// <log_dir>/<id>.jsonl before it is acknowledged, and existing logs are
/// replayed on construction.
class SessionManager {
 public:
  explicit SessionManager(std::shared_ptr<const PolicyStore> store,
                          std::filesystem::path log_dir = {});
  ~SessionManager();
  SessionManager(const SessionManager&) = delete;
  SessionManager& operator=(const SessionManager&) = delete;

  /// Starts a session with t₀ = 0 and x₀ from the policy's config unless given.
  CreateResult create(std::string_view policy, Mode mode,
                      std::optional<std::vector<double>> x0 = std::nullopt);

  /// Records an observation. A submission at t = 0 before any budgeted
  /// observation replaces x₀; later submissions must advance by at least one
  /// mesh step and count against the budget. Rejected submissions leave the
  /// session unchanged.
  SubmitResult submit(std::string_view id, double t, std::span<const double> x);

  /// Heat map of optimal next times for observation i (1..n). For 2-D grids
  /// the slice is anchored at the last observed state unless `at` is given.
  nlohmann::json policy_view(std::string_view id, int i, std::size_t axis = 0,
                             std::optional<std::vector<double>> at = std::nullopt) const;

  /// Current posterior: a point mass for dp, the fixed prior for averaged.
  Prior posterior(std::string_view id) const;

  nlohmann::json describe(std::string_view id) const;
  std::vector<std::string> ids() const;
  const PolicyStore& store() const noexcept { return *store_; }

 private:
  struct Session;
  std::shared_ptr<Session> lookup(std::string_view id) const;
  void replay(const std::filesystem::path& log);

  std::shared_ptr<const PolicyStore> store_;
  std::filesystem::path log_dir_;
  mutable std::shared_mutex mutex_;
  std::map<std::string, std::shared_ptr<Session>, std::less<>> sessions_;
};

}  // namespace infosched::service
