#include "cli/commands.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <ostream>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "infosched/artifacts.hpp"
#include "infosched/bank.hpp"
#include "infosched/chain.hpp"
#include "infosched/error.hpp"
#include "infosched/hash.hpp"
#include "infosched/info.hpp"
#include "infosched/vi.hpp"

namespace infosched::cli {

namespace fs = std::filesystem;
using nlohmann::json;

ModelConfig resolve_config(const ConfigSource& source) {
  ModelConfig c;
  if (!source.config_path.empty()) {
    c = ModelConfig::from_json(read_json_file(source.config_path));
  } else if (!source.model.empty()) {
    c = catalog_config(source.model, source.scale);
  } else {
    throw ConfigError("either --model or --config is required");
  }
  if (source.delta) c.delta = *source.delta;
  if (source.gamma) c.gamma = *source.gamma;
  if (source.n) c.n = *source.n;
  c.validate();
  return c;
}

fs::path default_out(const ConfigSource& source) {
  const std::string name =
      source.config_path.empty() ? source.model : source.config_path.stem().string();
  return fs::path("runs") /
         fmt::format("{}-{}", name, source.scale == Scale::paper ? "paper" : "desk");
}

namespace {

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

template <typename Writer>
void write_file(const fs::path& path, Writer&& writer, bool binary = false) {
  std::ofstream out(path, binary ? std::ios::binary | std::ios::trunc : std::ios::trunc);
  if (!out) throw Error(fmt::format("cannot write {}", path.string()));
  writer(out);
  out.close();
  if (!out) throw Error(fmt::format("failed writing {}", path.string()));
}

bool manifest_matches(const fs::path& dir, const std::string& hash, json* manifest) {
  const auto path = dir / layout::kManifest;
  if (!fs::exists(path)) return false;
  json m;
  try {
    m = read_json_file(path);
  } catch (const Error&) {
    return false;
  }
  if (m.value("config_hash", std::string()) != hash || !m.contains("files")) return false;
  for (const auto& [name, digest] : m.at("files").items()) {
    const auto file = dir / name;
    if (!fs::exists(file) || file_sha256(file) != digest.get<std::string>()) return false;
  }
  *manifest = std::move(m);
  return true;
}

std::size_t index_of(std::span<const double> values, double theta) {
  for (std::size_t k = 0; k < values.size(); ++k) {
    if (std::abs(values[k] - theta) <= 1e-9 * std::max(1.0, std::abs(theta))) return k;
  }
  return values.size();
}

std::string prior_reference(const Prior& prior) { return "prior=" + prior_hash(prior); }

}  // namespace

PrecomputeResult precompute(const ModelConfig& config, const PrecomputeOptions& options,
                            const fs::path& out, std::ostream& log) {
  config.validate();
  const Setup setup = Setup::from_config(config);
  const double dtheta = options.dtheta > 0 ? options.dtheta : config.phi.step;
  if (!(dtheta > 0)) throw ConfigError("Δθ must be positive");
  if (setup.mesh.size() < 2) throw ConfigError("the decision mesh needs at least two points");

  json designs = json::array({"dp"});
  if (options.averaged) designs.push_back("averaged");
  if (options.vi) designs.push_back("vi");
  json key = {{"config", config.to_json()}, {"dtheta", dtheta}, {"designs", designs}};
  ViOptions vi_options;
  if (options.vi) {
    vi_options.discount = options.discount;
    vi_options.tolerance =
        options.tolerance > 0 ? options.tolerance : 1e-6 * static_cast<double>(setup.grid.size());
    vi_options.max_lag = vi_max_lag(setup.mesh, config.n);
    key["vi"] = {{"discount", vi_options.discount},
                 {"tolerance", vi_options.tolerance},
                 {"max_lag", vi_options.max_lag}};
  }
  const std::string hash = json_hash(key);

  PrecomputeResult result;
  result.dir = out;
  if (!options.force && manifest_matches(out, hash, &result.manifest)) {
    result.cached = true;
    fmt::print(log, "{}: manifest {} matches, skipping precompute\n", out.string(),
               hash.substr(0, 12));
    return result;
  }

  fs::create_directories(out);
  fs::remove(out / layout::kManifest);
  Stopwatch clock;
  fmt::print(log, "{}: {} states, {} mesh points, n={}, delta={}, gamma={}\n", config.name,
             setup.grid.size(), setup.mesh.size(), config.n, config.delta, config.gamma);

  const auto kernel = build_kernel(setup.model, setup.grid, config.theta_true, config.delta);
  json files = json::object();
  auto record = [&](const char* name, auto&& writer, bool binary = false) {
    write_file(out / name, writer, binary);
    files[name] = file_sha256(out / name);
  };
  record(layout::kConfig, [&](std::ostream& o) { o << config.to_json().dump(2) << '\n'; });
  record(layout::kKernel, [&](std::ostream& o) { write_kernel(o, kernel); });

  const bool need_prior = options.averaged || options.vi;
  std::vector<double> thetas;
  if (need_prior) thetas = setup.candidates.values();
  std::size_t truth = index_of(thetas, config.theta_true);
  if (truth == thetas.size()) thetas.push_back(config.theta_true);

  BankOptions bank_options;
  bank_options.dtheta = dtheta;
  bank_options.max_lag = setup.mesh.size() - 1;
  const auto bank =
      build_theta_bank(setup.model, setup.grid, setup.mesh, thetas, bank_options);
  fmt::print(log, "  information bank for {} parameter values: {:.1f} s\n", thetas.size(),
             clock.seconds());

  record(layout::kProfile, [&](std::ostream& o) { write_profile_csv(o, bank[truth].profile); });
  const auto table = compute_fitg(bank[truth], setup.mesh, config.n);
  record(
      layout::policy_file("dp").c_str(),
      [&](std::ostream& o) {
        write_policy(o, make_header("dp", setup, fmt::format("theta={}", config.theta_true)),
                     table);
      },
      true);
  fmt::print(log, "  dp policy: {:.1f} s\n", clock.seconds());

  if (need_prior) {
    const Prior prior = Prior::uniform(setup.candidates);
    const std::span<const ThetaComponent> components(bank.data(), setup.candidates.size());
    record(layout::kPrior, [&](std::ostream& o) { o << prior_to_json(prior).dump(2) << '\n'; });
    if (options.averaged) {
      const auto averaged = averaged_fitg(components, prior, setup.mesh, config.n);
      record(
          layout::policy_file("averaged").c_str(),
          [&](std::ostream& o) {
            write_policy(o, make_header("averaged", setup, prior_reference(prior)), averaged);
          },
          true);
      fmt::print(log, "  averaged policy: {:.1f} s\n", clock.seconds());
    }
    if (options.vi) {
      const auto vi = value_iterate(components, prior, vi_options);
      record(
          layout::policy_file("vi").c_str(),
          [&](std::ostream& o) {
            write_policy(o, make_header("vi", setup, prior_reference(prior)), vi);
          },
          true);
      fmt::print(log, "  vi policy: {} iterations, residual {:.3g}: {:.1f} s\n", vi.iterations,
                 vi.residual, clock.seconds());
    }
  }

  result.manifest = {{"config_hash", hash}, {"key", key}, {"files", files}};
  write_file(out / layout::kManifest,
             [&](std::ostream& o) { o << result.manifest.dump(2) << '\n'; });
  return result;
}

namespace {

FitgTable load_table(const fs::path& dir, std::string_view type, const Setup& setup) {
  const auto path = dir / layout::policy_file(type);
  if (!fs::exists(path)) {
    throw NotFoundError(fmt::format("{} is missing; run precompute with the {} design first",
                                    path.string(), type));
  }
  auto file = read_policy(path);
  check_compatible(file.header, setup);
  if (!file.table) throw ConfigError(fmt::format("{} holds no FITG table", path.string()));
  return std::move(*file.table);
}

}  // namespace

std::vector<ExperimentRow> experiment(const fs::path& dir, const ExperimentOptions& options,
                                      std::ostream& log) {
  const auto config = ModelConfig::from_json(read_json_file(dir / layout::kConfig));
  const Setup setup = Setup::from_config(config);
  const json manifest = read_json_file(dir / layout::kManifest);

  std::optional<FitgTable> dp, averaged;
  std::optional<ViPolicy> vi;
  std::vector<ThetaComponent> components;
  Prior prior;
  ViOptions vi_options;
  for (Design d : options.designs) {
    if (d == Design::policy && !dp) dp = load_table(dir, "dp", setup);
    if (d == Design::averaged && !averaged) averaged = load_table(dir, "averaged", setup);
    if (d == Design::vi && !vi) {
      const auto path = dir / layout::policy_file("vi");
      if (!fs::exists(path)) {
        throw NotFoundError(fmt::format(
            "{} is missing; run precompute with the vi design first", path.string()));
      }
      auto file = read_policy(path);
      check_compatible(file.header, setup);
      prior = prior_from_json(read_json_file(dir / layout::kPrior));
      if (file.header.reference != prior_reference(prior)) {
        throw ConfigError("vi policy was computed for a different prior");
      }
      vi = std::move(file.vi);
      vi_options.discount = vi->discount;
      vi_options.tolerance = vi->tolerance;
      vi_options.max_lag = vi->max_lag;
      BankOptions bank_options;
      bank_options.dtheta = manifest.at("key").at("dtheta").get<double>();
      bank_options.max_lag = vi->max_lag;
      Stopwatch clock;
      components = build_theta_bank(setup.model, setup.grid, setup.mesh, prior.values,
                                    bank_options);
      fmt::print(log, "  vi components for {} parameter values: {:.1f} s\n", prior.size(),
                 clock.seconds());
    }
  }

  std::vector<ExperimentRow> rows;
  for (Design d : options.designs) {
    DesignInputs in;
    in.table = d == Design::averaged ? (averaged ? &*averaged : nullptr) : (dp ? &*dp : nullptr);
    in.vi = vi ? &*vi : nullptr;
    in.components = components;
    in.prior = prior;
    in.vi_options = vi_options;
    in.vi_recompute = options.vi_recompute;
    Stopwatch clock;
    rows.push_back({d, std::nullopt,
                    run_experiment(d, setup, in, options.replicates, options.seed)});
    fmt::print(log, "  {}: {} replicates in {:.1f} s\n", to_string(d), options.replicates,
               clock.seconds());
  }

  write_file(dir / "records.csv", [&](std::ostream& o) {
    bool header = true;
    for (const auto& row : rows) {
      write_records_csv(o, row.records, setup, header);
      header = false;
    }
  });

  json stats = {{"model", config.name},
                {"theta_true", config.theta_true},
                {"replicates", options.replicates},
                {"seed", options.seed},
                {"designs", json::object()}};
  for (auto& row : rows) {
    row.stats = summarize(row.records, config.theta_true);
    stats["designs"][std::string(to_string(row.design))] = stats_json(*row.stats);
  }
  write_file(dir / "stats.json", [&](std::ostream& o) { o << stats.dump(2) << '\n'; });
  return rows;
}

void print_table(std::ostream& out, const std::vector<ExperimentRow>& rows, double theta_true) {
  fmt::print(out, "theta_true = {}\n", theta_true);
  fmt::print(out, "{:<10} {:>8} {:>9} {:>8} {:>8}\n", "design", "mean", "bias", "SD", "MSE");
  for (const auto& row : rows) {
    if (!row.stats) continue;
    const auto& s = *row.stats;
    fmt::print(out, "{:<10} {:>8.4f} {:>9.4f} {:>8.4f} {:>8.4f}\n", to_string(row.design),
               s.mean, s.bias, s.sd, s.mse);
  }
}

void heatmap(const fs::path& dir, int i, Design design, const HeatmapSlice& slice,
             std::ostream& out) {
  if (design != Design::policy && design != Design::averaged) {
    throw ConfigError("heat maps are available for the policy and averaged designs");
  }
  const auto config = ModelConfig::from_json(read_json_file(dir / layout::kConfig));
  const Setup setup = Setup::from_config(config);
  const auto table = load_table(dir, design == Design::policy ? "dp" : "averaged", setup);
  write_heatmap_csv(out, export_heatmap(table, i, setup.grid, slice));
}

}  // namespace infosched::cli
