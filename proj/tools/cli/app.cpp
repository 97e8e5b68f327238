#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <Eigen/Core>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include "cli/commands.hpp"
#include "infosched/artifacts.hpp"
#include "infosched/error.hpp"
#include "infosched/service/http.hpp"

namespace infosched::cli {

namespace fs = std::filesystem;

namespace {

struct Flags {
  std::string model;
  std::string config;
  std::string scale = "desk";
  std::string out;
  int threads = 0;
  std::optional<double> delta;
  std::optional<int> gamma;
  std::optional<int> n;
};

void add_source_flags(CLI::App* cmd, Flags& f) {
  cmd->add_option("--model", f.model, "Catalog model: ou, rma or lienard");
  cmd->add_option("--config", f.config, "JSON model config (instead of --model)");
  cmd->add_option("--scale", f.scale, "Catalog preset: desk or paper")
      ->check(CLI::IsMember({"desk", "paper"}));
  cmd->add_option("--out", f.out, "Artifact directory (default runs/<model>-<scale>)");
  cmd->add_option("--threads", f.threads, "Cap on linear-algebra threads (0 = library default)")
      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--delta", f.delta, "Override the chain time step δ");
  cmd->add_option("--gamma", f.gamma, "Override the mesh dilation γ");
  cmd->add_option("--n", f.n, "Override the observation budget n");
}

ConfigSource source_of(const Flags& f) {
  ConfigSource s;
  s.model = f.model;
  s.config_path = f.config;
  s.scale = parse_scale(f.scale);
  s.delta = f.delta;
  s.gamma = f.gamma;
  s.n = f.n;
  return s;
}

fs::path out_dir(const Flags& f) {
  return f.out.empty() ? default_out(source_of(f)) : fs::path(f.out);
}

std::vector<std::string> split(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<double> numbers(const std::string& text) {
  std::vector<double> out;
  for (const auto& item : split(text)) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw ConfigError(fmt::format("'{}' is not a number", item));
    }
  }
  return out;
}

service::HttpServer* active_server = nullptr;

extern "C" void stop_server(int) {
  if (active_server != nullptr) active_server->stop();
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Information-optimal observation schedules for diffusions", "infosched"};
  app.require_subcommand(1);
  Flags f;

  // precompute
  auto* pre = app.add_subcommand("precompute", "Build kernels, information profiles and policies");
  add_source_flags(pre, f);
  std::string pre_designs = "dp";
  PrecomputeOptions popt;
  pre->add_option("--design", pre_designs, "Comma list of dp, averaged, vi");
  pre->add_option("--dtheta", popt.dtheta, "Finite-difference step Δθ (default: Φ spacing)")
      ->check(CLI::NonNegativeNumber);
  pre->add_option("--lambda", popt.discount, "Discount λ for the vi policy");
  pre->add_option("--epsilon", popt.tolerance, "L1 tolerance ε for the vi policy (default 1e-6·|S|)")
      ->check(CLI::NonNegativeNumber);
  pre->add_flag("--force", popt.force, "Recompute even when the manifest matches");

  // experiment
  auto* exp = app.add_subcommand("experiment", "Simulate paired replicates and estimate θ");
  add_source_flags(exp, f);
  std::string exp_designs = "policy,uniform";
  ExperimentOptions eopt;
  exp->add_option("--design", exp_designs, "Comma list of policy, uniform, averaged, vi");
  exp->add_option("--reps", eopt.replicates, "Number of replicates");
  exp->add_option("--seed", eopt.seed, "Random seed");
  exp->add_flag("--vi-recompute", eopt.vi_recompute,
                "Re-solve the vi policy after every posterior update");

  // heatmap
  auto* heat = app.add_subcommand("heatmap", "Optimal next-time surface of one observation");
  add_source_flags(heat, f);
  int heat_i = 1;
  std::string heat_design = "policy";
  std::size_t heat_axis = 0;
  std::string heat_at;
  std::string heat_file;
  heat->add_option("--i", heat_i, "Observation index (1..n)")->required();
  heat->add_option("--design", heat_design, "policy or averaged");
  heat->add_option("--axis", heat_axis, "Axis varied along the columns (2-D models)");
  heat->add_option("--at", heat_at, "Comma list fixing the other coordinates");
  heat->add_option("--file", heat_file, "Write the CSV here instead of stdout");

  // serve
  auto* serve = app.add_subcommand("serve", "Run the live-session HTTP service");
  std::string policies = "runs";
  std::string state_dir;
  std::string host = "127.0.0.1";
  int port = 8080;
  int serve_threads = 0;
  serve->add_option("--policies", policies, "Directory of precompute outputs");
  serve->add_option("--state-dir", state_dir, "Session event logs (default <policies>/sessions)");
  serve->add_option("--host", host, "Listen address");
  serve->add_option("--port", port, "Listen port (0 picks a free port)");
  serve->add_option("--threads", serve_threads, "Cap on linear-algebra threads")
      ->check(CLI::NonNegativeNumber);

  // catalog
  auto* cat = app.add_subcommand("catalog", "Print the compiled-in model configurations");
  std::string cat_scale = "desk";
  cat->add_option("--scale", cat_scale, "desk or paper")->check(CLI::IsMember({"desk", "paper"}));

  std::vector<std::string> args(argv + 1, argv + argc);
  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << e.what() << '\n';
      return kOk;
    }
    err << "error: " << e.what() << '\n';
    if (app.get_subcommands().empty()) err << app.help();
    return kConfig;
  }

  try {
    const int threads = serve->parsed() ? serve_threads : f.threads;
    if (threads > 0) Eigen::setNbThreads(threads);

    if (pre->parsed()) {
      for (const auto& d : split(pre_designs)) {
        if (d == "dp" || d == "policy") continue;
        if (d == "averaged") {
          popt.averaged = true;
        } else if (d == "vi") {
          popt.vi = true;
        } else {
          throw ConfigError(fmt::format("unknown precompute design '{}'", d));
        }
      }
      const auto config = resolve_config(source_of(f));
      const auto result = precompute(config, popt, out_dir(f), err);
      fmt::print(out, "{} {} (config hash {})\n", result.cached ? "cached" : "wrote",
                 result.dir.string(), result.manifest.at("config_hash").get<std::string>());
    } else if (exp->parsed()) {
      eopt.designs.clear();
      for (const auto& d : split(exp_designs)) eopt.designs.push_back(parse_design(d));
      if (eopt.designs.empty()) throw ConfigError("--design lists no designs");
      const auto dir = out_dir(f);
      const auto rows = experiment(dir, eopt, err);
      const auto config = ModelConfig::from_json(read_json_file(dir / layout::kConfig));
      print_table(out, rows, config.theta_true);
    } else if (heat->parsed()) {
      HeatmapSlice slice{heat_axis, numbers(heat_at)};
      if (heat_file.empty()) {
        heatmap(out_dir(f), heat_i, parse_design(heat_design), slice, out);
      } else {
        std::ofstream file(heat_file);
        if (!file) throw ConfigError(fmt::format("cannot write {}", heat_file));
        heatmap(out_dir(f), heat_i, parse_design(heat_design), slice, file);
      }
    } else if (serve->parsed()) {
      auto store = std::make_shared<service::PolicyStore>();
      store->load_root(policies);
      const fs::path logs = state_dir.empty() ? fs::path(policies) / "sessions" : fs::path(state_dir);
      service::SessionManager sessions(store, logs);
      service::HttpServer server(sessions);
      const int bound = server.bind(host, port);
      fmt::print(out, "serving {} policies on http://{}:{} (session logs in {})\n",
                 store->names().size(), host, bound, logs.string());
      out.flush();
      active_server = &server;
      std::signal(SIGINT, stop_server);
      std::signal(SIGTERM, stop_server);
      server.listen();
      active_server = nullptr;
    } else if (cat->parsed()) {
      nlohmann::json doc = nlohmann::json::object();
      for (const auto& name : catalog_names()) {
        doc[name] = catalog_config(name, parse_scale(cat_scale)).to_json();
      }
      out << doc.dump(2) << '\n';
    }
  } catch (const StabilityError& e) {
    err << "error: " << e.what() << "\n  hint: lower --delta below the bound or coarsen the grid\n";
    return kConfig;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kConfig;
  } catch (const NotFoundError& e) {
    err << "error: " << e.what() << '\n';
    return kConfig;
  } catch (const StateError& e) {
    err << "error: " << e.what() << '\n';
    return kConfig;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << '\n';
    return kNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kOk;
}

}  // namespace infosched::cli
