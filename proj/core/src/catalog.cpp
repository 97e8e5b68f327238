#include "infosched/catalog.hpp"

#include <cmath>
#include <utility>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "infosched/error.hpp"

namespace infosched {

namespace {

// Pharmacokinetic Ornstein–Uhlenbeck: dx = -αx dt + σ dw, θ = α.
constexpr double kOuSigma = 1.0;

// Rosenzweig–MacArthur chemostat, θ = K.
constexpr double kRmaD = 1.0;
constexpr double kRmaG = 2.0;
constexpr double kRmaR = 1.8;
constexpr double kRmaSigma = 4e-4;

// Slow-fast Liénard system, θ = ε. The x-equation is divided through by ε.
constexpr double kLienardSigma = 0.1;

DiffusionModel ou_model() {
  return DiffusionModel(
      "ou", 1,
      [](std::span<const double> x, double alpha, std::span<double> out) {
        out[0] = -alpha * x[0];
      },
      [](std::span<const double>, double, std::span<double> out) { out[0] = kOuSigma; });
}

DiffusionModel rma_model() {
  return DiffusionModel(
      "rma", 2,
      [](std::span<const double> s, double k, std::span<double> out) {
        const double x = s[0];
        const double y = s[1];
        out[0] = x * (kRmaR - x - kRmaG * y / (k + x));
        out[1] = y * (kRmaG * x / (k + x) - kRmaD);
      },
      [](std::span<const double>, double, std::span<double> out) {
        out[0] = kRmaSigma;
        out[1] = kRmaSigma;
      },
      [](double k) { return k > 0; });
}

DiffusionModel lienard_model() {
  return DiffusionModel(
      "lienard", 2,
      [](std::span<const double> s, double eps, std::span<double> out) {
        const double x = s[0];
        const double y = s[1];
        out[0] = (y + x - x * x * x / 3.0) / eps;
        out[1] = -x;
      },
      [](std::span<const double>, double eps, std::span<double> out) {
        out[0] = kLienardSigma / eps;
        out[1] = kLienardSigma;
      },
      [](double eps) { return eps > 0; });
}

ModelConfig ou_config(Scale scale) {
  ModelConfig c;
  c.name = "ou";
  c.theta_true = 2.0;
  c.x0 = {8.0};
  c.n = 3;
  c.tau = 2.0;
  c.phi = {0.1, 10.0, 0.1};
  if (scale == Scale::paper) {
    c.delta = 1e-5;
    c.gamma = 200;
    c.grid = {{-2.0, 9.0, 0.01}};
  } else {
    c.delta = 1e-4;
    c.gamma = 100;
    c.grid = {{-2.0, 9.0, 0.02}};
  }
  return c;
}

ModelConfig rma_config(Scale scale) {
  ModelConfig c;
  c.name = "rma";
  c.theta_true = 0.5;
  c.x0 = {0.4, 0.2};
  c.n = 8;
  c.tau = 28.0;
  c.phi = {0.25, 1.25, 0.01};
  if (scale == Scale::paper) {
    c.delta = 1e-5;
    c.gamma = 2800;
    c.grid = {{-0.2, 1.8, 0.025}, {-0.2, 1.4, 0.025}};
  } else {
    // Half the lattice resolution and a five-times coarser decision mesh.
    c.delta = 1e-3;
    c.gamma = 140;
    c.grid = {{-0.2, 1.8, 0.05}, {-0.2, 1.4, 0.05}};
  }
  return c;
}

ModelConfig lienard_config(Scale scale) {
  ModelConfig c;
  c.name = "lienard";
  c.theta_true = 0.05;
  c.x0 = {1.75, 0.0};
  c.n = 5;
  c.tau = 5.0;
  c.phi = {0.01, 0.2, 0.01};
  if (scale == Scale::paper) {
    c.delta = 1e-5;
    c.gamma = 1000;
    c.grid = {{-3.0, 3.0, 0.1}, {-1.5, 1.5, 0.1}};
  } else {
    c.delta = 1e-4;
    c.gamma = 500;
    c.grid = {{-3.0, 3.0, 0.2}, {-1.5, 1.5, 0.2}};
  }
  return c;
}

double number(const nlohmann::json& doc, const char* key) {
  if (!doc.contains(key) || !doc.at(key).is_number()) {
    throw ConfigError(fmt::format("model config: '{}' must be a number", key));
  }
  return doc.at(key).get<double>();
}

}  // namespace

Scale parse_scale(std::string_view text) {
  if (text == "paper") return Scale::paper;
  if (text == "desk") return Scale::desk;
  throw ConfigError(fmt::format("unknown scale '{}' (expected paper or desk)", text));
}

std::vector<std::string> catalog_names() { return {"ou", "rma", "lienard"}; }

DiffusionModel make_model(std::string_view name) {
  if (name == "ou") return ou_model();
  if (name == "rma") return rma_model();
  if (name == "lienard") return lienard_model();
  throw NotFoundError(fmt::format("unknown model '{}'; valid names: {}", name,
                                  fmt::join(catalog_names(), ", ")));
}

ModelConfig catalog_config(std::string_view name, Scale scale) {
  if (name == "ou") return ou_config(scale);
  if (name == "rma") return rma_config(scale);
  if (name == "lienard") return lienard_config(scale);
  throw NotFoundError(fmt::format("unknown model '{}'; valid names: {}", name,
                                  fmt::join(catalog_names(), ", ")));
}

nlohmann::json ModelConfig::to_json() const {
  nlohmann::json grid_doc = nlohmann::json::array();
  for (const auto& ax : grid) grid_doc.push_back({{"lo", ax.lo}, {"hi", ax.hi}, {"h", ax.h}});
  return {{"name", name},
          {"theta_true", theta_true},
          {"x0", x0},
          {"n", n},
          {"tau", tau},
          {"delta", delta},
          {"gamma", gamma},
          {"grid", grid_doc},
          {"phi", {{"lo", phi.lo}, {"hi", phi.hi}, {"step", phi.step}}}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ConfigError("model config must be a JSON object");
  ModelConfig c;
  try {
    c.name = doc.at("name").get<std::string>();
    c.theta_true = number(doc, "theta_true");
    c.x0 = doc.at("x0").get<std::vector<double>>();
    c.n = doc.at("n").get<int>();
    c.tau = number(doc, "tau");
    c.delta = number(doc, "delta");
    c.gamma = doc.at("gamma").get<int>();
    for (const auto& ax : doc.at("grid")) {
      c.grid.push_back({number(ax, "lo"), number(ax, "hi"), number(ax, "h")});
    }
    const auto& phi = doc.at("phi");
    c.phi = {number(phi, "lo"), number(phi, "hi"), number(phi, "step")};
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("model config: {}", e.what()));
  }
  c.validate();
  return c;
}

StateGrid ModelConfig::state_grid() const {
  if (grid.empty()) throw ConfigError("model config: grid has no axes");
  std::vector<AxisRange> axes;
  const double h = grid.front().h;
  for (const auto& ax : grid) {
    if (std::abs(ax.h - h) > 1e-12 * h) {
      throw ConfigError("model config: grid spacing must be uniform across axes");
    }
    axes.push_back({ax.lo, ax.hi});
  }
  return StateGrid(std::move(axes), h);
}

TimeMesh ModelConfig::time_mesh() const { return TimeMesh(delta, gamma, tau); }

CandidateGrid ModelConfig::candidates() const { return CandidateGrid(phi.lo, phi.hi, phi.step); }

void ModelConfig::validate() const {
  if (n < 1) throw ConfigError("model config: n must be >= 1");
  const auto g = state_grid();
  time_mesh();
  candidates();
  if (x0.size() != g.dimension()) {
    throw ConfigError(fmt::format("model config: x0 has {} components, grid has {} axes",
                                  x0.size(), g.dimension()));
  }
  if (!g.contains(x0)) throw ConfigError("model config: x0 lies outside the grid");
}

Setup Setup::from_config(ModelConfig config) {
  config.validate();
  auto model = make_model(config.name);
  if (model.dimension() != config.grid.size()) {
    throw ConfigError(fmt::format("model {} has dimension {}, config grid has {} axes",
                                  config.name, model.dimension(), config.grid.size()));
  }
  auto grid = config.state_grid();
  auto mesh = config.time_mesh();
  auto candidates = config.candidates();
  return Setup{std::move(config), std::move(model), std::move(grid), mesh,
               std::move(candidates)};
}

}  // namespace infosched
