#include "infosched/artifacts.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include <fmt/format.h>

#include "infosched/error.hpp"
#include "infosched/hash.hpp"

namespace infosched {

namespace {

constexpr char kMagic[8] = {'I', 'S', 'C', 'H', 'P', 'O', 'L', '1'};

template <typename T>
void put(std::ostream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

void put_string(std::ostream& out, const std::string& s) {
  put(out, static_cast<std::uint64_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

template <typename Derived>
void put_block(std::ostream& out, const Eigen::PlainObjectBase<Derived>& m) {
  put(out, static_cast<std::uint64_t>(m.rows()));
  put(out, static_cast<std::uint64_t>(m.cols()));
  out.write(reinterpret_cast<const char*>(m.data()),
            static_cast<std::streamsize>(m.size() * sizeof(typename Derived::Scalar)));
}

template <typename T>
T get(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw ConfigError("policy file is truncated");
  return value;
}

std::string get_string(std::istream& in) {
  const auto size = get<std::uint64_t>(in);
  if (size > (1u << 20)) throw ConfigError("policy file has a corrupt string length");
  std::string s(size, '\0');
  in.read(s.data(), static_cast<std::streamsize>(size));
  if (!in) throw ConfigError("policy file is truncated");
  return s;
}

template <typename M>
M get_block(std::istream& in) {
  const auto rows = get<std::uint64_t>(in);
  const auto cols = get<std::uint64_t>(in);
  if (rows > (1u << 24) || cols > (1u << 24)) {
    throw ConfigError("policy file has corrupt matrix dimensions");
  }
  M m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  in.read(reinterpret_cast<char*>(m.data()),
          static_cast<std::streamsize>(m.size() * sizeof(typename M::Scalar)));
  if (!in) throw ConfigError("policy file is truncated");
  return m;
}

void put_header(std::ostream& out, const PolicyHeader& h) {
  out.write(kMagic, sizeof(kMagic));
  put_string(out, h.type);
  put_string(out, h.model);
  put_string(out, h.reference);
  put(out, static_cast<std::int32_t>(h.n));
  put(out, h.delta);
  put(out, static_cast<std::int32_t>(h.gamma));
  put(out, h.tau);
  put(out, h.spacing);
  put(out, static_cast<std::uint32_t>(h.axes.size()));
  for (const auto& a : h.axes) {
    put(out, a.lo);
    put(out, a.hi);
  }
}

PolicyHeader get_header(std::istream& in) {
  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw ConfigError("not a policy file (bad magic)");
  }
  PolicyHeader h;
  h.type = get_string(in);
  h.model = get_string(in);
  h.reference = get_string(in);
  h.n = get<std::int32_t>(in);
  h.delta = get<double>(in);
  h.gamma = get<std::int32_t>(in);
  h.tau = get<double>(in);
  h.spacing = get<double>(in);
  const auto axes = get<std::uint32_t>(in);
  if (axes > 16) throw ConfigError("policy file has a corrupt axis count");
  for (std::uint32_t a = 0; a < axes; ++a) {
    const double lo = get<double>(in);
    const double hi = get<double>(in);
    h.axes.push_back({lo, hi});
  }
  return h;
}

bool close(double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(b)); }

}  // namespace

PolicyHeader make_header(std::string type, const Setup& setup, std::string reference) {
  PolicyHeader h;
  h.type = std::move(type);
  h.model = setup.config.name;
  h.reference = std::move(reference);
  h.n = setup.config.n;
  h.delta = setup.mesh.delta();
  h.gamma = setup.mesh.dilation();
  h.tau = setup.mesh.horizon();
  h.spacing = setup.grid.spacing();
  h.axes = setup.grid.axes();
  return h;
}

void write_policy(std::ostream& out, const PolicyHeader& header, const FitgTable& table) {
  if (header.type == "vi") throw ConfigError("a FITG table cannot be written as type vi");
  put_header(out, header);
  put(out, static_cast<std::int32_t>(table.n));
  for (int i = 1; i <= table.n; ++i) {
    put_block(out, table.m(i));
    put_block(out, table.t_hat(i));
  }
  if (!out) throw Error("failed writing policy file");
}

void write_policy(std::ostream& out, const PolicyHeader& header, const ViPolicy& policy) {
  if (header.type != "vi") throw ConfigError("a value-iteration policy must have type vi");
  put_header(out, header);
  put(out, policy.discount);
  put(out, policy.tolerance);
  put(out, policy.residual);
  put(out, static_cast<std::int32_t>(policy.iterations));
  put(out, static_cast<std::int32_t>(policy.max_lag));
  put_block(out, policy.value);
  Eigen::Matrix<std::int32_t, Eigen::Dynamic, 1> wait(static_cast<Eigen::Index>(policy.wait.size()));
  for (std::size_t k = 0; k < policy.wait.size(); ++k) wait[static_cast<Eigen::Index>(k)] = policy.wait[k];
  put_block(out, wait);
  if (!out) throw Error("failed writing policy file");
}

PolicyFile read_policy(std::istream& in) {
  PolicyFile file;
  file.header = get_header(in);
  const auto& h = file.header;
  if (h.type == "vi") {
    ViPolicy p;
    p.discount = get<double>(in);
    p.tolerance = get<double>(in);
    p.residual = get<double>(in);
    p.iterations = get<std::int32_t>(in);
    p.max_lag = get<std::int32_t>(in);
    p.value = get_block<Vector>(in);
    const auto wait = get_block<Eigen::Matrix<std::int32_t, Eigen::Dynamic, 1>>(in);
    p.wait.assign(wait.data(), wait.data() + wait.size());
    file.vi = std::move(p);
  } else if (h.type == "dp" || h.type == "averaged") {
    FitgTable t;
    t.n = get<std::int32_t>(in);
    if (t.n != h.n || t.n < 1) throw ConfigError("policy file has inconsistent n");
    t.mesh = TimeMesh(h.delta, h.gamma, h.tau);
    for (int i = 1; i <= t.n; ++i) {
      t.value.push_back(get_block<DenseMatrix>(in));
      t.argmax.push_back(get_block<IndexMatrix>(in));
    }
    t.states = static_cast<std::size_t>(t.value.front().cols());
    file.table = std::move(t);
  } else {
    throw ConfigError(fmt::format("unknown policy type '{}'", h.type));
  }
  return file;
}

PolicyFile read_policy(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError(fmt::format("policy file {} not found", path.string()));
  return read_policy(in);
}

void check_compatible(const PolicyHeader& header, const Setup& setup) {
  const bool same = header.model == setup.config.name && header.n == setup.config.n &&
                    close(header.delta, setup.mesh.delta()) &&
                    header.gamma == setup.mesh.dilation() &&
                    close(header.tau, setup.mesh.horizon()) &&
                    close(header.spacing, setup.grid.spacing()) &&
                    header.axes.size() == setup.grid.dimension();
  bool axes_match = same;
  for (std::size_t a = 0; axes_match && a < header.axes.size(); ++a) {
    axes_match = close(header.axes[a].lo, setup.grid.axis(a).lo) &&
                 close(header.axes[a].hi, setup.grid.axis(a).hi);
  }
  if (!axes_match) {
    throw ConfigError(fmt::format("policy for model {} does not match the configured grid/mesh",
                                  header.model));
  }
}

std::string prior_hash(const Prior& prior) {
  std::string text;
  for (std::size_t k = 0; k < prior.size(); ++k) {
    text += fmt::format("{:.17g}:{:.17g};", prior.values[k], prior.weights[k]);
  }
  return sha256_hex(text);
}

std::string json_hash(const nlohmann::json& doc) { return sha256_hex(doc.dump()); }

namespace layout {
std::string policy_file(std::string_view type) { return fmt::format("policy_{}.bin", type); }
}  // namespace layout

nlohmann::json prior_to_json(const Prior& prior) {
  return {{"values", prior.values}, {"weights", prior.weights}};
}

Prior prior_from_json(const nlohmann::json& doc) {
  Prior p;
  try {
    p.values = doc.at("values").get<std::vector<double>>();
    p.weights = doc.at("weights").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("prior: {}", e.what()));
  }
  p.validate();
  return p;
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError(fmt::format("{} not found", path.string()));
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

}  // namespace infosched
