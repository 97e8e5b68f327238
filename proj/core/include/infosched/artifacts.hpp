#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "infosched/catalog.hpp"
#include "infosched/policy.hpp"
#include "infosched/vi.hpp"

namespace infosched {

/// Identifies what a policy file was computed for.
struct PolicyHeader {
  std::string type;       ///< "dp", "averaged" or "vi"
  std::string model;
  std::string reference;  ///< "theta=<value>" or "prior=<sha256>"
  int n = 0;
  double delta = 0.0;
  int gamma = 0;
  double tau = 0.0;
  double spacing = 0.0;
  std::vector<AxisRange> axes;
};

PolicyHeader make_header(std::string type, const Setup& setup, std::string reference);

/// Binary policy file: magic "ISCHPOL1", the header, then either the per-i
/// value/argmax surfaces (dp, averaged) or v̂ and Δ̂ (vi). Little-endian
/// host layout.
void write_policy(std::ostream& out, const PolicyHeader& header, const FitgTable& table);
void write_policy(std::ostream& out, const PolicyHeader& header, const ViPolicy& policy);

struct PolicyFile {
  PolicyHeader header;
  std::optional<FitgTable> table;
  std::optional<ViPolicy> vi;
};

PolicyFile read_policy(std::istream& in);
PolicyFile read_policy(const std::filesystem::path& path);

/// Checks that a loaded policy matches the grid and mesh of a setup.
void check_compatible(const PolicyHeader& header, const Setup& setup);

/// File names inside a precompute output directory.
namespace layout {
inline constexpr const char* kConfig = "config.json";
inline constexpr const char* kManifest = "manifest.json";
inline constexpr const char* kPrior = "prior.json";
inline constexpr const char* kProfile = "profile.csv";
inline constexpr const char* kKernel = "kernel.txt";
/// "policy_<type>.bin"
std::string policy_file(std::string_view type);
}  // namespace layout

/// {"values": [...], "weights": [...]}
nlohmann::json prior_to_json(const Prior& prior);
Prior prior_from_json(const nlohmann::json& doc);

/// Reads and parses a JSON file; NotFoundError if missing, ConfigError if malformed.
nlohmann::json read_json_file(const std::filesystem::path& path);

/// SHA-256 of the prior's candidates and weights at full precision.
std::string prior_hash(const Prior& prior);

/// SHA-256 of the canonical (key-sorted, compact) JSON text.
std::string json_hash(const nlohmann::json& doc);

}  // namespace infosched
