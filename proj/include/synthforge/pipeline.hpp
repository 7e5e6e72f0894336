#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "synthforge/config.hpp"

namespace synthforge {

enum class Stage { kDedup, kGenerate, kSample, kBudget, kPack };

std::string_view to_string(Stage stage);
/// Accepts a stage name or "all". Throws Error(kConfigInvalid).
std::vector<Stage> parse_stages(std::string_view name);

/// Output file names inside output_dir.
namespace outputs {
inline constexpr const char* kSeeds = "seeds_dedup.jsonl";
inline constexpr const char* kDuplicates = "duplicates.json";
inline constexpr const char* kQa = "qa.jsonl";
inline constexpr const char* kSampled = "sampled.jsonl";
inline constexpr const char* kBudget = "budget.jsonl";
inline constexpr const char* kPacked = "packed.jsonl";
inline constexpr const char* kManifest = "manifest.json";
inline constexpr const char* kTiming = "manifest.timing.json";
}  // namespace outputs

struct RunManifest {
  std::uint64_t master_seed = 0;
  std::string config_hash;
  std::map<std::string, nlohmann::json> endpoints;  // role -> {base_url, model}
  std::vector<std::string> stages;
  std::map<std::string, std::int64_t> counts;
  std::map<std::string, double> metrics;
  std::map<std::string, std::string> digests;  // output file -> sha256
  // Wall-clock seconds per stage. Persisted apart from the manifest so the
  // manifest stays byte-stable across runs.
  std::map<std::string, double> timing;

  nlohmann::json to_json() const;
};

/// Runs the selected stages in pipeline order, each reading its
/// predecessor's files from output_dir, and writes the manifest. Halts on
/// the first error that is not a per-walk discard.
RunManifest run_pipeline(const RunConfig& config, const std::vector<Stage>& stages);

}  // namespace synthforge
