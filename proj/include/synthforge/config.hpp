#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "synthforge/conversation.hpp"
#include "synthforge/envs.hpp"
#include "synthforge/gateway.hpp"
#include "synthforge/graph_spec.hpp"
#include "synthforge/seed_prep.hpp"
#include "synthforge/transports.hpp"

namespace synthforge {

struct ModelEndpoint {
  std::string base_url;
  std::string model;
  // Name of the environment variable holding the credential. Credentials
  // never live in the config itself.
  std::string api_key_env;
  int timeout_s = 600;

  nlohmann::json to_json() const;
};

enum class TransportMode { kLive, kRules, kRecord, kReplay };
std::string_view to_string(TransportMode mode);
TransportMode parse_transport_mode(std::string_view name);

struct TransportConfig {
  TransportMode mode = TransportMode::kReplay;
  std::filesystem::path store;  // record/replay log
  std::filesystem::path rules;  // rules mode, or the inner endpoint of record mode
};

struct GatewayConfig {
  int max_attempts = 3;
  int initial_backoff_ms = 200;
  std::size_t max_in_flight = 8;
};

struct DedupStageConfig {
  std::filesystem::path input;
  double threshold = 0.7;
  std::string embedder = "hashing";  // hashing | http
  std::size_t dimension = 256;
  std::string embed_role = "embedder";
  DedupIndex index = DedupIndex::kExact;
  bool quality_filter = false;
  std::string quality_role = "judge";
  std::optional<PromptTemplate> quality_prompt;
};

struct GenerateStageConfig {
  std::string graph;
  int walks_per_seed = 1;
  int max_iters = 3;
  std::string answer_node = "answer";
  std::string judge_node = "judge";
  bool keep_discarded_intermediates = false;
  std::size_t workers = 4;
};

struct SampleStageConfig {
  // Either a JSONL file of prompts or, when empty, the accepted QA pairs of
  // the generate stage, each paired with `task`.
  std::filesystem::path prompts;
  nlohmann::json task = nlohmann::json::object();
  std::string env;
  RejectionOptions options;
};

struct BudgetStageConfig {
  std::filesystem::path prompts;
  std::int64_t think_budget = 30000;
  std::int64_t overlong_limit = 40960;
  MaskMode mask_mode = MaskMode::kCloseOnly;
  bool train_eos = true;
  std::string tokenizer = "whitespace";
  std::string model_role = "policy";
  Sampling sampling;
};

struct PackStageConfig {
  // Dataset files to pack; empty means the outputs of the sample and budget
  // stages of this run.
  std::vector<std::filesystem::path> inputs;
  std::size_t capacity = 16384;
  bool shuffle = true;
  std::string tokenizer = "whitespace";
};

/// Single declarative run description. Relative paths resolve against the
/// config file's directory.
struct RunConfig {
  std::uint64_t master_seed = 0;
  std::filesystem::path output_dir = "out";
  std::filesystem::path base_dir = ".";
  std::map<std::string, ModelEndpoint> models;
  TransportConfig transport;
  GatewayConfig gateway;
  nlohmann::json graphs = nlohmann::json::object();

  std::optional<DedupStageConfig> dedup;
  std::optional<GenerateStageConfig> generate;
  std::optional<SampleStageConfig> sample;
  std::optional<BudgetStageConfig> budget;
  std::optional<PackStageConfig> pack;

  /// Throws Error(kConfigInvalid) on unknown keys or bad values.
  static RunConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = ".");
  static RunConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;

  std::filesystem::path resolve(const std::filesystem::path& p) const;

  /// Loads the graph table; throws like load_graphs.
  GraphTable load_graph_table() const;

  /// Full static check: graphs build and validate, referenced stages and
  /// roles exist, the judge and answer roles differ and resolve to different
  /// models. Throws Error(kConfigInvalid), Error(kInvalidGraph) or
  /// Error(kSameModelRole).
  void validate() const;

  /// Digest of the canonical config with output_dir removed.
  std::string hash() const;
};

/// Command-line style overrides. Each entry of `endpoints` / `models` is
/// "role=value".
struct ConfigOverrides {
  std::vector<std::string> endpoints;
  std::vector<std::string> models;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> concurrency;
  std::optional<std::string> mode;
  std::optional<std::filesystem::path> store;
  std::optional<std::filesystem::path> out;
};

void apply_overrides(RunConfig& config, const ConfigOverrides& overrides);

/// Builds the transport stack for the configured mode. Live and record
/// modes read credentials from the environment.
std::shared_ptr<Transport> make_transport(const RunConfig& config);
std::map<std::string, EndpointDescriptor> resolve_endpoints(const RunConfig& config);

}  // namespace synthforge
