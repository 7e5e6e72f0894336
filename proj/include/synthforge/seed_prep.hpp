#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "synthforge/dataflow.hpp"
#include "synthforge/gateway.hpp"
#include "synthforge/transports.hpp"

namespace synthforge {

struct SeedPassage {
  std::string id;
  std::string text;
  std::string source_tag;
  double recency_weight = 0.0;

  nlohmann::json to_json() const;
  static SeedPassage from_json(const nlohmann::json& j);
  friend bool operator==(const SeedPassage&, const SeedPassage&) = default;
};

/// Trims and collapses whitespace runs. Passages empty after cleaning are
/// dropped; a negative recency weight throws Error(kInvalidArgument).
std::vector<SeedPassage> clean_passages(std::vector<SeedPassage> corpus);

std::vector<SeedPassage> read_seed_corpus(const std::filesystem::path& path);
void write_seed_corpus(std::span<const SeedPassage> corpus, const std::filesystem::path& path);

enum class DropReason { kIncomplete, kIllFormatted, kOther };
std::string_view to_string(DropReason reason);
DropReason parse_drop_reason(std::string_view name);

struct QualityDecision {
  bool keep = true;
  DropReason reason = DropReason::kOther;  // meaningful only when !keep
  std::string detail;
};

/// Asks `judge` (an llm-judge node whose prompt has a {{passage}} slot)
/// whether the passage is usable. Accepts a JSON object
/// {"keep": bool, "reason": "..."} or text starting with KEEP or DROP
/// followed by a reason; unrecognized reasons map to `other`.
QualityDecision quality_filter(const SeedPassage& passage, const NodeSpec& judge,
                               Gateway& gateway);

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::size_t dimension() const = 0;
  /// One vector of dimension() per text, in order.
  virtual std::vector<std::vector<double>> embed(std::span<const std::string> texts) = 0;
};

/// Deterministic bag-of-words feature hashing over lowercased tokens.
class HashingEmbedder : public Embedder {
 public:
  explicit HashingEmbedder(std::size_t dimension = 256, std::uint64_t salt = 0)
      : dimension_(dimension), salt_(salt) {}

  std::size_t dimension() const override { return dimension_; }
  std::vector<std::vector<double>> embed(std::span<const std::string> texts) override;

 private:
  std::size_t dimension_;
  std::uint64_t salt_;
};

/// OpenAI-compatible /v1/embeddings client.
class HttpEmbedder : public Embedder {
 public:
  HttpEmbedder(EndpointDescriptor endpoint, std::size_t dimension, std::size_t batch_size = 64);

  std::size_t dimension() const override { return dimension_; }
  std::vector<std::vector<double>> embed(std::span<const std::string> texts) override;

 private:
  EndpointDescriptor endpoint_;
  std::size_t dimension_;
  std::size_t batch_size_;
};

enum class DedupIndex { kExact, kLsh };

struct DedupOptions {
  double threshold = 0.7;
  DedupIndex index = DedupIndex::kExact;
  // Random-hyperplane LSH; candidates are verified with exact cosine but
  // pairs that never share a bucket are missed.
  int lsh_bits = 12;
  int lsh_tables = 8;
  std::uint64_t lsh_seed = 0;
};

struct DuplicateLink {
  std::string representative;
  double cosine = 0.0;
};

struct DedupResult {
  std::vector<SeedPassage> retained;
  std::map<std::string, DuplicateLink> duplicates;  // dropped id -> keeper

  nlohmann::json duplicates_json() const;
};

/// Greedy first-kept retention over the corpus stably sorted by recency
/// weight descending. A passage is dropped when its cosine with some
/// retained passage is >= threshold; it links to the earliest such keeper.
/// Throws Error(kInvalidArgument) on a duplicate id or an embedder vector
/// of the wrong dimension.
DedupResult semantic_dedup(std::span<const SeedPassage> corpus, Embedder& embedder,
                           const DedupOptions& options = {});

}  // namespace synthforge
