#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "synthforge/rng.hpp"

namespace synthforge {

inline constexpr std::int64_t kDefaultPackCapacity = 16384;

struct PackedItem {
  std::string sample_id;
  std::int64_t length = 0;
  std::int64_t offset = 0;
  std::size_t source_index = 0;
  friend bool operator==(const PackedItem&, const PackedItem&) = default;
};

struct PackedBin {
  std::int64_t capacity = 0;
  std::vector<PackedItem> items;
  std::int64_t padding = 0;

  std::int64_t used() const { return capacity - padding; }
  /// Lengths + padding = capacity, offsets contiguous from zero.
  bool well_formed() const;
  friend bool operator==(const PackedBin&, const PackedBin&) = default;
};

/// Half-open token ranges, one per item, in bin order.
struct BoundaryDescriptor {
  std::vector<std::pair<std::int64_t, std::int64_t>> ranges;
  std::int64_t capacity = 0;

  /// Tokens i and j may attend to each other iff they share a range.
  /// Padding tokens are eligible with nothing, themselves included.
  bool eligible(std::int64_t i, std::int64_t j) const;
  /// Range index of token i, -1 for padding.
  long range_of(std::int64_t i) const;
};

/// First-Fit Decreasing. Items are sorted by length descending with ties in
/// input order; each goes into the lowest-indexed bin with room. Sample ids
/// default to the decimal input index. Throws Error(kOversizedSample) for a
/// length above capacity and Error(kInvalidArgument) for a non-positive
/// capacity or negative length.
std::vector<PackedBin> pack_ffd(std::span<const std::int64_t> lengths,
                                std::int64_t capacity = kDefaultPackCapacity);
std::vector<PackedBin> pack_ffd(std::span<const std::int64_t> lengths,
                                std::span<const std::string> sample_ids,
                                std::int64_t capacity = kDefaultPackCapacity);

BoundaryDescriptor boundary_descriptor(const PackedBin& bin);

/// Item tokens over capacity tokens. Throws Error(kInvalidArgument) on an
/// empty input.
double packing_efficiency(std::span<const PackedBin> bins);

/// Seeded reordering of bins before batching.
void shuffle_bins(std::vector<PackedBin>& bins, std::uint64_t seed);

nlohmann::json to_json(const PackedBin& bin);
PackedBin packed_bin_from_json(const nlohmann::json& j);

}  // namespace synthforge
