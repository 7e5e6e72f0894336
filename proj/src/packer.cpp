#include "synthforge/packer.hpp"

#include <algorithm>
#include <numeric>

#include "synthforge/errors.hpp"

namespace synthforge {

bool PackedBin::well_formed() const {
  std::int64_t cursor = 0;
  for (const auto& item : items) {
    if (item.offset != cursor || item.length < 0) return false;
    cursor += item.length;
  }
  return padding >= 0 && cursor + padding == capacity;
}

namespace {

// Max segment tree over the remaining capacity of bins, with room for up to
// `n` bins. Unopened bins hold the full capacity, so "first bin with room"
// is the leftmost leaf whose value is at least the item length.
class RemainingTree {
 public:
  RemainingTree(std::size_t n, std::int64_t capacity) {
    size_ = 1;
    while (size_ < n) size_ <<= 1;
    tree_.assign(2 * size_, capacity);
  }

  std::size_t first_fit(std::int64_t length) const {
    std::size_t node = 1;
    while (node < size_) {
      node = tree_[2 * node] >= length ? 2 * node : 2 * node + 1;
    }
    return node - size_;
  }

  void consume(std::size_t leaf, std::int64_t length) {
    std::size_t node = leaf + size_;
    tree_[node] -= length;
    for (node >>= 1; node >= 1; node >>= 1) {
      tree_[node] = std::max(tree_[2 * node], tree_[2 * node + 1]);
    }
  }

 private:
  std::size_t size_ = 1;
  std::vector<std::int64_t> tree_;
};

}  // namespace

std::vector<PackedBin> pack_ffd(std::span<const std::int64_t> lengths,
                                std::span<const std::string> sample_ids, std::int64_t capacity) {
  if (capacity <= 0) throw Error(ErrorCode::kInvalidArgument, "capacity must be positive");
  if (!sample_ids.empty() && sample_ids.size() != lengths.size()) {
    throw Error(ErrorCode::kInvalidArgument, "sample ids and lengths differ in size");
  }
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    if (lengths[i] < 0) throw Error(ErrorCode::kInvalidArgument, "negative sample length");
    if (lengths[i] > capacity) {
      throw Error(ErrorCode::kOversizedSample,
                  "sample " + std::to_string(i) + " has length " + std::to_string(lengths[i]) +
                      " > capacity " + std::to_string(capacity));
    }
  }
  std::vector<std::size_t> order(lengths.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return lengths[a] > lengths[b]; });

  std::vector<PackedBin> bins;
  RemainingTree tree(std::max<std::size_t>(lengths.size(), 1), capacity);
  for (const auto idx : order) {
    const std::int64_t len = lengths[idx];
    const std::size_t b = tree.first_fit(len);
    if (b == bins.size()) bins.push_back(PackedBin{capacity, {}, capacity});
    PackedBin& bin = bins[b];
    bin.items.push_back({sample_ids.empty() ? std::to_string(idx) : sample_ids[idx], len,
                         bin.used(), idx});
    bin.padding -= len;
    tree.consume(b, len);
  }
  return bins;
}

std::vector<PackedBin> pack_ffd(std::span<const std::int64_t> lengths, std::int64_t capacity) {
  return pack_ffd(lengths, {}, capacity);
}

BoundaryDescriptor boundary_descriptor(const PackedBin& bin) {
  BoundaryDescriptor d;
  d.capacity = bin.capacity;
  for (const auto& item : bin.items) d.ranges.emplace_back(item.offset, item.offset + item.length);
  return d;
}

long BoundaryDescriptor::range_of(std::int64_t i) const {
  auto it = std::upper_bound(ranges.begin(), ranges.end(), i,
                             [](std::int64_t v, const auto& r) { return v < r.first; });
  if (it == ranges.begin()) return -1;
  --it;
  if (i >= it->second) return -1;
  return static_cast<long>(it - ranges.begin());
}

bool BoundaryDescriptor::eligible(std::int64_t i, std::int64_t j) const {
  const long a = range_of(i);
  return a >= 0 && a == range_of(j);
}

double packing_efficiency(std::span<const PackedBin> bins) {
  if (bins.empty()) throw Error(ErrorCode::kInvalidArgument, "no bins");
  long double used = 0;
  long double total = 0;
  for (const auto& b : bins) {
    used += static_cast<long double>(b.used());
    total += static_cast<long double>(b.capacity);
  }
  return static_cast<double>(used / total);
}

void shuffle_bins(std::vector<PackedBin>& bins, std::uint64_t seed) {
  Rng rng(seed);
  shuffle_in_place(bins, rng);
}

nlohmann::json to_json(const PackedBin& bin) {
  nlohmann::json items = nlohmann::json::array();
  nlohmann::json ranges = nlohmann::json::array();
  for (const auto& it : bin.items) {
    items.push_back({{"sample_id", it.sample_id},
                     {"length", it.length},
                     {"offset", it.offset},
                     {"source_index", it.source_index}});
    ranges.push_back({it.offset, it.offset + it.length});
  }
  return {{"capacity", bin.capacity}, {"padding", bin.padding}, {"items", items},
          {"boundaries", ranges}};
}

PackedBin packed_bin_from_json(const nlohmann::json& j) {
  PackedBin b;
  b.capacity = j.at("capacity").get<std::int64_t>();
  b.padding = j.at("padding").get<std::int64_t>();
  for (const auto& it : j.at("items")) {
    b.items.push_back({it.at("sample_id").get<std::string>(), it.at("length").get<std::int64_t>(),
                       it.at("offset").get<std::int64_t>(),
                       it.value("source_index", std::size_t{0})});
  }
  if (!b.well_formed()) throw Error(ErrorCode::kInvalidArgument, "packed bin lengths, offsets and padding disagree");
  return b;
}

}  // namespace synthforge
