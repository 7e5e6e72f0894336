#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "synthforge/dataflow.hpp"
#include "synthforge/errors.hpp"
#include "synthforge/trace.hpp"

namespace synthforge {

struct Edge {
  std::string from;
  std::string to;

  friend auto operator<=>(const Edge&, const Edge&) = default;
};

struct EdgeInferenceOptions {
  // Fields every walk is known to carry in addition to a node's own
  // postconditions (the source's preconditions once a source is known).
  Condition guaranteed_prefix;
  // Data flow begins here, so no edge ever enters it.
  std::optional<std::string> source;
};

/// (A, B) for A != B iff A.post together with the guaranteed prefix
/// satisfies B.pre. Edges come out sorted by (from, to) declaration index.
/// Throws Error(kDuplicateNodeId).
std::vector<Edge> infer_edges(std::span<const NodeSpec> nodes,
                              const EdgeInferenceOptions& options = {});

enum class DefectKind {
  kNoSource,
  kMultipleSources,
  kNoTarget,
  kMultipleTargets,
  kCycle,
  kTargetUnreachable,
};

std::string_view to_string(DefectKind kind);

struct Defect {
  DefectKind kind;
  std::vector<std::string> node_ids;
};

struct ValidationReport {
  std::vector<Defect> defects;
  bool valid() const { return defects.empty(); }
  bool has(DefectKind kind) const;
  std::string describe() const;
};

/// Immutable node set with inferred edges. Edges are never authored.
class Graph {
 public:
  /// Infers edges with an empty prefix first. Each node left without an
  /// in-edge is then tried as the source, its preconditions becoming the
  /// guaranteed prefix. A candidate that leaves no other node unentered
  /// resolves; a unique acyclic resolution wins, else a unique resolution.
  /// Never throws for shape defects; see report().
  static Graph build(std::vector<NodeSpec> nodes);

  const std::vector<NodeSpec>& nodes() const { return nodes_; }
  const std::vector<Edge>& edges() const { return edges_; }
  const ValidationReport& report() const { return report_; }
  bool valid() const { return report_.valid(); }

  const NodeSpec& node(const std::string& id) const;
  std::size_t index_of(const std::string& id) const;
  /// Heads of out-edges of `id` in declaration order.
  const std::vector<std::size_t>& successors(std::size_t index) const {
    return successors_[index];
  }
  const std::vector<std::size_t>& predecessors(std::size_t index) const {
    return predecessors_[index];
  }

  /// Only meaningful when valid().
  const NodeSpec& source() const { return nodes_.at(source_); }
  const NodeSpec& target() const { return nodes_.at(target_); }
  std::size_t source_index() const { return source_; }
  std::size_t target_index() const { return target_; }

  /// Throws Error(kInvalidGraph) listing the defects.
  void require_valid() const;

 private:
  std::vector<NodeSpec> nodes_;
  std::map<std::string, std::size_t> index_;
  std::vector<Edge> edges_;
  std::vector<std::vector<std::size_t>> successors_;
  std::vector<std::vector<std::size_t>> predecessors_;
  std::size_t source_ = 0;
  std::size_t target_ = 0;
  ValidationReport report_;
};

/// Validation over an explicit edge set; Graph::build uses this.
ValidationReport validate_graph(std::span<const NodeSpec> nodes,
                                std::span<const Edge> edges);
ValidationReport validate_graph(const Graph& graph);

/// Raised when a walk stops short of the target; carries the partial trace.
class DeadEndError : public Error {
 public:
  DeadEndError(const std::string& message, WalkTrace partial)
      : Error(ErrorCode::kDeadEnd, message), partial_(std::move(partial)) {}
  const WalkTrace& partial() const { return partial_; }

 private:
  WalkTrace partial_;
};

/// Walks from source to target, choosing uniformly among out-edges whose
/// head accepts the current payload. A single eligible successor consumes no
/// randomness.
WalkTrace random_walk(const Graph& graph, const Payload& seed,
                      ExecContext& ctx);

/// Convenience: seeds a fresh generator and derives request seeds from
/// `seed`.
WalkTrace random_walk(const Graph& graph, const Payload& seed_payload,
                      std::uint64_t seed, Gateway* gateway);

/// Wraps a valid graph as a node: pre = source.pre, post = target.post.
/// Throws Error(kInvalidGraph).
NodeSpec compose_graph(std::shared_ptr<const Graph> graph, std::string id);

}  // namespace synthforge
