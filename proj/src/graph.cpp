#include "synthforge/graph.hpp"

#include <algorithm>
#include <deque>
#include <set>
#include <sstream>

namespace synthforge {

namespace {

// Providers of a (name, kind) pair, as a bitmap over node indices.
using Bitmap = std::vector<bool>;

void require_unique_ids(std::span<const NodeSpec> nodes) {
  std::set<std::string> seen;
  for (const auto& n : nodes) {
    if (!seen.insert(n.id).second) {
      throw Error(ErrorCode::kDuplicateNodeId, "node id '" + n.id + "' appears twice");
    }
  }
}

}  // namespace

std::vector<Edge> infer_edges(std::span<const NodeSpec> nodes,
                              const EdgeInferenceOptions& options) {
  require_unique_ids(nodes);
  const std::size_t n = nodes.size();

  // Inverted index: which nodes guarantee each field. Prefix fields are
  // guaranteed by everyone unless a node's own post overrides the kind.
  std::map<std::pair<std::string, FieldKind>, Bitmap> providers;
  auto slot = [&](const std::string& name, FieldKind kind) -> Bitmap& {
    auto [it, inserted] = providers.try_emplace({name, kind});
    if (inserted) it->second.assign(n, false);
    return it->second;
  };
  for (std::size_t a = 0; a < n; ++a) {
    const auto& post = nodes[a].post.fields();
    for (const auto& [name, kind] : options.guaranteed_prefix.fields()) {
      auto own = post.find(name);
      if (own == post.end() || own->second == kind) slot(name, kind)[a] = true;
    }
    for (const auto& [name, kind] : post) slot(name, kind)[a] = true;
  }

  std::vector<Edge> edges;
  std::vector<std::vector<std::size_t>> incoming(n);
  for (std::size_t b = 0; b < n; ++b) {
    if (options.source && nodes[b].id == *options.source) continue;
    Bitmap eligible(n, true);
    for (const auto& [name, kind] : nodes[b].pre.fields()) {
      auto it = providers.find({name, kind});
      if (it == providers.end()) {
        eligible.assign(n, false);
        break;
      }
      for (std::size_t a = 0; a < n; ++a) eligible[a] = eligible[a] && it->second[a];
    }
    for (std::size_t a = 0; a < n; ++a) {
      if (a != b && eligible[a]) incoming[b].push_back(a);
    }
  }
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t b = 0; b < n; ++b) {
    for (auto a : incoming[b]) pairs.emplace_back(a, b);
  }
  std::sort(pairs.begin(), pairs.end());
  edges.reserve(pairs.size());
  for (const auto& [a, b] : pairs) edges.push_back({nodes[a].id, nodes[b].id});
  return edges;
}

std::string_view to_string(DefectKind kind) {
  switch (kind) {
    case DefectKind::kNoSource: return "no-source";
    case DefectKind::kMultipleSources: return "multiple-sources";
    case DefectKind::kNoTarget: return "no-target";
    case DefectKind::kMultipleTargets: return "multiple-targets";
    case DefectKind::kCycle: return "cycle";
    case DefectKind::kTargetUnreachable: return "target-unreachable";
  }
  return "unknown";
}

bool ValidationReport::has(DefectKind kind) const {
  return std::any_of(defects.begin(), defects.end(),
                     [&](const Defect& d) { return d.kind == kind; });
}

std::string ValidationReport::describe() const {
  if (defects.empty()) return "valid";
  std::ostringstream out;
  for (std::size_t i = 0; i < defects.size(); ++i) {
    if (i) out << "; ";
    out << to_string(defects[i].kind);
    if (!defects[i].node_ids.empty()) {
      out << " [";
      for (std::size_t k = 0; k < defects[i].node_ids.size(); ++k) {
        out << (k ? ", " : "") << defects[i].node_ids[k];
      }
      out << "]";
    }
  }
  return out.str();
}

ValidationReport validate_graph(std::span<const NodeSpec> nodes, std::span<const Edge> edges) {
  ValidationReport report;
  const std::size_t n = nodes.size();
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < n; ++i) index[nodes[i].id] = i;
  std::vector<std::vector<std::size_t>> out(n);
  std::vector<std::size_t> indegree(n, 0);
  for (const auto& e : edges) {
    const auto a = index.at(e.from);
    const auto b = index.at(e.to);
    out[a].push_back(b);
    ++indegree[b];
  }

  std::vector<std::string> sources;
  std::vector<std::string> targets;
  std::size_t source = 0;
  std::size_t target = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (indegree[i] == 0) {
      sources.push_back(nodes[i].id);
      source = i;
    }
    if (out[i].empty()) {
      targets.push_back(nodes[i].id);
      target = i;
    }
  }
  if (sources.empty()) report.defects.push_back({DefectKind::kNoSource, {}});
  if (sources.size() > 1) report.defects.push_back({DefectKind::kMultipleSources, sources});
  if (targets.empty()) report.defects.push_back({DefectKind::kNoTarget, {}});
  if (targets.size() > 1) report.defects.push_back({DefectKind::kMultipleTargets, targets});

  // Kahn; whatever never drains sits on or behind a cycle.
  std::vector<std::size_t> remaining = indegree;
  std::deque<std::size_t> ready;
  for (std::size_t i = 0; i < n; ++i) {
    if (remaining[i] == 0) ready.push_back(i);
  }
  std::size_t drained = 0;
  while (!ready.empty()) {
    const auto v = ready.front();
    ready.pop_front();
    ++drained;
    for (auto w : out[v]) {
      if (--remaining[w] == 0) ready.push_back(w);
    }
  }
  if (drained != n) {
    std::vector<std::string> stuck;
    for (std::size_t i = 0; i < n; ++i) {
      if (remaining[i] > 0) stuck.push_back(nodes[i].id);
    }
    report.defects.push_back({DefectKind::kCycle, stuck});
  }

  if (sources.size() == 1 && targets.size() == 1) {
    std::vector<bool> seen(n, false);
    std::deque<std::size_t> frontier{source};
    seen[source] = true;
    while (!frontier.empty()) {
      const auto v = frontier.front();
      frontier.pop_front();
      for (auto w : out[v]) {
        if (!seen[w]) {
          seen[w] = true;
          frontier.push_back(w);
        }
      }
    }
    if (!seen[target]) {
      report.defects.push_back({DefectKind::kTargetUnreachable, {nodes[source].id, nodes[target].id}});
    }
  }
  return report;
}

ValidationReport validate_graph(const Graph& graph) {
  return validate_graph(graph.nodes(), graph.edges());
}

Graph Graph::build(std::vector<NodeSpec> nodes) {
  Graph g;
  g.edges_ = infer_edges(nodes);
  // A node needing a source field plus upstream output has no in-edge on the
  // first pass, so every such candidate is tried as the source. A candidate
  // resolves when its preconditions give every other node an in-edge;
  // acyclic resolutions are preferred, and a unique winner decides.
  auto unentered = [&](const std::vector<Edge>& edges) {
    std::set<std::string> entered;
    for (const auto& e : edges) entered.insert(e.to);
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      if (!entered.count(nodes[i].id)) out.push_back(i);
    }
    return out;
  };
  std::vector<std::vector<Edge>> resolving, acyclic;
  for (std::size_t s : unentered(g.edges_)) {
    if (nodes[s].pre.empty()) continue;
    EdgeInferenceOptions opts;
    opts.guaranteed_prefix = nodes[s].pre;
    opts.source = nodes[s].id;
    auto edges = infer_edges(nodes, opts);
    const auto rest = unentered(edges);
    if (rest.size() != 1 || rest[0] != s) continue;
    if (!validate_graph(nodes, edges).has(DefectKind::kCycle)) acyclic.push_back(edges);
    resolving.push_back(std::move(edges));
  }
  if (acyclic.size() == 1) {
    g.edges_ = std::move(acyclic[0]);
  } else if (resolving.size() == 1) {
    g.edges_ = std::move(resolving[0]);
  }
  g.nodes_ = std::move(nodes);
  for (std::size_t i = 0; i < g.nodes_.size(); ++i) g.index_[g.nodes_[i].id] = i;
  g.successors_.assign(g.nodes_.size(), {});
  g.predecessors_.assign(g.nodes_.size(), {});
  for (const auto& e : g.edges_) {
    const auto a = g.index_.at(e.from);
    const auto b = g.index_.at(e.to);
    g.successors_[a].push_back(b);
    g.predecessors_[b].push_back(a);
  }
  for (auto& s : g.successors_) std::sort(s.begin(), s.end());
  for (auto& p : g.predecessors_) std::sort(p.begin(), p.end());
  g.report_ = validate_graph(g.nodes_, g.edges_);
  if (g.report_.valid()) {
    for (std::size_t i = 0; i < g.nodes_.size(); ++i) {
      if (g.predecessors_[i].empty()) g.source_ = i;
      if (g.successors_[i].empty()) g.target_ = i;
    }
  }
  return g;
}

const NodeSpec& Graph::node(const std::string& id) const { return nodes_.at(index_of(id)); }

std::size_t Graph::index_of(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw Error(ErrorCode::kInvalidArgument, "no node '" + id + "'");
  return it->second;
}

void Graph::require_valid() const {
  if (!report_.valid()) throw Error(ErrorCode::kInvalidGraph, report_.describe());
}

WalkTrace random_walk(const Graph& graph, const Payload& seed, ExecContext& ctx) {
  graph.require_valid();
  WalkTrace trace;
  trace.seed = seed;
  trace.rng_seed = ctx.request_seed_base.value_or(0);
  if (!check_preconditions(seed, graph.source())) {
    throw Error(ErrorCode::kPreconditionViolation,
                "seed payload does not satisfy source '" + graph.source().id + "'");
  }

  std::size_t current = graph.source_index();
  Payload payload = seed;
  while (true) {
    const NodeSpec& node = graph.nodes()[current];
    NodeOutcome outcome = apply_node_traced(payload, node, ctx);
    payload = outcome.payload;
    trace.steps.push_back({node.id, node.behavior, std::move(outcome.payload),
                           std::move(outcome.calls), std::move(outcome.inner)});
    if (current == graph.target_index()) break;

    std::vector<std::size_t> eligible;
    for (auto next : graph.successors(current)) {
      if (check_preconditions(payload, graph.nodes()[next])) eligible.push_back(next);
    }
    if (eligible.empty()) {
      throw DeadEndError("no eligible successor after '" + node.id + "'", trace);
    }
    if (eligible.size() == 1) {
      current = eligible.front();
    } else {
      if (ctx.rng == nullptr) throw Error(ErrorCode::kConfigInvalid, "branching walk needs an rng");
      current = eligible[uniform_index(*ctx.rng, eligible.size())];
    }
  }
  return trace;
}

WalkTrace random_walk(const Graph& graph, const Payload& seed_payload, std::uint64_t seed,
                      Gateway* gateway) {
  Rng rng(seed);
  ExecContext ctx;
  ctx.gateway = gateway;
  ctx.rng = &rng;
  ctx.request_seed_base = seed;
  WalkTrace trace = random_walk(graph, seed_payload, ctx);
  trace.rng_seed = seed;
  return trace;
}

NodeOutcome run_composed(const Payload& input, const NodeSpec& node, ExecContext& ctx) {
  if (!node.subgraph) {
    throw Error(ErrorCode::kConfigInvalid, "node '" + node.id + "' has no graph");
  }
  // Revision turns are addressed to the composed node's caller, not to the
  // nodes inside it.
  ExecContext inner = ctx;
  inner.extra_messages.clear();
  WalkTrace sub = random_walk(*node.subgraph, input, inner);
  NodeOutcome outcome;
  outcome.payload = sub.final_payload();
  outcome.inner = std::move(sub.steps);
  return outcome;
}

NodeSpec compose_graph(std::shared_ptr<const Graph> graph, std::string id) {
  if (!graph) throw Error(ErrorCode::kInvalidGraph, "null graph");
  if (!graph->valid()) {
    throw Error(ErrorCode::kInvalidGraph, "cannot compose: " + graph->report().describe());
  }
  NodeSpec spec;
  spec.id = std::move(id);
  spec.pre = graph->source().pre;
  spec.post = graph->target().post;
  spec.behavior = Behavior::kComposedGraph;
  spec.subgraph = std::move(graph);
  return spec;
}

}  // namespace synthforge
