#include <doctest.h>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "synthforge/errors.hpp"
#include "synthforge/graph.hpp"
#include "synthforge/graph_spec.hpp"

using namespace synthforge;
using K = FieldKind;

namespace {

std::vector<std::pair<std::string, std::string>> as_pairs(const std::vector<Edge>& edges) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& e : edges) out.emplace_back(e.from, e.to);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<NodeSpec> chain(int n) {
  std::vector<NodeSpec> nodes;
  for (int i = 0; i < n; ++i) {
    const std::string in = i == 0 ? "passage" : "f" + std::to_string(i - 1);
    nodes.push_back(fixtures::stage("c" + std::to_string(i), {{in, K::kText}}, {{"f" + std::to_string(i), K::kText}}));
  }
  return nodes;
}

// Source, two parallel branches, sink.
std::vector<NodeSpec> two_branch() {
  return {fixtures::stage("src", {{"passage", K::kText}}, {{"mid", K::kText}}),
          fixtures::stage("left", {{"mid", K::kText}}, {{"side", K::kText}, {"left", K::kIdentifier}}),
          fixtures::stage("right", {{"mid", K::kText}}, {{"side", K::kText}, {"right", K::kIdentifier}}),
          fixtures::stage("sink", {{"side", K::kText}}, {{"done", K::kText}})};
}

}  // namespace

TEST_SUITE("graph") {
  TEST_CASE("edge from post to matching pre") {
    std::vector<NodeSpec> nodes{
        fixtures::stage("A", {{"passage", K::kText}}, {{"transformed_passage", K::kText}}),
        fixtures::stage("B", {{"transformed_passage", K::kText}}, {{"x", K::kText}})};
    const auto edges = infer_edges(nodes);
    REQUIRE(edges.size() == 1);
    CHECK(edges[0].from == "A");
    CHECK(edges[0].to == "B");
  }

  TEST_CASE("vacuous preconditions accept every other node") {
    std::vector<NodeSpec> nodes{fixtures::stage("A", {{"p", K::kText}}, {}),
                                fixtures::stage("B", {{"q", K::kText}}, {}), fixtures::stage("free", {}, {})};
    const auto edges = as_pairs(infer_edges(nodes));
    CHECK(edges == std::vector<std::pair<std::string, std::string>>{{"A", "free"}, {"B", "free"}});
  }

  TEST_CASE("duplicate ids are rejected") {
    std::vector<NodeSpec> nodes{fixtures::stage("A", {}, {}), fixtures::stage("A", {}, {})};
    CHECK_THROWS_AS(infer_edges(nodes), Error);
    try {
      infer_edges(nodes);
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kDuplicateNodeId);
    }
  }

  TEST_CASE("inferred edges equal ordered-pair enumeration on random sets") {
    Rng rng(11);
    for (int trial = 0; trial < 60; ++trial) {
      const auto nodes = fixtures::random_nodes(rng, 2 + uniform_index(rng, 20));
      const Graph g = Graph::build(nodes);
      CHECK(as_pairs(g.edges()) == oracle::brute_force_edges(nodes));
    }
  }

  TEST_CASE("branching QA fixture validates with the oracle's edge count") {
    const auto nodes = fixtures::branching_qa_nodes();
    const Graph g = Graph::build(nodes);
    CHECK(g.valid());
    CHECK(g.source().id == "transform");
    CHECK(g.target().id == "judge");
    const auto expected = oracle::brute_force_edges(nodes);
    CHECK(as_pairs(g.edges()) == expected);
    // transform->2 instructions, instr_a->{answer_a, answer_any},
    // instr_b->{answer_b, answer_any}, 3 answers->judge.
    CHECK(expected.size() == 9);
  }

  TEST_CASE("shape defects are reported, not thrown") {
    const Graph chain3 = Graph::build(chain(3));
    CHECK(chain3.valid());

    std::vector<NodeSpec> two_sources{fixtures::stage("a", {{"x", K::kText}}, {{"z", K::kText}}),
                                      fixtures::stage("b", {{"y", K::kText}}, {{"z", K::kText}}),
                                      fixtures::stage("c", {{"z", K::kText}}, {})};
    const Graph g2 = Graph::build(two_sources);
    CHECK(g2.report().has(DefectKind::kMultipleSources));
    CHECK_THROWS_AS(g2.require_valid(), Error);

    std::vector<NodeSpec> two_targets{fixtures::stage("a", {{"x", K::kText}}, {{"y", K::kText}}),
                                      fixtures::stage("b", {{"y", K::kText}}, {{"q", K::kText}}),
                                      fixtures::stage("c", {{"y", K::kText}}, {{"r", K::kText}})};
    CHECK(Graph::build(two_targets).report().has(DefectKind::kMultipleTargets));

    std::vector<NodeSpec> cyclic{fixtures::stage("s", {{"x", K::kText}}, {{"p", K::kText}}),
                                 fixtures::stage("a", {{"p", K::kText}}, {{"q", K::kText}}),
                                 fixtures::stage("b", {{"q", K::kText}}, {{"p", K::kText}, {"out", K::kReal}}),
                                 fixtures::stage("t", {{"out", K::kReal}}, {})};
    CHECK(Graph::build(cyclic).report().has(DefectKind::kCycle));
    CHECK_FALSE(Graph::build(cyclic).report().describe().empty());
  }

  TEST_CASE("single-path graph walks the same path for any seed") {
    auto g = Graph::build(chain(4));
    for (std::uint64_t seed : {1ULL, 2ULL, 99ULL}) {
      const auto trace = random_walk(g, fixtures::passage_payload("p"), seed, nullptr);
      CHECK(trace.path() == std::vector<std::string>{"c0", "c1", "c2", "c3"});
    }
  }

  TEST_CASE("walks are reproducible and consecutive steps are edges") {
    const Graph g = Graph::build(fixtures::branching_qa_nodes());
    std::set<std::pair<std::string, std::string>> edges;
    for (const auto& e : g.edges()) edges.insert({e.from, e.to});
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      const auto a = random_walk(g, fixtures::passage_payload("p"), seed, nullptr);
      const auto b = random_walk(g, fixtures::passage_payload("p"), seed, nullptr);
      CHECK(a.to_json() == b.to_json());
      const auto path = a.path();
      CHECK(path.front() == "transform");
      CHECK(path.back() == "judge");
      for (std::size_t i = 1; i < path.size(); ++i) CHECK(edges.count({path[i - 1], path[i]}) == 1);
      CHECK(WalkTrace::from_json(a.to_json()).to_json() == a.to_json());
    }
  }

  TEST_CASE("branch choice is uniform") {
    const Graph g = Graph::build(two_branch());
    int left = 0;
    const int n = 4000;
    for (int i = 0; i < n; ++i) {
      const auto t = random_walk(g, fixtures::passage_payload("p"), derive_seed(3, i), nullptr);
      left += t.path()[1] == "left" ? 1 : 0;
    }
    CHECK(left / double(n) == doctest::Approx(0.5).epsilon(0.05));
  }

  TEST_CASE("dead end surfaces the partial trace") {
    auto nodes = std::vector<NodeSpec>{
        fixtures::stage("src", {{"passage", K::kText}}, {{"mid", K::kText}}),
        fixtures::stage("gate", {{"mid", K::kText}}, {{"side", K::kText}}),
        fixtures::stage("sink", {{"side", K::kText}}, {{"done", K::kText}})};
    // The source overwrites the passage with a number, so the sink's
    // precondition fails at run time although the edge exists statically.
    nodes[2].pre = {{"side", K::kText}, {"passage", K::kText}};
    nodes[0].transform = [](const Payload&) {
      return std::map<std::string, Value>{{"mid", Value::text("m")}, {"passage", Value::integer(1)}};
    };
    const Graph g = Graph::build(nodes);
    REQUIRE(g.valid());
    try {
      random_walk(g, fixtures::passage_payload("p"), 1, nullptr);
      FAIL("expected a dead end");
    } catch (const DeadEndError& e) {
      CHECK(e.code() == ErrorCode::kDeadEnd);
      CHECK(e.partial().path() == std::vector<std::string>{"src", "gate"});
    }
  }

  TEST_CASE("composition keeps the endpoints' interface") {
    auto inner = std::make_shared<const Graph>(Graph::build(chain(3)));
    const NodeSpec c = compose_graph(inner, "chain");
    CHECK(c.pre == inner->source().pre);
    CHECK(c.post == inner->target().post);
    std::vector<NodeSpec> outer_a{c, fixtures::stage("after", {{"f2", K::kText}}, {})};
    std::vector<NodeSpec> outer_b{fixtures::stage("chain", inner->source().pre, inner->target().post),
                                  fixtures::stage("after", {{"f2", K::kText}}, {})};
    CHECK(as_pairs(infer_edges(outer_a)) == as_pairs(infer_edges(outer_b)));

    std::vector<NodeSpec> bad{fixtures::stage("a", {{"x", K::kText}}, {{"y", K::kText}}),
                              fixtures::stage("b", {{"y", K::kText}}, {{"q", K::kText}}),
                              fixtures::stage("c", {{"y", K::kText}}, {{"r", K::kText}})};
    CHECK_THROWS_AS(compose_graph(std::make_shared<const Graph>(Graph::build(bad)), "bad"), Error);
  }

  TEST_CASE("nested walks flatten to walks of the expanded graph") {
    const auto pair = fixtures::nested_fixture(3);
    REQUIRE(pair.nested->valid());
    REQUIRE(pair.expanded->valid());
    auto transport = fixtures::digest_transport();
    Gateway gw(transport);
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      const auto nested = random_walk(*pair.nested, fixtures::passage_payload("x"), seed, &gw);
      const auto flat = random_walk(*pair.expanded, fixtures::passage_payload("x"), seed, &gw);
      std::vector<std::string> stripped;
      for (const auto& id : nested.flattened_path()) stripped.push_back(id.substr(id.rfind('/') + 1));
      CHECK(stripped == flat.path());
      CHECK(nested.final_payload().canonical() == flat.final_payload().canonical());
    }
  }

  TEST_CASE("graph spec loader builds, composes and refuses authored edges") {
    const nlohmann::json spec = nlohmann::json::parse(R"({
      "inner": {"nodes": [
        {"id": "up", "pre": {"passage": "text"}, "post": {"loud": "text"},
         "transform": {"op": "copy", "from": "passage", "to": "loud"}},
        {"id": "low", "pre": {"loud": "text"}, "post": {"quiet": "text"},
         "transform": {"op": "lowercase", "field": "loud", "to": "quiet"}}
      ]},
      "outer": {"nodes": [
        {"id": "wrap", "behavior": "composed-graph", "graph": "inner"},
        {"id": "join", "pre": {"quiet": "text"}, "post": {"both": "text"},
         "transform": {"op": "concat", "fields": ["passage", "quiet"], "to": "both", "separator": "|"}}
      ]}
    })");
    const auto table = load_graphs(spec, ".");
    REQUIRE(table.count("outer"));
    const auto t = random_walk(*table.at("outer"), fixtures::passage_payload("HeLLo"), 1, nullptr);
    CHECK(t.final_payload().at("both").as_text() == "HeLLo|hello");

    auto with_edges = spec;
    with_edges["inner"]["edges"] = nlohmann::json::array({{"up", "low"}});
    CHECK_THROWS_AS(load_graphs(with_edges, "."), Error);

    const nlohmann::json loop = nlohmann::json::parse(R"({
      "a": {"nodes": [{"id": "x", "behavior": "composed-graph", "graph": "b"}]},
      "b": {"nodes": [{"id": "y", "behavior": "composed-graph", "graph": "a"}]}
    })");
    CHECK_THROWS_AS(load_graphs(loop, "."), Error);

    const nlohmann::json lib = nlohmann::json::parse(R"({
      "qa": {"nodes": [
        {"use": "transform", "target_types": ["summary", "identity"]},
        {"use": "instruction", "id": "ctx", "mode": "contextual", "instruction_types": ["question"]},
        {"use": "instruction", "id": "solo", "mode": "standalone", "instruction_types": ["task"]},
        {"use": "answer"},
        {"use": "judge"}
      ]}
    })");
    const auto qa = load_graphs(lib, ".");
    const Graph& g = *qa.at("qa");
    CHECK(g.valid());
    CHECK(g.source().id == "transform_passage");
    CHECK(g.target().id == "judge");
  }
}
