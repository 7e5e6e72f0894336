#pragma once

#include <algorithm>
#include <filesystem>
#include <random>
#include <memory>
#include <string>
#include <vector>

#include "synthforge/conversation.hpp"
#include "synthforge/dataflow.hpp"
#include "synthforge/gateway.hpp"
#include "synthforge/graph.hpp"
#include "synthforge/hashing.hpp"
#include "synthforge/length_budget.hpp"
#include "synthforge/rng.hpp"
#include "synthforge/seed_prep.hpp"
#include "synthforge/synthesis.hpp"
#include "synthforge/transports.hpp"

namespace fixtures {

using namespace synthforge;

inline std::filesystem::path dir() { return SYNTHFORGE_FIXTURES; }

inline std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("synthforge-test-" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

// A pure transform that only declares fields; the transform writes a text
// value "<id>" into every post field of text kind and an identifier into
// identifier fields.
inline NodeSpec stage(std::string id, Condition pre, Condition post) {
  NodeSpec n;
  n.id = id;
  n.pre = std::move(pre);
  n.post = post;
  n.behavior = Behavior::kPureTransform;
  n.transform = [id, post](const Payload&) {
    std::map<std::string, Value> out;
    for (const auto& [name, kind] : post.fields()) {
      switch (kind) {
        case FieldKind::kIdentifier: out[name] = Value::identifier(id); break;
        case FieldKind::kInteger: out[name] = Value::integer(1); break;
        case FieldKind::kReal: out[name] = Value::real(1.0); break;
        case FieldKind::kTextList: out[name] = Value::text_list({id}); break;
        case FieldKind::kRecord: out[name] = Value::record({{"by", id}}); break;
        case FieldKind::kText: out[name] = Value::text(id); break;
      }
    }
    return out;
  };
  return n;
}

// One transform stage, two instruction generators and three answer
// generators with sparse compatibility, then a judge.
inline std::vector<NodeSpec> branching_qa_nodes() {
  using K = FieldKind;
  return {
      stage("transform", {{"passage", K::kText}}, {{"transformed_passage", K::kText}}),
      stage("instr_a", {{"transformed_passage", K::kText}}, {{"instruction", K::kText}, {"style_a", K::kIdentifier}}),
      stage("instr_b", {{"transformed_passage", K::kText}}, {{"instruction", K::kText}, {"style_b", K::kIdentifier}}),
      stage("answer_a", {{"instruction", K::kText}, {"style_a", K::kIdentifier}}, {{"answer", K::kText}}),
      stage("answer_b", {{"instruction", K::kText}, {"style_b", K::kIdentifier}}, {{"answer", K::kText}}),
      stage("answer_any", {{"instruction", K::kText}}, {{"answer", K::kText}}),
      stage("judge", {{"answer", K::kText}}, {{"verdict", K::kRecord}}),
  };
}

// Random node set over a small field vocabulary so edges are neither
// empty nor complete.
inline std::vector<NodeSpec> random_nodes(Rng& rng, std::size_t n) {
  static const std::vector<std::string> names{"a", "b", "c", "d", "e", "f", "g"};
  static const std::vector<FieldKind> kinds{FieldKind::kText, FieldKind::kIdentifier};
  std::vector<NodeSpec> out;
  for (std::size_t i = 0; i < n; ++i) {
    Condition pre, post;
    for (const auto& name : names) {
      const auto r = uniform_index(rng, 8);
      if (r == 0) pre.add(name, kinds[uniform_index(rng, 2)]);
      if (r == 1 || r == 2) post.add(name, kinds[uniform_index(rng, 2)]);
    }
    out.push_back(stage("n" + std::to_string(i), pre, post));
  }
  return out;
}

// LLM generator writing one text field from the first precondition.
inline NodeSpec llm_stage(std::string id, std::string in, std::string out) {
  NodeSpec n;
  n.id = id;
  n.behavior = Behavior::kLlmGenerator;
  n.pre = {{in, FieldKind::kText}};
  n.post = {{out, FieldKind::kText}};
  n.model_role = "generator";
  n.prompt = PromptTemplate{"", id + " reads {{" + in + "}}"};
  return n;
}

// Level k reads `in` and writes `out`: s_k -> (inner | alt_k) -> t_k. The
// inner branch is level k+1 composed as a node, or a plain generator at the
// deepest level. `expanded` receives the same nodes with every composed
// node spliced in place.
inline std::vector<NodeSpec> nested_level(int k, int depth, const std::string& in, const std::string& out,
                                          std::vector<NodeSpec>& expanded) {
  const std::string K = std::to_string(k);
  const std::string mid = "m" + K, done = "n" + K;
  std::vector<NodeSpec> nodes{llm_stage("s" + K, in, mid), llm_stage("alt" + K, mid, done),
                              llm_stage("t" + K, done, out)};
  for (const auto& n : nodes) expanded.push_back(n);
  if (k == depth) {
    nodes.push_back(llm_stage("deep" + K, mid, done));
    expanded.push_back(nodes.back());
  } else {
    auto inner = nested_level(k + 1, depth, mid, done, expanded);
    nodes.push_back(compose_graph(std::make_shared<const Graph>(Graph::build(std::move(inner))), "c" + K));
  }
  return nodes;
}

struct NestedPair {
  std::shared_ptr<const Graph> nested;
  std::shared_ptr<const Graph> expanded;
};

inline NestedPair nested_fixture(int depth) {
  std::vector<NodeSpec> expanded;
  auto nested = nested_level(1, depth, "passage", "final", expanded);
  return {std::make_shared<const Graph>(Graph::build(std::move(nested))),
          std::make_shared<const Graph>(Graph::build(std::move(expanded)))};
}

inline Payload passage_payload(const std::string& text) {
  return Payload().with("passage", Value::text(text));
}

// Deterministic offline model: every reply is a function of the request
// digest, so record/replay and repeated runs agree.
inline CompletionResponse digest_reply(const CompletionRequest& r) {
  CompletionResponse resp;
  const std::string key = r.canonical_key().substr(0, 12);
  if (r.model_role == "judge") {
    const int score = static_cast<int>(std::stoul(key.substr(0, 2), nullptr, 16) % 10);
    resp.text = "{\"score\": " + std::to_string(score / 10.0) + ", \"notes\": \"n" + key + "\"}";
  } else {
    resp.text = "reply " + key;
  }
  resp.token_count = 2;
  return resp;
}

inline std::shared_ptr<Transport> digest_transport() {
  return std::make_shared<ScriptedTransport>(digest_reply);
}

// Passages drawn from a 400-word vocabulary; roughly a third are light
// edits (one word swapped or dropped) of an earlier passage, so the corpus
// holds real near-duplicates next to unrelated text.
inline std::vector<SeedPassage> near_duplicate_corpus(Rng& rng, std::size_t n) {
  std::vector<std::vector<std::string>> bodies;
  std::vector<SeedPassage> out;
  auto word = [&] { return "w" + std::to_string(uniform_index(rng, 400)); };
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::string> words;
    if (!bodies.empty() && uniform_index(rng, 3) == 0) {
      words = bodies[uniform_index(rng, bodies.size())];
      const auto at = uniform_index(rng, words.size());
      if (uniform_index(rng, 2) == 0 && words.size() > 4) {
        words.erase(words.begin() + static_cast<std::ptrdiff_t>(at));
      } else {
        words[at] = word();
      }
    } else {
      const auto len = 12 + uniform_index(rng, 20);
      for (std::size_t k = 0; k < len; ++k) words.push_back(word());
    }
    std::string text;
    for (const auto& w : words) text += (text.empty() ? "" : " ") + w;
    bodies.push_back(words);
    out.push_back({"p" + std::to_string(i), text, i % 2 ? "forum" : "news",
                   static_cast<double>(uniform_index(rng, 50))});
  }
  return out;
}

// Offline policy for rejection sampling. The request seed picks one of six
// behaviours so every filter stage sees traffic: two well-formed boxed
// answers, a missing closing tag, an unboxed answer, an overlong trace
// (about 60 tokens) and a fixed reply that collides with itself.
inline CompletionResponse stub_policy_reply(const CompletionRequest& r) {
  const std::uint64_t seed = r.sampling.seed.value_or(0);
  const auto mode = mix64(seed) % 6;
  const std::string tag = std::to_string(seed % 1000);
  std::string text;
  switch (mode) {
    case 0:
    case 1: text = "<think>\nwork " + tag + "\n</think>\n\nSo \\boxed{" + std::to_string(seed % 7) + "}"; break;
    case 2: text = "<think>\nwork " + tag + " and then \\boxed{3}"; break;
    case 3: text = "<think>\nwork " + tag + "\n</think>\n\nThe answer is 3."; break;
    case 4: {
      text = "<think>\n";
      for (int i = 0; i < 60; ++i) text += "step ";
      text += "\n</think>\n\\boxed{" + tag + "}";
      break;
    }
    default: text = "<think>\nsame\n</think>\n\\boxed{0}"; break;
  }
  CompletionResponse resp;
  resp.text = text;
  resp.token_count = static_cast<std::int64_t>(WhitespaceTokenizer().count(text));
  return resp;
}

// A policy generation with `words` reasoning tokens. Closed traces end in a
// short answer; open ones stop mid-thought as a length-capped reply would.
inline Generation reasoning_trace(Rng& rng, std::size_t words, bool closed) {
  static const std::vector<std::string> vocab{"so", "then", "x=2", "check", "wait", "hmm,", "ok.", "\u00e9t\u00e9", "\n\n"};
  std::string text = "<think>\n";
  for (std::size_t i = 0; i < words; ++i) {
    const auto& w = vocab[uniform_index(rng, vocab.size())];
    text += w == "\n\n" ? "step\n\n" : w + " ";
  }
  if (closed) {
    text += "\n</think>\n\nThe answer is 4.";
    return {text, FinishReason::kStop};
  }
  return {text, FinishReason::kLength};
}

// Continuation endpoint: writes a short answer, never another closing tag.
inline std::shared_ptr<ScriptedTransport> answer_transport() {
  return std::make_shared<ScriptedTransport>([](const CompletionRequest& r) {
    CompletionResponse resp;
    resp.text = r.continue_final_message ? "\n\nThe answer is 4." : "<think>\nfresh\n</think>\nfresh answer";
    resp.token_count = 4;
    return resp;
  });
}

// Log-normal sample lengths (median near 1100 tokens, long right tail),
// clamped to [1, capacity].
inline std::vector<std::int64_t> heavy_tailed_lengths(Rng& rng, std::size_t n, std::int64_t capacity) {
  std::lognormal_distribution<double> dist(7.0, 1.0);
  std::vector<std::int64_t> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto v = static_cast<std::int64_t>(dist(rng));
    out.push_back(std::clamp<std::int64_t>(v, 1, capacity));
  }
  return out;
}

// The QA library graph: passage transform, both instruction modes, answer
// and judge.
inline std::shared_ptr<const Graph> qa_graph(double threshold = 0.7) {
  TransformNodeOptions t;
  t.target_types = {"identity", "faq", "dialogue"};
  InstructionNodeOptions ctx;
  ctx.instruction_types = {"summarize", "explain"};
  ctx.mode = InstructionMode::kContextual;
  InstructionNodeOptions alone;
  alone.instruction_types = {"brainstorm", "question"};
  alone.mode = InstructionMode::kStandalone;
  JudgeNodeOptions j;
  j.threshold = threshold;
  return std::make_shared<const Graph>(Graph::build(
      {make_transform_node(t), make_instruction_node(ctx), make_instruction_node(alone), make_answer_node(),
       make_judge_node(j)}));
}

}  // namespace fixtures
