#include <doctest.h>

#include <set>

#include "error_code.hpp"
#include "fixtures.hpp"
#include "synthforge/synthesis.hpp"
#include "synthforge/text.hpp"

using namespace synthforge;
using nlohmann::json;
namespace f = qa_fields;

namespace {

// Judge scores come from a queue; answers are numbered by call.
struct ScriptedQa {
  explicit ScriptedQa(std::vector<double> s) : scores(std::move(s)) {}

  std::vector<double> scores;
  std::size_t judged = 0;
  std::size_t answered = 0;
  std::vector<CompletionRequest> answer_requests;

  std::shared_ptr<ScriptedTransport> transport() {
    return std::make_shared<ScriptedTransport>([this](const CompletionRequest& r) {
      CompletionResponse resp;
      if (r.model_role == "judge") {
        const double s = scores.at(std::min(judged++, scores.size() - 1));
        resp.text = "{\"score\": " + std::to_string(s) + ", \"notes\": \"be more specific\"}";
      } else {
        answer_requests.push_back(r);
        resp.text = "answer " + std::to_string(answered++);
      }
      resp.token_count = 2;
      return resp;
    });
  }
};

InstructionNodeOptions instruction_options(std::vector<std::string> types, InstructionMode mode) {
  InstructionNodeOptions o;
  o.instruction_types = std::move(types);
  o.mode = mode;
  return o;
}

Payload instruction_payload() {
  return Payload()
      .with(f::kInstruction, Value::text("Explain tides."))
      .with(f::kInstructionType, Value::identifier("explain"))
      .with(f::kInstructionMode, Value::identifier("standalone"));
}

}  // namespace

TEST_SUITE("synthesis") {
  TEST_CASE("judge loop revises until the judge passes") {
    ScriptedQa qa({0.3, 0.9});
    Gateway gw(qa.transport());
    ExecContext ctx;
    ctx.gateway = &gw;
    ctx.request_seed_base = 77;
    const auto r = run_judge_loop(instruction_payload(), make_answer_node(), make_judge_node(), 3, ctx);
    CHECK(r.accepted);
    CHECK(r.iterations == 2);
    REQUIRE(r.verdicts.size() == 2);
    CHECK_FALSE(r.verdicts[0].pass);
    CHECK(r.verdicts[1].pass);
    CHECK(r.steps.size() == 4);
    CHECK(r.final_payload.at(f::kAnswer).as_text() == "answer 1");
    CHECK(r.final_payload.at(f::kVerdict).as_record().at("pass") == true);

    REQUIRE(qa.answer_requests.size() == 2);
    const auto& revision = qa.answer_requests[1].messages;
    REQUIRE(revision.size() >= 3);
    CHECK(revision[revision.size() - 2].role == Role::kAssistant);
    CHECK(revision[revision.size() - 2].content == "answer 0");
    CHECK(revision.back().content.find("be more specific") != std::string::npos);
    CHECK(qa.answer_requests[0].sampling.seed != qa.answer_requests[1].sampling.seed);
  }

  TEST_CASE("judge loop discards after max_iters failures") {
    for (int max_iters : {1, 2, 3, 5}) {
      ScriptedQa qa({0.1});
      Gateway gw(qa.transport());
      ExecContext ctx;
      ctx.gateway = &gw;
      const auto r = run_judge_loop(instruction_payload(), make_answer_node(), make_judge_node(), max_iters, ctx);
      CHECK_FALSE(r.accepted);
      CHECK(r.iterations == max_iters);
      CHECK(r.steps.size() == static_cast<std::size_t>(2 * max_iters));
      for (const auto& v : r.verdicts) CHECK_FALSE(v.pass);
      CHECK(gw.transport_calls() == static_cast<std::size_t>(2 * max_iters));
    }
  }

  TEST_CASE("an answerer cannot judge itself") {
    ScriptedQa qa({0.9});
    auto t = qa.transport();
    Gateway gw(t);
    ExecContext ctx;
    ctx.gateway = &gw;
    JudgeNodeOptions same;
    same.model_role = "answerer";
    CHECK(code_of([&] { run_judge_loop(instruction_payload(), make_answer_node(), make_judge_node(same), 3, ctx); }) ==
          ErrorCode::kSameModelRole);
    CHECK(t->calls() == 0);
    CHECK(code_of([&] { run_judge_loop(instruction_payload(), make_answer_node(), make_judge_node(), 0, ctx); }) ==
          ErrorCode::kInvalidArgument);
  }

  TEST_CASE("a prior attempt counts as the first iteration") {
    ScriptedQa qa({0.2, 0.95});
    Gateway gw(qa.transport());
    ExecContext ctx;
    ctx.gateway = &gw;
    const auto answer = make_answer_node();
    const auto judge = make_judge_node();
    NodeOutcome a = apply_node_traced(instruction_payload(), answer, ctx);
    NodeOutcome j = apply_node_traced(a.payload, judge, ctx);
    LoopAttempt first{{{answer.id, answer.behavior, a.payload, a.calls, {}}, {judge.id, judge.behavior, j.payload, j.calls, {}}}};
    const auto r = run_judge_loop(instruction_payload(), answer, judge, 2, ctx, first);
    CHECK(r.accepted);
    CHECK(r.iterations == 2);
    CHECK(r.steps.size() == 2);
    CHECK(gw.transport_calls() == 4);
    CHECK(code_of([&] { run_judge_loop(instruction_payload(), answer, judge, 2, ctx, LoopAttempt{}); }) ==
          ErrorCode::kInvalidArgument);
  }

  TEST_CASE("verdict parsing normalizes and rejects out-of-range scores") {
    CHECK(parse_judge_verdict("{\"score\": 0.8, \"notes\": \"ok\"}", 0.7).pass);
    CHECK(parse_judge_verdict("```json\n{\"score\": 7, \"rubric_notes\": \"x\"}\n```", 0.7, 10).score == doctest::Approx(0.7));
    CHECK(parse_judge_verdict("Score: 6", 0.7, 10).pass == false);
    CHECK(code_of([] { parse_judge_verdict("{\"score\": 1.5}", 0.7); }) == ErrorCode::kMalformedResponse);
    CHECK(code_of([] { parse_judge_verdict("great", 0.7); }) == ErrorCode::kMalformedResponse);
    const auto v = parse_judge_verdict("{\"score\": 0.5, \"notes\": \"n\"}", 0.7);
    const auto back = JudgeVerdict::from_json(v.to_json());
    CHECK(back.score == v.score);
    CHECK(back.notes == "n");
  }

  TEST_CASE("transform node copies on identity and rejects blank passages") {
    TransformNodeOptions o;
    o.target_types = {"identity"};
    const auto node = make_transform_node(o);
    auto t = std::make_shared<ScriptedTransport>([](const CompletionRequest&) { return CompletionResponse{"x", FinishReason::kStop, 1}; });
    Gateway gw(t);
    Rng rng(1);
    ExecContext ctx;
    ctx.gateway = &gw;
    ctx.rng = &rng;
    const auto out = transform_passage(fixtures::passage_payload("The moon."), node, ctx);
    CHECK(out.at(f::kTransformed).as_text() == "The moon.");
    CHECK(out.at(f::kTargetType).as_identifier() == "identity");
    CHECK(t->calls() == 0);
    CHECK(code_of([&] { transform_passage(fixtures::passage_payload("  "), node, ctx); }) == ErrorCode::kPreconditionViolation);
    CHECK(code_of([] { make_transform_node({}); }) == ErrorCode::kConfigInvalid);
  }

  TEST_CASE("contextual instructions embed the document and standalone ones must not copy it") {
    const std::string doc = "alpha beta gamma delta epsilon zeta eta theta iota kappa lambda mu nu xi omicron";
    auto copying = std::make_shared<ScriptedTransport>([&](const CompletionRequest&) {
      return CompletionResponse{"Discuss: " + doc, FinishReason::kStop, 5};
    });
    Gateway gw(copying);
    Rng rng(2);
    ExecContext ctx;
    ctx.gateway = &gw;
    ctx.rng = &rng;
    const Payload in = Payload().with(f::kTransformed, Value::text(doc));
    const auto contextual = make_instruction_node(instruction_options({"explain"}, InstructionMode::kContextual));
    const auto out = generate_instruction(in, contextual, ctx);
    CHECK(out.at(f::kInstruction).as_text().find(doc) != std::string::npos);
    CHECK(InstructionSpec::from_payload(out).mode == InstructionMode::kContextual);

    const auto standalone = make_instruction_node(instruction_options({"question"}, InstructionMode::kStandalone));
    CHECK(standalone.id == "instruction_standalone");
    CHECK(code_of([&] { generate_instruction(in, standalone, ctx); }) == ErrorCode::kStandaloneLeak);

    Gateway fresh(std::make_shared<ScriptedTransport>([](const CompletionRequest&) {
      return CompletionResponse{"What would a world without tides look like?", FinishReason::kStop, 8};
    }));
    ctx.gateway = &fresh;
    const auto ok = generate_instruction(in, standalone, ctx);
    const auto spec = InstructionSpec::from_payload(ok);
    CHECK(spec.mode == InstructionMode::kStandalone);
    CHECK(spec.instruction_type == "question");
    CHECK(code_of([] { InstructionSpec::from_payload(Payload()); }) == ErrorCode::kPreconditionViolation);
  }

  TEST_CASE("library nodes chain into a valid graph") {
    const auto g = fixtures::qa_graph();
    CHECK(g->source().id == "transform_passage");
    CHECK(g->target().id == "judge");
    std::set<std::pair<std::string, std::string>> edges;
    for (const auto& e : g->edges()) edges.emplace(e.from, e.to);
    CHECK(edges.count({"transform_passage", "instruction_contextual"}));
    CHECK(edges.count({"transform_passage", "instruction_standalone"}));
    CHECK(edges.count({"instruction_contextual", "answer"}));
    CHECK(edges.count({"answer", "judge"}));
  }

  TEST_CASE("provenance yields one conversation per call plus the final pair") {
    const auto g = fixtures::qa_graph(0.0);
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      Gateway gw(fixtures::digest_transport());
      const auto trace = random_walk(*g, fixtures::passage_payload("Tides follow the moon. Water rises twice a day."),
                                     seed, &gw);
      const auto calls = trace.all_calls();
      auto convs = collect_provenance(trace, {"s" + std::to_string(seed)});
      REQUIRE(convs.size() == calls.size() + 1);
      for (std::size_t i = 0; i < calls.size(); ++i) {
        CHECK(convs[i].source_node == calls[i].node_id);
        CHECK(convs[i].messages.back().role == Role::kAssistant);
        CHECK(convs[i].messages.back().content == calls[i].response.text);
        CHECK(convs[i].provenance == trace.final_payload().provenance());
        convs[i].validate();
      }
      const auto& qa = convs.back();
      CHECK(qa.meta["kind"] == "final");
      CHECK(qa.source_node == "answer");
      CHECK(qa.messages[0].content == trace.final_payload().at(f::kInstruction).as_text());
      CHECK(qa.messages[1].content == trace.final_payload().at(f::kAnswer).as_text());
      CHECK(qa.id == "s" + std::to_string(seed) + "/final");

      ProvenanceOptions discarded{"d", false};
      CHECK(collect_provenance(trace, discarded).empty());
      discarded.keep_discarded_intermediates = true;
      const auto kept = collect_provenance(trace, discarded);
      CHECK(kept.size() == calls.size());
      for (const auto& c : kept) CHECK(c.meta["discarded"] == true);
    }
  }

  TEST_CASE("taxonomy expansion") {
    int malformed = 1;
    auto t = std::make_shared<ScriptedTransport>([&](const CompletionRequest& r) {
      const std::string& u = r.messages.back().content;
      CompletionResponse resp;
      resp.token_count = 3;
      if (u.find("Split \"cooking\"") != std::string::npos) {
        resp.text = malformed-- > 0 ? "baking, grilling" : "[\"baking\", \"grilling\", \"Baking2\"]";
      } else if (u.find("Split \"baking\"") != std::string::npos) {
        resp.text = "[\"bread\", \"cakes\"]";
      } else if (u.find("Split") != std::string::npos) {
        resp.text = "INDIVISIBLE";
      } else {
        resp.text = "[\"how do I start?\", \"what can go wrong?\"]";
      }
      return resp;
    });
    Gateway gw(t);
    TaxonomyOptions o;
    o.max_depth = 2;
    o.branching = 3;
    o.prompts_per_leaf = 2;
    const auto tree = expand_taxonomy("cooking", o, gw);
    CHECK(tree.children.size() == 3);
    CHECK(tree.children[0].children.size() == 2);
    CHECK(tree.children[0].children[0].depth == 2);
    CHECK(tree.children[1].children.empty());
    CHECK(tree.leaf_count() == 4);
    CHECK(tree.prompt_count() == 8);
    CHECK(tree.all_prompts().size() == 8);
    const auto back = TaxonomyNode::from_json(tree.to_json());
    CHECK(back.to_json() == tree.to_json());

    Gateway broken(std::make_shared<ScriptedTransport>([](const CompletionRequest&) {
      return CompletionResponse{"no idea", FinishReason::kStop, 2};
    }));
    CHECK(code_of([&] { expand_taxonomy("cooking", o, broken); }) == ErrorCode::kMalformedResponse);
    o.branching = 0;
    CHECK(code_of([&] { expand_taxonomy("cooking", o, gw); }) == ErrorCode::kPreconditionViolation);
  }

  TEST_CASE("persona tasks fill every parameter slot") {
    const auto catalog = PersonaCatalog::defaults();
    Rng rng(4);
    const auto p = catalog.draw(rng);
    CHECK_FALSE(p.tone.empty());
    CHECK(p.token_limit > 0);
    CHECK(PersonaParameters::from_json(p.to_json()).to_json() == p.to_json());
    const auto slots = default_persona_prompt().slots();
    for (const auto* name : {"persona", "task_type_focus", "difficulty", "technical_challenges", "project_nature",
                             "tone", "typo_directive", "token_limit"}) {
      CHECK(std::find(slots.begin(), slots.end(), name) != slots.end());
    }
    std::string seen;
    Gateway gw(std::make_shared<ScriptedTransport>([&](const CompletionRequest& r) {
      seen = r.messages.back().content;
      return CompletionResponse{"  Please build a CLI.  ", FinishReason::kStop, 4};
    }));
    const auto task = synthesize_persona_task("a retired ship engineer", p, gw);
    CHECK(task.task == "Please build a CLI.");
    CHECK(seen.find("a retired ship engineer") != std::string::npos);
    CHECK(seen.find(p.difficulty) != std::string::npos);
    auto missing = p;
    missing.tone.clear();
    CHECK(code_of([&] { synthesize_persona_task("x", missing, gw); }) == ErrorCode::kMissingSlot);
  }
}
