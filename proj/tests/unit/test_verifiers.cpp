#include <doctest.h>

#include <algorithm>

#include "error_code.hpp"
#include "synthforge/rng.hpp"
#include "synthforge/verifiers.hpp"

using namespace synthforge;
using nlohmann::json;

namespace {

const WhitespaceTokenizer tok;

Trajectory traj(std::string generation) { return Trajectory::make({{Role::kUser, "q"}}, std::move(generation), tok); }

std::string think(const std::string& answer) { return "<think>\nsome reasoning\n</think>\n\n" + answer; }

// RFC 4180 writer: quote a field only when it needs it.
std::string write_csv(const std::vector<std::vector<std::string>>& rows) {
  std::string out;
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out += ',';
      const auto& f = row[i];
      if (f.find_first_of(",\"\r\n") == std::string::npos) {
        out += f;
      } else {
        out += '"';
        for (char c : f) out += c == '"' ? std::string("\"\"") : std::string(1, c);
        out += '"';
      }
    }
    out += "\r\n";
  }
  return out;
}

// Reference multiset equality: sort the canonical dumps and compare.
bool same_multiset(std::vector<json> a, std::vector<json> b) {
  auto dumps = [](std::vector<json>& v) {
    std::vector<std::string> out;
    for (auto& j : v) out.push_back(canonical_tool_call(j).dump());
    std::sort(out.begin(), out.end());
    return out;
  };
  return dumps(a) == dumps(b);
}

}  // namespace

TEST_SUITE("verifiers") {
  TEST_CASE("reasoning split is strict") {
    CHECK(split_reasoning(think("A")).ok);
    CHECK(split_reasoning("  \n<think>x</think>A").ok);
    CHECK(split_reasoning(think("A")).answer == "A");
    CHECK_FALSE(split_reasoning("pre <think>x</think>A").ok);
    CHECK_FALSE(split_reasoning("<think>x").ok);
    CHECK_FALSE(split_reasoning("<think>x</think>   ").ok);
    CHECK_FALSE(split_reasoning("<think>x</think>A</think>B").ok);
    CHECK_FALSE(split_reasoning("<think><think>x</think>A").ok);
    CHECK(answer_segment("<think>x</think> tail ") == "tail");
    CHECK(answer_segment(" plain ") == "plain");
    const auto t = traj(think("A"));
    REQUIRE(t.think_span.has_value());
    CHECK(t.think_span->first == 0);
  }

  TEST_CASE("every builtin format accepts its example and rejects a near miss") {
    const std::vector<std::pair<std::string, std::pair<std::string, std::string>>> cases{
        {"boxed", {"The value is \\boxed{42}.", "The value is 42."}},
        {"csv", {"name,age\nann,3\nbo,\"4,5\"", "name,age\nann"}},
        {"tsv", {"name\tage\nann\t3", "name,age\nann,3"}},
        {"answer-tags", {"<answer>7</answer>", "<answer>7"}},
        {"json-object", {"{\"a\": 1}", "[1]"}},
        {"json-array", {"[1, 2]", "{\"a\": 1}"}},
        {"key-value", {"a: 1\nb: 2", "a 1\nb 2"}},
        {"markdown-table", {"| a | b |\n|---|---|\n| 1 | 2 |", "a | b\n1 | 2"}},
        {"bullet-list", {"- one\n- two", "one\ntwo"}},
        {"numbered-list", {"1. one\n2. two", "1. one\n3. two"}},
        {"xml", {"<r><v>1</v></r>", "<r><v>1</r>"}},
        {"code-block", {"```\nx = 1\n```", "x = 1"}},
        {"final-answer-line", {"work\nFinal Answer: 9", "Final Answer: 9\nmore"}},
        {"all-caps", {"HELLO THERE", "Hello there"}},
        {"all-lowercase", {"hello there", "Hello there"}},
        {"double-quoted", {"\"hi\"", "hi"}},
        {"single-line", {"one line", "two\nlines"}},
        {"titled", {"<<Title>>\nbody", "Title\nbody"}},
        {"choice-letter", {"B", "B because"}},
        {"latex-inline", {"$x^2$", "x^2"}},
        {"semicolon-list", {"a; b; c", "a\nb\nc"}},
        {"html-paragraphs", {"<p>one</p>\n\n<p>two</p>", "<p>one</p>\n\ntwo"}},
        {"double-bracketed", {"[[x]]", "[x]"}},
        {"sections", {"SECTION 1\na\nSECTION 2\nb", "SECTION 1\na\nSECTION 3\nb"}},
    };
    const auto& reg = FormatRegistry::builtin();
    CHECK(reg.size() == cases.size());
    for (const auto& [id, examples] : cases) {
      CAPTURE(id);
      REQUIRE(reg.contains(id));
      CHECK(verify_answer_format(traj(think(examples.first)), id).reward == 1.0);
      CHECK(verify_answer_format(traj(think(examples.second)), id).reward == 0.0);
      // The same answer without reasoning is rejected by the split.
      CHECK(verify_answer_format(traj(examples.first), id).reward == 0.0);
      CHECK_FALSE(reg.get(id).instruction.empty());
    }
    CHECK(code_of([&] { reg.get("haiku"); }) == ErrorCode::kUnknownFormat);
    CHECK(code_of([] { FormatRegistry r; r.add({"x", "", {}}); r.add({"x", "", {}}); }) == ErrorCode::kConfigInvalid);
  }

  TEST_CASE("format draws are uniform over the registry") {
    const auto& reg = FormatRegistry::builtin();
    Rng rng(11);
    std::map<std::string, int> hits;
    const int n = 24000;
    for (int i = 0; i < n; ++i) ++hits[reg.draw(rng).id];
    CHECK(hits.size() == reg.size());
    for (const auto& [id, c] : hits) CHECK(std::abs(c - 1000) < 150);
  }

  TEST_CASE("csv parser inverts an independent writer") {
    Rng rng(4);
    const std::string alphabet = "ab ,\"\n\r;x";
    for (int trial = 0; trial < 300; ++trial) {
      const auto cols = 1 + uniform_index(rng, 4);
      std::vector<std::vector<std::string>> rows(1 + uniform_index(rng, 5));
      for (auto& row : rows) {
        for (std::size_t c = 0; c < cols; ++c) {
          std::string f;
          const auto len = uniform_index(rng, 6);
          for (std::size_t k = 0; k < len; ++k) f += alphabet[uniform_index(rng, alphabet.size())];
          row.push_back(f);
        }
      }
      // A lone empty field would print as an empty line; keep rows visible.
      if (cols == 1) {
        for (auto& row : rows) row[0] += "z";
      }
      const auto parsed = parse_csv(write_csv(rows));
      REQUIRE(parsed.has_value());
      CHECK(*parsed == rows);
    }
    CHECK_FALSE(parse_csv("a,\"b").has_value());
    CHECK_FALSE(parse_csv("a,b\"c").has_value());
    CHECK_FALSE(parse_csv("\"a\"b,c").has_value());
    CHECK(parse_csv("a;b\n", ';')->at(0).size() == 2);
  }

  TEST_CASE("constraint words and sentences") {
    CHECK(constraint_words("Hello, World! l'eau") == std::vector<std::string>{"hello", "world", "l'eau"});
    CHECK(count_sentences("One. Two! Three?") == 3);
    CHECK(count_sentences("Pi is 3.14 roughly. Yes...") == 2);
    CHECK(count_sentences("") == 0);
    CHECK(is_french_word("maison"));
    CHECK(is_french_word("école"));
    CHECK_FALSE(is_french_word("house"));
  }

  TEST_CASE("every nth word french matches a position oracle") {
    const std::vector<std::string> fr{"maison", "chat", "pomme", "soleil", "merci"};
    const std::vector<std::string> en{"house", "cat", "apple", "sun", "thanks"};
    Rng rng(9);
    for (int trial = 0; trial < 200; ++trial) {
      const int n = 1 + static_cast<int>(uniform_index(rng, 4));
      const std::size_t len = static_cast<std::size_t>(n) + uniform_index(rng, 20);
      std::vector<std::string> words;
      bool expect = true;
      for (std::size_t pos = 1; pos <= len; ++pos) {
        const bool need = pos % static_cast<std::size_t>(n) == 0;
        const bool french = need ? uniform_index(rng, 12) != 0 : uniform_index(rng, 2) == 0;
        if (need && !french) expect = false;
        words.push_back(french ? fr[uniform_index(rng, fr.size())] : en[uniform_index(rng, en.size())]);
      }
      std::string s;
      for (const auto& w : words) s += (s.empty() ? "" : " ") + w;
      s += ".";
      CAPTURE(s);
      CAPTURE(n);
      const auto r = verify_constraint(traj(s), {"every-nth-word-french", {{"n", n}}});
      CHECK(r.passed() == expect);
    }
    CHECK(verify_constraint(traj("maison"), {"every-nth-word-french", {{"n", 2}}}).reward == 0.0);
  }

  TEST_CASE("builtin constraints") {
    struct Case {
      std::string id;
      json params;
      std::string good, bad;
    };
    const std::vector<Case> cases{
        {"exact-sentences", {{"n", 2}}, "One. Two.", "One."},
        {"min-words", {{"n", 3}}, "a b c", "a b"},
        {"max-words", {{"n", 2}}, "a b", "a b c"},
        {"exact-paragraphs", {{"n", 2}}, "a\n\nb", "a\nb"},
        {"include-keywords", {{"keywords", {"Rust", "go"}}}, "rust and GO", "rust only"},
        {"forbid-words", {{"words", {"very"}}}, "quite good", "Very good"},
        {"start-with", {{"phrase", "Dear"}}, "dear sir", "Hello"},
        {"end-with", {{"phrase", "Cheers."}}, "ok Cheers.", "Cheers. ok"},
        {"lowercase", json::object(), "all low", "Not low"},
        {"uppercase", json::object(), "ALL UP", "Not UP"},
        {"no-commas", json::object(), "a b", "a, b"},
        {"exact-bullets", {{"n", 2}}, "* a\n* b", "* a"},
        {"keyword-frequency", {{"keyword", "tea"}, {"n", 2}, {"relation", "exactly"}}, "tea, tea.", "tea"},
        {"keyword-frequency", {{"keyword", "tea"}, {"n", 2}, {"relation", "less-than"}}, "tea", "tea tea"},
        {"wrap-quotes", json::object(), "\"x\"", "x"},
        {"min-placeholders", {{"n", 2}}, "[a] and [b]", "[a]"},
        {"title", json::object(), "<<T>>\nx", "T\nx"},
        {"postscript", json::object(), "body\nP.S. hi", "body"},
        {"json-format", json::object(), "{\"a\":1}", "{a:1}"},
    };
    for (const auto& c : cases) {
      CAPTURE(c.id);
      const ConstraintInstruction ci{c.id, c.params};
      CHECK(verify_constraint(traj(c.good), ci).reward == 1.0);
      CHECK(verify_constraint(traj(think(c.good)), ci).reward == 1.0);
      CHECK(verify_constraint(traj(c.bad), ci).reward == 0.0);
      CHECK_FALSE(ConstraintRegistry::builtin().get(c.id).describe(c.params).empty());
      CHECK(ConstraintInstruction::from_json(ci.to_json()).params == c.params);
    }
    CHECK(code_of([] { verify_constraint(traj("x"), {"rhyme", json::object()}); }) ==
          ErrorCode::kUnsupportedConstraint);
  }

  TEST_CASE("tool calls compare structurally as a multiset") {
    const json weather = {{"name", "weather"}, {"arguments", {{"city", "Oslo"}, {"unit", "c"}}}};
    const json time = {{"name", "time"}, {"arguments", {{"tz", "UTC"}}}};
    const std::vector<json> refs{weather, time};
    const std::string both =
        "<tool_call>{\"name\": \"time\", \"arguments\": \"{\\\"tz\\\": \\\"UTC\\\"}\"}</tool_call>\n"
        "<tool_call>{\"arguments\": {\"unit\": \"c\", \"city\": \"Oslo\"}, \"name\": \"weather\"}</tool_call>";
    CHECK(verify_tool_call(traj(both), refs).reward == 1.0);
    CHECK(verify_tool_call(traj(think(both)), refs).reward == 1.0);

    const std::string wrong = "<tool_call>{\"name\": \"weather\", \"arguments\": {\"city\": \"Bergen\", \"unit\": \"c\"}}</tool_call>"
                              "<tool_call>{\"name\": \"time\", \"arguments\": {\"tz\": \"UTC\"}}</tool_call>";
    const auto r = verify_tool_call(traj(wrong), refs);
    CHECK(r.reward == 0.0);
    CHECK(r.detail.find("/arguments/city") != std::string::npos);
    CHECK(verify_tool_call(traj("<tool_call>{\"name\": \"time\"</tool_call>"), refs).reward == 0.0);
    CHECK(verify_tool_call(traj("<tool_call>{}"), refs).reward == 0.0);

    const json wrapped = {{"type", "function"},
                          {"function", {{"name", "time"}, {"arguments", "{\"tz\":\"UTC\"}"}}}};
    CHECK(canonical_tool_call(wrapped) == time);
  }

  TEST_CASE("tool call verdicts agree with a sorted-dump oracle") {
    Rng rng(21);
    const std::vector<std::string> names{"a", "b", "c"};
    auto random_call = [&] {
      json args = json::object();
      for (int k = 0; k < 2; ++k) args["k" + std::to_string(uniform_index(rng, 3))] = static_cast<int>(uniform_index(rng, 3));
      return json{{"name", names[uniform_index(rng, names.size())]}, {"arguments", args}};
    };
    int agree = 0;
    for (int trial = 0; trial < 500; ++trial) {
      std::vector<json> refs, emitted;
      const auto n = 1 + uniform_index(rng, 3);
      for (std::size_t i = 0; i < n; ++i) refs.push_back(random_call());
      emitted = refs;
      shuffle_in_place(emitted, rng);
      if (uniform_index(rng, 2) == 0) emitted[uniform_index(rng, emitted.size())] = random_call();
      if (uniform_index(rng, 5) == 0) emitted.push_back(random_call());
      std::string gen;
      for (const auto& e : emitted) gen += "<tool_call>" + e.dump() + "</tool_call>\n";
      const bool got = verify_tool_call(traj(gen), refs).passed();
      agree += got == same_multiset(emitted, refs);
    }
    CHECK(agree == 500);
  }
}
