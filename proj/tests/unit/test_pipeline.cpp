#include <doctest.h>

#include <fstream>
#include <sstream>

#include "error_code.hpp"
#include "fixtures.hpp"
#include "synthforge/config.hpp"
#include "synthforge/dataset_io.hpp"
#include "synthforge/hashing.hpp"
#include "synthforge/packer.hpp"
#include "synthforge/pipeline.hpp"

using namespace synthforge;
using nlohmann::json;

namespace {

std::filesystem::path golden() { return fixtures::dir() / "golden" / "run.json"; }

json golden_json() {
  std::ifstream in(golden());
  return json::parse(in);
}

RunConfig golden_config(const std::string& out) {
  auto c = RunConfig::load(golden());
  c.output_dir = fixtures::scratch(out);
  return c;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunConfig from(const json& j) { return RunConfig::from_json(j, golden().parent_path()); }

}  // namespace

TEST_SUITE("pipeline") {
  TEST_CASE("golden config loads, validates and survives a json round-trip") {
    const auto c = RunConfig::load(golden());
    CHECK_NOTHROW(c.validate());
    CHECK(c.models.size() == 4);
    CHECK(c.transport.mode == TransportMode::kRules);
    REQUIRE(c.generate);
    CHECK(c.generate->walks_per_seed == 2);
    const auto back = RunConfig::from_json(c.to_json(), c.base_dir);
    CHECK(back.hash() == c.hash());
    CHECK(back.to_json() == c.to_json());
  }

  TEST_CASE("unknown keys are rejected at every level") {
    for (const char* ptr : {"/extra", "/dedup/extra", "/generate/extra", "/sample/extra", "/budget/extra",
                            "/pack/extra", "/gateway/extra", "/transport/extra", "/models/judge/extra"}) {
      json j = golden_json();
      j[json::json_pointer(ptr)] = 1;
      CAPTURE(ptr);
      CHECK(code_of([&] { from(j); }) == ErrorCode::kConfigInvalid);
    }
    json j = golden_json();
    j["graphs"]["qa"]["edges"] = json::array();
    CHECK(code_of([&] { from(j).validate(); }) == ErrorCode::kConfigInvalid);
  }

  TEST_CASE("missing or inconsistent sections fail validation") {
    auto expect_invalid = [](json j) { CHECK(code_of([&] { from(j).validate(); }) == ErrorCode::kConfigInvalid); };
    json j = golden_json();
    j.erase("dedup");
    expect_invalid(j);
    j = golden_json();
    j["generate"]["graph"] = "nope";
    expect_invalid(j);
    j = golden_json();
    j["transport"].erase("rules");
    expect_invalid(j);
    j = golden_json();
    j["transport"] = {{"mode", "replay"}};
    expect_invalid(j);
    j = golden_json();
    j["sample"]["env"] = "";
    expect_invalid(j);
    j = golden_json();
    j["budget"].erase("prompts");
    expect_invalid(j);
    j = golden_json();
    j["dedup"]["threshold"] = 1.5;
    expect_invalid(j);
    j = golden_json();
    j["budget"]["mask_mode"] = "everything";
    CHECK(code_of([&] { from(j); }) == ErrorCode::kConfigInvalid);

    // A graph whose target is not the judge cannot feed the judge loop.
    j = golden_json();
    j["graphs"]["qa"]["nodes"].erase(4);
    expect_invalid(j);
  }

  TEST_CASE("answer and judge must differ in role and in model") {
    json j = golden_json();
    j["graphs"]["qa"]["nodes"][4]["model_role"] = "answerer";
    CHECK(code_of([&] { from(j).validate(); }) == ErrorCode::kSameModelRole);

    auto c = RunConfig::load(golden());
    ConfigOverrides o;
    o.models = {"answerer=shared", "judge=shared"};
    apply_overrides(c, o);
    CHECK(code_of([&] { c.validate(); }) == ErrorCode::kSameModelRole);

    // Different URLs do not make one model two graders.
    j = golden_json();
    j["models"]["judge"]["model"] = j["models"]["answerer"]["model"];
    CHECK(code_of([&] { from(j).validate(); }) == ErrorCode::kSameModelRole);
  }

  TEST_CASE("overrides replace fields and the hash ignores output_dir") {
    auto c = RunConfig::load(golden());
    const auto base_hash = c.hash();
    ConfigOverrides o;
    o.out = "/tmp/elsewhere";
    apply_overrides(c, o);
    CHECK(c.hash() == base_hash);
    CHECK(c.output_dir == "/tmp/elsewhere");

    o = {};
    o.seed = 7;
    o.concurrency = 2;
    o.endpoints = {"policy=http://10.0.0.1:9000"};
    o.mode = "record";
    o.store = "log.jsonl";
    apply_overrides(c, o);
    CHECK(c.master_seed == 7);
    CHECK(c.gateway.max_in_flight == 2);
    CHECK(c.generate->workers == 2);
    CHECK(c.sample->options.workers == 2);
    CHECK(c.models.at("policy").base_url == "http://10.0.0.1:9000");
    CHECK(c.models.at("policy").model == "reasoner-32b");
    CHECK(c.transport.mode == TransportMode::kRecord);
    CHECK(c.hash() != base_hash);

    o = {};
    o.models = {"no-equals-sign"};
    CHECK(code_of([&] { apply_overrides(c, o); }) == ErrorCode::kConfigInvalid);
    o = {};
    o.mode = "carrier-pigeon";
    CHECK(code_of([&] { apply_overrides(c, o); }) == ErrorCode::kConfigInvalid);
  }

  TEST_CASE("stage names") {
    CHECK(parse_stages("all").size() == 5);
    CHECK(parse_stages("pack") == std::vector<Stage>{Stage::kPack});
    CHECK(code_of([] { parse_stages("train"); }) == ErrorCode::kConfigInvalid);
    auto c = golden_config("no-section");
    c.budget.reset();
    CHECK(code_of([&] { run_pipeline(c, {Stage::kBudget}); }) == ErrorCode::kConfigInvalid);
  }

  TEST_CASE("golden run: accounting, outputs and digests") {
    const auto c = golden_config("golden-a");
    const auto m = run_pipeline(c, parse_stages("all"));
    const std::filesystem::path out = c.output_dir;

    CHECK(m.stages == std::vector<std::string>{"dedup", "generate", "sample", "budget", "pack"});
    CHECK(m.counts.at("seeds_read") == 9);  // the blank passage is dropped
    CHECK(m.counts.at("seeds_retained") + m.counts.at("deduped") == 9);
    CHECK(m.counts.at("deduped") == 2);
    CHECK(m.counts.at("walks_attempted") == 2 * m.counts.at("seeds_retained"));
    CHECK(m.counts.at("accepted") + m.counts.at("discarded") == m.counts.at("walks_attempted"));
    CHECK(m.counts.at("accepted") > 0);
    CHECK(m.counts.at("discarded") > 0);

    for (const auto& [file, digest] : m.digests) {
      CAPTURE(file);
      CHECK(sha256_file(out / file) == digest);
    }

    // Exactly one final record per accepted walk, and every record is a
    // well-formed conversation.
    std::int64_t finals = 0;
    for (const auto& conv : read_dataset(out / outputs::kQa)) {
      CHECK_NOTHROW(conv.validate());
      if (conv.meta.value("kind", std::string{}) == "final") ++finals;
    }
    CHECK(finals == m.counts.at("accepted"));
    CHECK(m.counts.at("sample_prompts") == finals);

    const auto sampled = read_dataset(out / outputs::kSampled);
    CHECK(static_cast<std::int64_t>(sampled.size()) == m.counts.at("sample_accepted"));
    for (const auto& conv : sampled) {
      const auto& reply = conv.messages.back().content;
      CHECK(reply.find("</think>") != std::string::npos);
      CHECK(reply.substr(reply.find("</think>")).find("42") != std::string::npos);
    }

    const auto budget = read_dataset(out / outputs::kBudget);
    CHECK(budget.size() == 8);
    CHECK(m.metrics.at("budget_overlong_rate") == 0.0);

    std::int64_t packed = 0;
    for (const auto& j : read_jsonl(out / outputs::kPacked)) {
      const auto bin = packed_bin_from_json(j);
      CHECK(bin.capacity == 256);
      CHECK(bin.used() <= 256);
      packed += static_cast<std::int64_t>(bin.items.size());
    }
    CHECK(packed == m.counts.at("sample_accepted") + m.counts.at("budget_samples"));
    CHECK(packed == m.counts.at("packed_samples"));

    const auto manifest = json::parse(slurp(out / outputs::kManifest));
    CHECK(manifest == m.to_json());
    CHECK_FALSE(manifest.contains("timing"));
    CHECK(std::filesystem::exists(out / outputs::kTiming));
  }

  TEST_CASE("two runs with the same config write identical manifests and files") {
    auto a = golden_config("golden-det-a");
    auto b = golden_config("golden-det-b");
    ConfigOverrides o;
    o.concurrency = 1;
    apply_overrides(b, o);
    run_pipeline(a, parse_stages("all"));
    const auto mb = run_pipeline(b, parse_stages("all"));
    for (const auto& [file, digest] : mb.digests) {
      CAPTURE(file);
      CHECK(slurp(a.output_dir / file) == slurp(b.output_dir / file));
    }
    auto c = golden_config("golden-det-c");
    run_pipeline(c, parse_stages("all"));
    CHECK(slurp(a.output_dir / outputs::kManifest) == slurp(c.output_dir / outputs::kManifest));

    auto d = golden_config("golden-det-d");
    d.master_seed += 1;
    run_pipeline(d, parse_stages("all"));
    CHECK(slurp(a.output_dir / outputs::kManifest) != slurp(d.output_dir / outputs::kManifest));
  }

  TEST_CASE("a recorded run replays offline to the same outputs") {
    const auto store = fixtures::scratch("golden-store") / "calls.jsonl";
    auto rec = golden_config("golden-rec");
    rec.transport.mode = TransportMode::kRecord;
    rec.transport.store = store;
    const auto mr = run_pipeline(rec, parse_stages("all"));

    auto rep = golden_config("golden-rep");
    rep.transport.mode = TransportMode::kReplay;
    rep.transport.store = store;
    const auto mp = run_pipeline(rep, parse_stages("all"));
    CHECK(mp.digests == mr.digests);
    CHECK(mp.counts == mr.counts);

    // A replay log missing a request is a hard failure, not a silent miss.
    auto other = golden_config("golden-rep-miss");
    other.transport.mode = TransportMode::kReplay;
    other.transport.store = store;
    other.master_seed += 1;
    CHECK(code_of([&] { run_pipeline(other, parse_stages("all")); }) == ErrorCode::kReplayMiss);
  }

  TEST_CASE("stages can be rerun alone against earlier outputs") {
    auto c = golden_config("golden-stages");
    const auto full = run_pipeline(c, parse_stages("all"));
    const auto pack = run_pipeline(c, parse_stages("pack"));
    CHECK(pack.stages == std::vector<std::string>{"pack"});
    CHECK(pack.digests.at(outputs::kPacked) == full.digests.at(outputs::kPacked));
    CHECK(pack.counts.at("gateway_calls") == 0);

    auto fresh = golden_config("golden-stages-empty");
    CHECK(code_of([&] { run_pipeline(fresh, parse_stages("generate")); }) == ErrorCode::kIoError);
  }
}
