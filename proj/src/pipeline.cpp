#include "synthforge/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <fstream>
#include <mutex>
#include <thread>

#include "synthforge/dataset_io.hpp"
#include "synthforge/errors.hpp"
#include "synthforge/hashing.hpp"
#include "synthforge/length_budget.hpp"
#include "synthforge/packer.hpp"
#include "synthforge/rng.hpp"
#include "synthforge/synthesis.hpp"

namespace synthforge {

using nlohmann::json;

std::string_view to_string(Stage stage) {
  switch (stage) {
    case Stage::kDedup: return "dedup";
    case Stage::kGenerate: return "generate";
    case Stage::kSample: return "sample";
    case Stage::kBudget: return "budget";
    case Stage::kPack: return "pack";
  }
  return "?";
}

std::vector<Stage> parse_stages(std::string_view name) {
  if (name == "all") return {Stage::kDedup, Stage::kGenerate, Stage::kSample, Stage::kBudget, Stage::kPack};
  for (Stage s : {Stage::kDedup, Stage::kGenerate, Stage::kSample, Stage::kBudget, Stage::kPack}) {
    if (to_string(s) == name) return {s};
  }
  throw Error(ErrorCode::kConfigInvalid, "unknown stage '" + std::string(name) + "'");
}

json RunManifest::to_json() const {
  json j;
  j["master_seed"] = master_seed;
  j["config_hash"] = config_hash;
  j["endpoints"] = endpoints;
  j["stages"] = stages;
  j["counts"] = counts;
  j["metrics"] = metrics;
  j["digests"] = digests;
  return j;
}

namespace {

// Stage tags keep the seed streams of different stages apart.
constexpr std::uint64_t kGenerateStream = 0x67656e;
constexpr std::uint64_t kSampleStream = 0x73616d;
constexpr std::uint64_t kBudgetStream = 0x627564;
constexpr std::uint64_t kPackStream = 0x70616b;

// Runs fn(i) for i in [0, n) on up to `workers` threads. On failure the
// remaining work is abandoned and the error of the lowest failing index is
// rethrown, so the reported error does not depend on scheduling.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  std::mutex mu;
  std::size_t failed_at = n;
  std::exception_ptr failure;
  auto body = [&] {
    while (!stop.load()) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(mu);
        if (i < failed_at) {
          failed_at = i;
          failure = std::current_exception();
        }
        stop = true;
      }
    }
  };
  if (workers == 1) {
    body();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(body);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
}

struct StageContext {
  const RunConfig& config;
  Gateway& gateway;
  RunManifest& manifest;
  std::filesystem::path out;

  std::filesystem::path file(const char* name) const { return out / name; }
  void digest(const char* name) { manifest.digests[name] = sha256_file(file(name)); }
};

bool is_discard(const Error& e) {
  return e.code() == ErrorCode::kStandaloneLeak || e.code() == ErrorCode::kDeadEnd ||
         e.code() == ErrorCode::kPostconditionUnmet;
}

void run_dedup(StageContext& sc) {
  const auto& cfg = *sc.config.dedup;
  auto corpus = clean_passages(read_seed_corpus(sc.config.resolve(cfg.input)));
  sc.manifest.counts["seeds_read"] = static_cast<std::int64_t>(corpus.size());

  if (cfg.quality_filter) {
    NodeSpec judge;
    judge.id = "quality_filter";
    judge.behavior = Behavior::kLlmJudge;
    judge.model_role = cfg.quality_role;
    judge.prompt = cfg.quality_prompt;
    std::vector<char> keep(corpus.size(), 1);
    parallel_for(corpus.size(), sc.config.gateway.max_in_flight, [&](std::size_t i) {
      keep[i] = quality_filter(corpus[i], judge, sc.gateway).keep ? 1 : 0;
    });
    std::vector<SeedPassage> kept;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      if (keep[i]) kept.push_back(std::move(corpus[i]));
    }
    sc.manifest.counts["quality_dropped"] = static_cast<std::int64_t>(corpus.size() - kept.size());
    corpus = std::move(kept);
  }

  std::unique_ptr<Embedder> embedder;
  if (cfg.embedder == "http") {
    auto endpoints = resolve_endpoints(sc.config);
    auto it = endpoints.find(cfg.embed_role);
    if (it == endpoints.end()) throw Error(ErrorCode::kConfigInvalid, "no model for role '" + cfg.embed_role + "'");
    embedder = std::make_unique<HttpEmbedder>(it->second, cfg.dimension);
  } else {
    embedder = std::make_unique<HashingEmbedder>(cfg.dimension);
  }
  DedupOptions opts;
  opts.threshold = cfg.threshold;
  opts.index = cfg.index;
  opts.lsh_seed = derive_seed(sc.config.master_seed, 0);
  const DedupResult result = semantic_dedup(corpus, *embedder, opts);
  write_seed_corpus(result.retained, sc.file(outputs::kSeeds));
  {
    std::ofstream out(sc.file(outputs::kDuplicates), std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIoError, "cannot write duplicates file");
    out << result.duplicates_json().dump(2) << '\n';
  }
  sc.manifest.counts["seeds_retained"] = static_cast<std::int64_t>(result.retained.size());
  sc.manifest.counts["deduped"] = static_cast<std::int64_t>(result.duplicates.size());
  sc.digest(outputs::kSeeds);
  sc.digest(outputs::kDuplicates);
}

struct WalkOutcome {
  bool accepted = false;
  bool discarded = false;
  int iterations = 0;
  std::vector<Conversation> conversations;
};

const NodeSpec& top_level(const Graph& g, const std::string& id) {
  for (const auto& n : g.nodes()) {
    if (n.id == id) return n;
  }
  throw Error(ErrorCode::kConfigInvalid, "graph has no node '" + id + "'");
}

void run_generate(StageContext& sc) {
  const auto& cfg = *sc.config.generate;
  const GraphTable table = sc.config.load_graph_table();
  const Graph& graph = *table.at(cfg.graph);
  const NodeSpec& answer = top_level(graph, cfg.answer_node);
  const NodeSpec& judge = top_level(graph, cfg.judge_node);
  require_distinct_roles(answer, judge);

  const auto seeds = read_seed_corpus(sc.file(outputs::kSeeds));
  const std::size_t walks = static_cast<std::size_t>(cfg.walks_per_seed);
  const std::size_t total = seeds.size() * walks;
  std::vector<WalkOutcome> slots(total);

  parallel_for(total, cfg.workers, [&](std::size_t k) {
    const SeedPassage& seed = seeds[k / walks];
    const std::string sample_id = seed.id + "/w" + std::to_string(k % walks);
    const std::uint64_t walk_seed = derive_seed(sc.config.master_seed ^ kGenerateStream, k);
    const Payload start = Payload().with(qa_fields::kPassage, Value::text(seed.text));
    WalkOutcome& slot = slots[k];
    ProvenanceOptions popts;
    popts.sample_id = sample_id;
    popts.keep_discarded_intermediates = cfg.keep_discarded_intermediates;

    WalkTrace trace;
    try {
      trace = random_walk(graph, start, walk_seed, &sc.gateway);
    } catch (const DeadEndError& e) {
      slot.discarded = true;
      popts.accepted = false;
      slot.conversations = collect_provenance(e.partial(), popts);
      return;
    } catch (const Error& e) {
      if (!is_discard(e)) throw;
      slot.discarded = true;
      return;
    }

    const std::size_t n = trace.steps.size();
    if (n < 2 || trace.steps[n - 2].node_id != answer.id || trace.steps[n - 1].node_id != judge.id) {
      throw Error(ErrorCode::kConfigInvalid, "walks must end with the answer node followed by the judge");
    }
    const Payload instruction = n >= 3 ? trace.steps[n - 3].payload_after : trace.seed;
    LoopAttempt first{{trace.steps[n - 2], trace.steps[n - 1]}};

    Rng rng(walk_seed);
    ExecContext ctx;
    ctx.gateway = &sc.gateway;
    ctx.rng = &rng;
    ctx.request_seed_base = walk_seed;
    JudgeLoopResult loop;
    try {
      loop = run_judge_loop(instruction, answer, judge, cfg.max_iters, ctx, first);
    } catch (const Error& e) {
      if (!is_discard(e)) throw;
      slot.discarded = true;
      return;
    }
    for (auto& s : loop.steps) trace.steps.push_back(std::move(s));
    slot.iterations = loop.iterations;
    slot.accepted = loop.accepted;
    slot.discarded = !loop.accepted;
    popts.accepted = loop.accepted;
    slot.conversations = collect_provenance(trace, popts);
  });

  std::vector<Conversation> all;
  std::int64_t accepted = 0, discarded = 0, iterations = 0;
  for (auto& s : slots) {
    accepted += s.accepted ? 1 : 0;
    discarded += s.discarded ? 1 : 0;
    iterations += s.iterations;
    for (auto& c : s.conversations) all.push_back(std::move(c));
  }
  if (accepted + discarded != static_cast<std::int64_t>(total)) {
    throw Error(ErrorCode::kPostconditionUnmet, "walk accounting does not add up");
  }
  write_dataset(all, sc.file(outputs::kQa));
  sc.manifest.counts["walks_attempted"] = static_cast<std::int64_t>(total);
  sc.manifest.counts["accepted"] = accepted;
  sc.manifest.counts["discarded"] = discarded;
  sc.manifest.counts["judge_iterations"] = iterations;
  sc.manifest.counts["qa_records"] = static_cast<std::int64_t>(all.size());
  sc.digest(outputs::kQa);
}

std::vector<SamplePrompt> read_prompts(const std::filesystem::path& path) {
  std::vector<SamplePrompt> out;
  for (const auto& j : read_jsonl(path)) out.push_back(SamplePrompt::from_json(j));
  return out;
}

std::vector<SamplePrompt> prompts_from_qa(const std::filesystem::path& qa, const json& task) {
  std::vector<SamplePrompt> out;
  for (const auto& c : read_dataset(qa)) {
    if (c.meta.value("kind", std::string{}) != "final") continue;
    SamplePrompt p;
    p.id = c.id;
    for (const auto& m : c.messages) {
      if (m.role == Role::kAssistant) break;
      p.messages.push_back(m);
    }
    p.task = task;
    out.push_back(std::move(p));
  }
  return out;
}

void run_sample(StageContext& sc) {
  const auto& cfg = *sc.config.sample;
  const auto prompts = cfg.prompts.empty() ? prompts_from_qa(sc.file(outputs::kQa), cfg.task)
                                           : read_prompts(sc.config.resolve(cfg.prompts));
  const auto envs = EnvRegistry::with_builtins();
  const auto tok = make_tokenizer("whitespace");
  RejectionOptions opts = cfg.options;
  opts.seed = derive_seed(sc.config.master_seed ^ kSampleStream, 0);
  const RejectionResult result = rejection_sample(prompts, *envs.get(cfg.env), sc.gateway, *tok, opts);
  std::vector<Conversation> convs;
  for (const auto& a : result.accepted) convs.push_back(a.to_conversation());
  write_dataset(convs, sc.file(outputs::kSampled));
  sc.manifest.counts["sample_prompts"] = static_cast<std::int64_t>(prompts.size());
  sc.manifest.counts["sample_generated"] = static_cast<std::int64_t>(result.stats.generated);
  sc.manifest.counts["sample_accepted"] = static_cast<std::int64_t>(result.stats.accepted);
  sc.digest(outputs::kSampled);
}

void run_budget(StageContext& sc) {
  const auto& cfg = *sc.config.budget;
  const auto prompts = read_prompts(sc.config.resolve(cfg.prompts));
  const auto tok = make_tokenizer(cfg.tokenizer);
  std::vector<std::optional<Conversation>> slots(prompts.size());
  std::vector<TerminationClass> classes(prompts.size());

  parallel_for(prompts.size(), sc.config.gateway.max_in_flight, [&](std::size_t i) {
    CompletionRequest req;
    req.model_role = cfg.model_role;
    req.messages = prompts[i].messages;
    req.sampling = cfg.sampling;
    req.sampling.seed = derive_seed(sc.config.master_seed ^ kBudgetStream, i) >> 1;
    const auto reply = sc.gateway.complete(req);
    const Generation gen{reply.text, reply.finish_reason};
    classes[i] = classify_termination(gen, cfg.think_budget, *tok);
    ContinuationOptions copts;
    copts.model_role = cfg.model_role;
    copts.sampling = req.sampling;
    auto conv = prepare_budget_sample(prompts[i].messages, gen, cfg.think_budget, *tok, sc.gateway, copts);
    if (!conv) return;
    conv->id = prompts[i].id + "/budget";
    const auto positions = build_loss_mask(*conv, cfg.mask_mode, *tok, cfg.train_eos);
    conv->mask = to_char_mask(*conv, positions, cfg.mask_mode, *tok);
    slots[i] = std::move(conv);
  });

  std::vector<Conversation> convs;
  std::vector<std::string> answers;
  std::int64_t think_cut = 0;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (classes[i] == TerminationClass::kThinkCut) ++think_cut;
    if (!slots[i]) continue;
    answers.push_back(slots[i]->messages.back().content);
    convs.push_back(std::move(*slots[i]));
  }
  write_dataset(convs, sc.file(outputs::kBudget));
  sc.manifest.counts["budget_prompts"] = static_cast<std::int64_t>(prompts.size());
  sc.manifest.counts["budget_think_cut"] = think_cut;
  sc.manifest.counts["budget_samples"] = static_cast<std::int64_t>(convs.size());
  if (!answers.empty()) sc.manifest.metrics["budget_overlong_rate"] = overlong_rate(answers, cfg.overlong_limit, *tok);
  sc.digest(outputs::kBudget);
}

void run_pack(StageContext& sc) {
  const auto& cfg = *sc.config.pack;
  std::vector<std::filesystem::path> inputs;
  if (cfg.inputs.empty()) {
    if (sc.config.sample) inputs.push_back(sc.file(outputs::kSampled));
    if (sc.config.budget) inputs.push_back(sc.file(outputs::kBudget));
  } else {
    for (const auto& p : cfg.inputs) inputs.push_back(sc.config.resolve(p));
  }
  const auto tok = make_tokenizer(cfg.tokenizer);
  std::vector<std::int64_t> lengths;
  std::vector<std::string> ids;
  for (const auto& path : inputs) {
    for (const auto& c : read_dataset(path)) {
      // One extra position for the end-of-sequence token.
      lengths.push_back(layout_tokens(c, *tok).total + 1);
      ids.push_back(c.id);
    }
  }
  auto bins = pack_ffd(lengths, ids, static_cast<std::int64_t>(cfg.capacity));
  if (cfg.shuffle) shuffle_bins(bins, derive_seed(sc.config.master_seed ^ kPackStream, 0));
  std::vector<json> records;
  for (const auto& b : bins) records.push_back(to_json(b));
  write_jsonl(records, sc.file(outputs::kPacked));
  sc.manifest.counts["packed_samples"] = static_cast<std::int64_t>(lengths.size());
  sc.manifest.counts["packed_bins"] = static_cast<std::int64_t>(bins.size());
  if (!bins.empty()) sc.manifest.metrics["pack_efficiency"] = packing_efficiency(bins);
  sc.digest(outputs::kPacked);
}

void write_json_file(const std::filesystem::path& path, const json& j) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIoError, "cannot write " + tmp.string());
    out << j.dump(2) << '\n';
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace

RunManifest run_pipeline(const RunConfig& config, const std::vector<Stage>& stages) {
  config.validate();
  std::vector<Stage> order = stages;
  std::sort(order.begin(), order.end());
  order.erase(std::unique(order.begin(), order.end()), order.end());

  for (Stage s : order) {
    const bool present = (s == Stage::kDedup && config.dedup) || (s == Stage::kGenerate && config.generate) ||
                         (s == Stage::kSample && config.sample) || (s == Stage::kBudget && config.budget) ||
                         (s == Stage::kPack && config.pack);
    if (!present) {
      throw Error(ErrorCode::kConfigInvalid, "stage '" + std::string(to_string(s)) + "' has no config section");
    }
  }

  RunManifest manifest;
  manifest.master_seed = config.master_seed;
  manifest.config_hash = config.hash();
  for (const auto& [role, m] : config.models) {
    manifest.endpoints[role] = {{"base_url", m.base_url}, {"model", m.model}};
  }

  const std::filesystem::path out = config.output_dir;
  {
    std::error_code ec;
    std::filesystem::create_directories(out, ec);
    if (ec) throw Error(ErrorCode::kIoError, "cannot create " + out.string() + ": " + ec.message());
  }

  GatewayOptions gopts;
  gopts.retry.max_attempts = config.gateway.max_attempts;
  gopts.retry.initial_backoff = std::chrono::milliseconds(config.gateway.initial_backoff_ms);
  gopts.max_in_flight = config.gateway.max_in_flight;
  Gateway gateway(make_transport(config), gopts);

  StageContext sc{config, gateway, manifest, out};
  for (Stage s : order) {
    const auto t0 = std::chrono::steady_clock::now();
    switch (s) {
      case Stage::kDedup: run_dedup(sc); break;
      case Stage::kGenerate: run_generate(sc); break;
      case Stage::kSample: run_sample(sc); break;
      case Stage::kBudget: run_budget(sc); break;
      case Stage::kPack: run_pack(sc); break;
    }
    const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
    manifest.stages.emplace_back(to_string(s));
    manifest.timing[std::string(to_string(s))] = dt.count();
  }
  manifest.counts["gateway_calls"] = static_cast<std::int64_t>(gateway.transport_calls());

  write_json_file(out / outputs::kManifest, manifest.to_json());
  write_json_file(out / outputs::kTiming, json(manifest.timing));
  return manifest;
}

}  // namespace synthforge
