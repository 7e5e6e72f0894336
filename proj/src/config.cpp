#include "synthforge/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>

#include "synthforge/errors.hpp"
#include "synthforge/hashing.hpp"
#include "synthforge/synthesis.hpp"

namespace synthforge {

using nlohmann::json;

namespace {

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw Error(ErrorCode::kConfigInvalid, where + " must be an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [k, v] : j.items()) {
    if (!ok.count(k)) throw Error(ErrorCode::kConfigInvalid, "unknown key '" + k + "' in " + where);
  }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorCode::kConfigInvalid, where + "." + key + " has the wrong type");
  }
}

void require_positive(double v, const std::string& name) {
  if (!(v > 0)) throw Error(ErrorCode::kConfigInvalid, name + " must be positive");
}

DedupIndex parse_index(const std::string& s) {
  if (s == "exact") return DedupIndex::kExact;
  if (s == "lsh") return DedupIndex::kLsh;
  throw Error(ErrorCode::kConfigInvalid, "unknown dedup index '" + s + "'");
}

std::string index_name(DedupIndex i) { return i == DedupIndex::kExact ? "exact" : "lsh"; }

json sampling_json(const Sampling& s) {
  return {{"temperature", s.temperature}, {"top_p", s.top_p}, {"top_k", s.top_k}, {"max_tokens", s.max_tokens}};
}

std::pair<std::string, std::string> split_assignment(const std::string& s) {
  const auto eq = s.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw Error(ErrorCode::kConfigInvalid, "expected role=value, got '" + s + "'");
  }
  return {s.substr(0, eq), s.substr(eq + 1)};
}

std::string path_str(const std::filesystem::path& p) { return p.generic_string(); }

}  // namespace

json ModelEndpoint::to_json() const {
  return {{"base_url", base_url}, {"model", model}, {"api_key_env", api_key_env}, {"timeout_s", timeout_s}};
}

std::string_view to_string(TransportMode mode) {
  switch (mode) {
    case TransportMode::kLive: return "live";
    case TransportMode::kRules: return "rules";
    case TransportMode::kRecord: return "record";
    case TransportMode::kReplay: return "replay";
  }
  return "?";
}

TransportMode parse_transport_mode(std::string_view name) {
  if (name == "live") return TransportMode::kLive;
  if (name == "rules") return TransportMode::kRules;
  if (name == "record") return TransportMode::kRecord;
  if (name == "replay") return TransportMode::kReplay;
  throw Error(ErrorCode::kConfigInvalid, "unknown transport mode '" + std::string(name) + "'");
}

RunConfig RunConfig::from_json(const json& j, const std::filesystem::path& base_dir) {
  check_keys(j, {"master_seed", "output_dir", "models", "transport", "gateway", "graphs", "dedup", "generate",
                 "sample", "budget", "pack"},
             "config");
  RunConfig c;
  c.base_dir = base_dir;
  c.master_seed = get_or<std::uint64_t>(j, "master_seed", 0, "config");
  c.output_dir = get_or<std::string>(j, "output_dir", "out", "config");

  const json models = j.value("models", json::object());
  if (!models.is_object()) throw Error(ErrorCode::kConfigInvalid, "models must be an object");
  for (const auto& [role, m] : models.items()) {
    const std::string where = "models." + role;
    check_keys(m, {"base_url", "model", "api_key_env", "timeout_s"}, where);
    ModelEndpoint e;
    e.base_url = get_or<std::string>(m, "base_url", "", where);
    e.model = get_or<std::string>(m, "model", "", where);
    e.api_key_env = get_or<std::string>(m, "api_key_env", "", where);
    e.timeout_s = get_or<int>(m, "timeout_s", 600, where);
    c.models.emplace(role, std::move(e));
  }

  if (j.contains("transport")) {
    const auto& t = j["transport"];
    check_keys(t, {"mode", "store", "rules"}, "transport");
    c.transport.mode = parse_transport_mode(get_or<std::string>(t, "mode", "replay", "transport"));
    c.transport.store = get_or<std::string>(t, "store", "", "transport");
    c.transport.rules = get_or<std::string>(t, "rules", "", "transport");
  }
  if (j.contains("gateway")) {
    const auto& g = j["gateway"];
    check_keys(g, {"max_attempts", "initial_backoff_ms", "max_in_flight"}, "gateway");
    c.gateway.max_attempts = get_or<int>(g, "max_attempts", 3, "gateway");
    c.gateway.initial_backoff_ms = get_or<int>(g, "initial_backoff_ms", 200, "gateway");
    c.gateway.max_in_flight = get_or<std::size_t>(g, "max_in_flight", 8, "gateway");
  }
  c.graphs = j.value("graphs", json::object());

  if (j.contains("dedup")) {
    const auto& d = j["dedup"];
    check_keys(d, {"input", "threshold", "embedder", "dimension", "embed_role", "index", "quality_filter",
                   "quality_role", "quality_prompt"},
               "dedup");
    DedupStageConfig s;
    s.input = get_or<std::string>(d, "input", "", "dedup");
    s.threshold = get_or<double>(d, "threshold", s.threshold, "dedup");
    s.embedder = get_or<std::string>(d, "embedder", s.embedder, "dedup");
    s.dimension = get_or<std::size_t>(d, "dimension", s.dimension, "dedup");
    s.embed_role = get_or<std::string>(d, "embed_role", s.embed_role, "dedup");
    s.index = parse_index(get_or<std::string>(d, "index", "exact", "dedup"));
    s.quality_filter = get_or<bool>(d, "quality_filter", false, "dedup");
    s.quality_role = get_or<std::string>(d, "quality_role", s.quality_role, "dedup");
    if (d.contains("quality_prompt")) s.quality_prompt = parse_prompt(d["quality_prompt"], base_dir);
    c.dedup = std::move(s);
  }
  if (j.contains("generate")) {
    const auto& g = j["generate"];
    check_keys(g, {"graph", "walks_per_seed", "max_iters", "answer_node", "judge_node",
                   "keep_discarded_intermediates", "workers"},
               "generate");
    GenerateStageConfig s;
    s.graph = get_or<std::string>(g, "graph", "", "generate");
    s.walks_per_seed = get_or<int>(g, "walks_per_seed", s.walks_per_seed, "generate");
    s.max_iters = get_or<int>(g, "max_iters", s.max_iters, "generate");
    s.answer_node = get_or<std::string>(g, "answer_node", s.answer_node, "generate");
    s.judge_node = get_or<std::string>(g, "judge_node", s.judge_node, "generate");
    s.keep_discarded_intermediates = get_or<bool>(g, "keep_discarded_intermediates", false, "generate");
    s.workers = get_or<std::size_t>(g, "workers", s.workers, "generate");
    c.generate = std::move(s);
  }
  if (j.contains("sample")) {
    const auto& p = j["sample"];
    check_keys(p, {"prompts", "task", "env", "samples_per_prompt", "token_budget", "retain_cap", "model_role",
                   "sampling", "workers", "queue_capacity"},
               "sample");
    SampleStageConfig s;
    s.prompts = get_or<std::string>(p, "prompts", "", "sample");
    s.task = p.value("task", json::object());
    s.env = get_or<std::string>(p, "env", "", "sample");
    auto& o = s.options;
    o.samples_per_prompt = get_or<int>(p, "samples_per_prompt", o.samples_per_prompt, "sample");
    o.token_budget = get_or<std::int64_t>(p, "token_budget", o.token_budget, "sample");
    o.retain_cap = get_or<std::size_t>(p, "retain_cap", o.retain_cap, "sample");
    o.model_role = get_or<std::string>(p, "model_role", o.model_role, "sample");
    o.sampling = parse_sampling(p.value("sampling", json()), o.sampling);
    o.workers = get_or<std::size_t>(p, "workers", o.workers, "sample");
    o.queue_capacity = get_or<std::size_t>(p, "queue_capacity", o.queue_capacity, "sample");
    c.sample = std::move(s);
  }
  if (j.contains("budget")) {
    const auto& b = j["budget"];
    check_keys(b, {"prompts", "think_budget", "overlong_limit", "mask_mode", "train_eos", "tokenizer", "model_role",
                   "sampling"},
               "budget");
    BudgetStageConfig s;
    s.prompts = get_or<std::string>(b, "prompts", "", "budget");
    s.think_budget = get_or<std::int64_t>(b, "think_budget", s.think_budget, "budget");
    s.overlong_limit = get_or<std::int64_t>(b, "overlong_limit", s.overlong_limit, "budget");
    try {
      s.mask_mode = parse_mask_mode(get_or<std::string>(b, "mask_mode", "close-only", "budget"));
    } catch (const Error& ex) {
      throw Error(ErrorCode::kConfigInvalid, ex.what());
    }
    s.train_eos = get_or<bool>(b, "train_eos", s.train_eos, "budget");
    s.tokenizer = get_or<std::string>(b, "tokenizer", s.tokenizer, "budget");
    s.model_role = get_or<std::string>(b, "model_role", s.model_role, "budget");
    s.sampling = parse_sampling(b.value("sampling", json()), s.sampling);
    c.budget = std::move(s);
  }
  if (j.contains("pack")) {
    const auto& k = j["pack"];
    check_keys(k, {"inputs", "capacity", "shuffle", "tokenizer"}, "pack");
    PackStageConfig s;
    for (const auto& p : get_or<std::vector<std::string>>(k, "inputs", {}, "pack")) s.inputs.emplace_back(p);
    s.capacity = get_or<std::size_t>(k, "capacity", s.capacity, "pack");
    s.shuffle = get_or<bool>(k, "shuffle", s.shuffle, "pack");
    s.tokenizer = get_or<std::string>(k, "tokenizer", s.tokenizer, "pack");
    c.pack = std::move(s);
  }
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kConfigInvalid, "cannot read config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& ex) {
    throw Error(ErrorCode::kConfigInvalid, path.string() + ": " + ex.what());
  }
  auto base = path.parent_path();
  if (base.empty()) base = ".";
  return from_json(j, base);
}

json RunConfig::to_json() const {
  json j;
  j["master_seed"] = master_seed;
  j["output_dir"] = path_str(output_dir);
  j["models"] = json::object();
  for (const auto& [role, m] : models) j["models"][role] = m.to_json();
  j["transport"] = {{"mode", to_string(transport.mode)},
                    {"store", path_str(transport.store)},
                    {"rules", path_str(transport.rules)}};
  j["gateway"] = {{"max_attempts", gateway.max_attempts},
                  {"initial_backoff_ms", gateway.initial_backoff_ms},
                  {"max_in_flight", gateway.max_in_flight}};
  j["graphs"] = graphs;
  if (dedup) {
    json d = {{"input", path_str(dedup->input)}, {"threshold", dedup->threshold}, {"embedder", dedup->embedder},
              {"dimension", dedup->dimension}, {"embed_role", dedup->embed_role},
              {"index", index_name(dedup->index)}, {"quality_filter", dedup->quality_filter},
              {"quality_role", dedup->quality_role}};
    if (dedup->quality_prompt) d["quality_prompt"] = {{"system", dedup->quality_prompt->system},
                                                      {"user", dedup->quality_prompt->user}};
    j["dedup"] = d;
  }
  if (generate) {
    j["generate"] = {{"graph", generate->graph}, {"walks_per_seed", generate->walks_per_seed},
                     {"max_iters", generate->max_iters}, {"answer_node", generate->answer_node},
                     {"judge_node", generate->judge_node},
                     {"keep_discarded_intermediates", generate->keep_discarded_intermediates},
                     {"workers", generate->workers}};
  }
  if (sample) {
    const auto& o = sample->options;
    j["sample"] = {{"prompts", path_str(sample->prompts)}, {"task", sample->task}, {"env", sample->env},
                   {"samples_per_prompt", o.samples_per_prompt}, {"token_budget", o.token_budget},
                   {"retain_cap", o.retain_cap}, {"model_role", o.model_role},
                   {"sampling", sampling_json(o.sampling)}, {"workers", o.workers},
                   {"queue_capacity", o.queue_capacity}};
  }
  if (budget) {
    j["budget"] = {{"prompts", path_str(budget->prompts)}, {"think_budget", budget->think_budget},
                   {"overlong_limit", budget->overlong_limit}, {"mask_mode", to_string(budget->mask_mode)},
                   {"train_eos", budget->train_eos}, {"tokenizer", budget->tokenizer},
                   {"model_role", budget->model_role}, {"sampling", sampling_json(budget->sampling)}};
  }
  if (pack) {
    json inputs = json::array();
    for (const auto& p : pack->inputs) inputs.push_back(path_str(p));
    j["pack"] = {{"inputs", inputs}, {"capacity", pack->capacity}, {"shuffle", pack->shuffle},
                 {"tokenizer", pack->tokenizer}};
  }
  return j;
}

std::filesystem::path RunConfig::resolve(const std::filesystem::path& p) const {
  if (p.empty() || p.is_absolute()) return p;
  return base_dir / p;
}

GraphTable RunConfig::load_graph_table() const { return load_graphs(graphs, base_dir, true); }

void RunConfig::validate() const {
  require_positive(gateway.max_attempts, "gateway.max_attempts");
  require_positive(static_cast<double>(gateway.max_in_flight), "gateway.max_in_flight");
  if (gateway.initial_backoff_ms < 0) throw Error(ErrorCode::kConfigInvalid, "gateway.initial_backoff_ms is negative");
  if ((transport.mode == TransportMode::kRecord || transport.mode == TransportMode::kReplay) &&
      transport.store.empty()) {
    throw Error(ErrorCode::kConfigInvalid, "transport.store is required in record and replay modes");
  }
  if (transport.mode == TransportMode::kRules && transport.rules.empty()) {
    throw Error(ErrorCode::kConfigInvalid, "transport.rules is required in rules mode");
  }
  if (transport.mode == TransportMode::kLive) {
    for (const auto& [role, m] : models) {
      if (m.base_url.empty()) throw Error(ErrorCode::kConfigInvalid, "models." + role + " needs a base_url");
    }
  }

  const GraphTable table = load_graph_table();

  if (dedup) {
    if (dedup->input.empty()) throw Error(ErrorCode::kConfigInvalid, "dedup.input is required");
    if (!(dedup->threshold > -1.0 && dedup->threshold <= 1.0)) {
      throw Error(ErrorCode::kConfigInvalid, "dedup.threshold must lie in (-1, 1]");
    }
    if (dedup->embedder != "hashing" && dedup->embedder != "http") {
      throw Error(ErrorCode::kConfigInvalid, "dedup.embedder must be hashing or http");
    }
    require_positive(static_cast<double>(dedup->dimension), "dedup.dimension");
    if (dedup->quality_filter && !dedup->quality_prompt) {
      throw Error(ErrorCode::kConfigInvalid, "dedup.quality_filter needs dedup.quality_prompt");
    }
  }
  if (generate) {
    auto it = table.find(generate->graph);
    if (it == table.end()) throw Error(ErrorCode::kConfigInvalid, "generate.graph names unknown graph '" + generate->graph + "'");
    if (!dedup) throw Error(ErrorCode::kConfigInvalid, "generate needs a dedup section for its seeds");
    require_positive(generate->walks_per_seed, "generate.walks_per_seed");
    require_positive(generate->max_iters, "generate.max_iters");
    const Graph& g = *it->second;
    const NodeSpec* answer = nullptr;
    const NodeSpec* judge = nullptr;
    for (const auto& n : g.nodes()) {
      if (n.id == generate->answer_node) answer = &n;
      if (n.id == generate->judge_node) judge = &n;
    }
    if (!answer || !judge) {
      throw Error(ErrorCode::kConfigInvalid, "generate graph must contain the answer and judge nodes at top level");
    }
    if (judge->behavior != Behavior::kLlmJudge || g.target().id != judge->id) {
      throw Error(ErrorCode::kConfigInvalid, "the judge node must be the graph target");
    }
    require_distinct_roles(*answer, *judge);
    const auto a = models.find(*answer->model_role);
    const auto b = models.find(*judge->model_role);
    // A model name is the model's identity; serving it from two URLs does
    // not make it a different grader.
    if (a != models.end() && b != models.end() && !a->second.model.empty() &&
        a->second.model == b->second.model) {
      throw Error(ErrorCode::kSameModelRole, "answer and judge roles resolve to the same model '" + a->second.model + "'");
    }
  }
  if (sample) {
    if (sample->env.empty()) throw Error(ErrorCode::kConfigInvalid, "sample.env is required");
    EnvRegistry::with_builtins().get(sample->env);
    if (sample->prompts.empty() && !generate) {
      throw Error(ErrorCode::kConfigInvalid, "sample needs prompts or a generate section");
    }
    const auto& o = sample->options;
    require_positive(o.samples_per_prompt, "sample.samples_per_prompt");
    require_positive(static_cast<double>(o.token_budget), "sample.token_budget");
    require_positive(static_cast<double>(o.retain_cap), "sample.retain_cap");
    require_positive(static_cast<double>(o.workers), "sample.workers");
  }
  if (budget) {
    if (budget->prompts.empty()) throw Error(ErrorCode::kConfigInvalid, "budget.prompts is required");
    require_positive(static_cast<double>(budget->think_budget), "budget.think_budget");
    require_positive(static_cast<double>(budget->overlong_limit), "budget.overlong_limit");
    make_tokenizer(budget->tokenizer);
  }
  if (pack) {
    require_positive(static_cast<double>(pack->capacity), "pack.capacity");
    make_tokenizer(pack->tokenizer);
    if (pack->inputs.empty() && !sample && !budget) {
      throw Error(ErrorCode::kConfigInvalid, "pack needs inputs or a sample/budget section");
    }
  }
}

std::string RunConfig::hash() const {
  json j = to_json();
  j.erase("output_dir");
  return sha256_hex(j.dump());
}

void apply_overrides(RunConfig& config, const ConfigOverrides& o) {
  for (const auto& e : o.endpoints) {
    auto [role, url] = split_assignment(e);
    config.models[role].base_url = url;
  }
  for (const auto& m : o.models) {
    auto [role, name] = split_assignment(m);
    config.models[role].model = name;
  }
  if (o.seed) config.master_seed = *o.seed;
  if (o.concurrency) {
    config.gateway.max_in_flight = *o.concurrency;
    if (config.sample) config.sample->options.workers = *o.concurrency;
    if (config.generate) config.generate->workers = *o.concurrency;
  }
  if (o.mode) config.transport.mode = parse_transport_mode(*o.mode);
  if (o.store) config.transport.store = *o.store;
  if (o.out) config.output_dir = *o.out;
}

std::map<std::string, EndpointDescriptor> resolve_endpoints(const RunConfig& config) {
  std::map<std::string, EndpointDescriptor> out;
  for (const auto& [role, m] : config.models) {
    EndpointDescriptor d;
    d.base_url = m.base_url;
    d.model = m.model;
    d.timeout = std::chrono::seconds(m.timeout_s);
    if (!m.api_key_env.empty()) {
      if (const char* v = std::getenv(m.api_key_env.c_str())) d.api_key = v;
    }
    out.emplace(role, std::move(d));
  }
  return out;
}

std::shared_ptr<Transport> make_transport(const RunConfig& config) {
  const auto& t = config.transport;
  switch (t.mode) {
    case TransportMode::kLive:
      return std::make_shared<HttpTransport>(resolve_endpoints(config));
    case TransportMode::kRules:
      return RulesTransport::from_file(config.resolve(t.rules));
    case TransportMode::kReplay:
      return record_replay(StoreMode::kReplay, config.resolve(t.store));
    case TransportMode::kRecord: {
      std::shared_ptr<Transport> inner;
      if (!t.rules.empty()) {
        inner = RulesTransport::from_file(config.resolve(t.rules));
      } else {
        inner = std::make_shared<HttpTransport>(resolve_endpoints(config));
      }
      return record_replay(StoreMode::kRecord, config.resolve(t.store), inner);
    }
  }
  throw Error(ErrorCode::kConfigInvalid, "unknown transport mode");
}

}  // namespace synthforge
