#include "synthforge/envs.hpp"

#include <atomic>
#include <condition_variable>
#include <deque>
#include <exception>
#include <mutex>
#include <set>
#include <thread>

#include "synthforge/errors.hpp"
#include "synthforge/rng.hpp"
#include "synthforge/text.hpp"

namespace synthforge {

using nlohmann::json;

namespace {

class AnswerFormatEnv : public VerifierEnv {
 public:
  std::string id() const override { return "answer-format"; }
  RewardRecord score(const Trajectory& t, const json& task) const override {
    return verify_answer_format(t, task.at("format").get<std::string>());
  }
};

class ConstraintEnv : public VerifierEnv {
 public:
  std::string id() const override { return "constraint"; }
  RewardRecord score(const Trajectory& t, const json& task) const override {
    std::vector<ConstraintInstruction> list;
    if (task.contains("constraints")) {
      for (const auto& c : task["constraints"]) list.push_back(ConstraintInstruction::from_json(c));
    } else {
      list.push_back(ConstraintInstruction::from_json(task.at("constraint")));
    }
    RewardRecord last;
    for (const auto& c : list) {
      last = verify_constraint(t, c);
      if (!last.passed()) return last;
    }
    last.verifier_id = "constraint";
    return last;
  }
};

class SchemaEnv : public VerifierEnv {
 public:
  explicit SchemaEnv(std::string id) : id_(std::move(id)) {}
  std::string id() const override { return id_; }
  RewardRecord score(const Trajectory& t, const json& task) const override {
    const auto schema = SchemaSpec::from_json_schema(task.at("schema"));
    LengthPenalty penalty;
    penalty.max_chars = task.value("max_chars", std::size_t{0});
    penalty.weight = task.value("penalty_weight", 0.5);
    auto r = verify_schema(t.generation, schema, penalty);
    r.verifier_id = id_;
    return r;
  }

 private:
  std::string id_;
};

class ToolCallEnv : public VerifierEnv {
 public:
  std::string id() const override { return "tool-call"; }
  RewardRecord score(const Trajectory& t, const json& task) const override {
    const auto refs = task.at("reference_calls").get<std::vector<json>>();
    return verify_tool_call(t, refs);
  }
};

class ContainsEnv : public VerifierEnv {
 public:
  std::string id() const override { return "contains"; }
  RewardRecord score(const Trajectory& t, const json& task) const override {
    RewardRecord r;
    r.verifier_id = "contains";
    const auto token = task.at("token").get<std::string>();
    // The token only counts in the answer of a well-formed reasoning reply.
    const auto split = split_reasoning(t.generation);
    if (!split.ok) {
      r.detail = split.detail;
      return r;
    }
    r.reward = split.answer.find(token) != std::string_view::npos ? 1.0 : 0.0;
    if (!r.passed()) r.detail = "token absent";
    return r;
  }
};

}  // namespace

void EnvRegistry::add(std::shared_ptr<VerifierEnv> env) {
  const auto id = env->id();
  if (!envs_.emplace(id, std::move(env)).second) {
    throw Error(ErrorCode::kConfigInvalid, "environment '" + id + "' registered twice");
  }
}

std::shared_ptr<const VerifierEnv> EnvRegistry::get(const std::string& id) const {
  auto it = envs_.find(id);
  if (it == envs_.end()) throw Error(ErrorCode::kConfigInvalid, "no environment '" + id + "'");
  return it->second;
}

std::vector<std::string> EnvRegistry::ids() const {
  std::vector<std::string> out;
  for (const auto& [id, e] : envs_) out.push_back(id);
  return out;
}

EnvRegistry EnvRegistry::with_builtins() {
  EnvRegistry r;
  r.add(std::make_shared<AnswerFormatEnv>());
  r.add(std::make_shared<ConstraintEnv>());
  r.add(std::make_shared<SchemaEnv>("schema"));
  r.add(std::make_shared<SchemaEnv>("schema-repair"));
  r.add(std::make_shared<ToolCallEnv>());
  r.add(std::make_shared<ContainsEnv>());
  return r;
}

json SamplePrompt::to_json() const {
  json msgs = json::array();
  for (const auto& m : messages) msgs.push_back({{"role", to_string(m.role)}, {"content", m.content}});
  return {{"id", id}, {"messages", msgs}, {"task", task}};
}

SamplePrompt SamplePrompt::from_json(const json& j) {
  SamplePrompt p;
  p.id = j.at("id").get<std::string>();
  for (const auto& m : j.at("messages")) {
    auto role = parse_role(m.at("role").get<std::string>());
    if (!role) throw Error(ErrorCode::kInvalidConversation, "unknown role in prompt '" + p.id + "'");
    p.messages.push_back({*role, m.at("content").get<std::string>()});
  }
  p.task = j.value("task", json::object());
  return p;
}

Conversation AcceptedTrajectory::to_conversation() const {
  Conversation c;
  c.id = prompt_id + "/" + std::to_string(sample_index);
  c.messages = trajectory.prompt;
  c.messages.push_back({Role::kAssistant, trajectory.generation});
  c.reward = reward;
  c.source_node = "rejection-sample";
  c.meta["token_count"] = trajectory.token_count;
  return c;
}

json RejectionStats::to_json() const {
  return {{"generated", generated},   {"rewarded", rewarded},     {"over_budget", over_budget},
          {"duplicates", duplicates}, {"capped", capped},         {"failed_calls", failed_calls},
          {"accepted", accepted}};
}

namespace {

struct Generated {
  std::size_t job = 0;
  std::string text;
};

struct Scored {
  bool present = false;
  Trajectory trajectory;
  RewardRecord reward;
};

}  // namespace

RejectionResult rejection_sample(std::span<const SamplePrompt> prompts, const VerifierEnv& env,
                                 Gateway& gateway, const Tokenizer& tokenizer,
                                 const RejectionOptions& options) {
  if (options.samples_per_prompt < 1) {
    throw Error(ErrorCode::kInvalidArgument, "samples per prompt must be at least 1");
  }
  if (options.token_budget < 1) throw Error(ErrorCode::kInvalidArgument, "token budget must be positive");
  const std::size_t per = static_cast<std::size_t>(options.samples_per_prompt);
  const std::size_t jobs = prompts.size() * per;
  std::vector<Scored> slots(jobs);

  std::mutex mu;
  std::condition_variable can_push;
  std::condition_variable can_pop;
  std::deque<Generated> queue;
  std::size_t producers_left = std::max<std::size_t>(1, std::min(options.workers, std::max<std::size_t>(jobs, 1)));
  const std::size_t capacity = std::max<std::size_t>(options.queue_capacity, 1);
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  std::exception_ptr failure;
  std::size_t failed_calls = 0;

  auto producer = [&] {
    while (!stop.load()) {
      const std::size_t job = next.fetch_add(1);
      if (job >= jobs) break;
      const auto& prompt = prompts[job / per];
      CompletionRequest req;
      req.model_role = options.model_role;
      req.messages = prompt.messages;
      req.sampling = options.sampling;
      req.sampling.seed = derive_seed(options.seed, job) >> 1;
      try {
        auto reply = gateway.complete(req);
        std::unique_lock lock(mu);
        can_push.wait(lock, [&] { return queue.size() < capacity || stop.load(); });
        if (stop.load()) break;
        queue.push_back({job, std::move(reply.text)});
        can_pop.notify_one();
      } catch (...) {
        std::lock_guard lock(mu);
        ++failed_calls;
        if (options.halt_on_error) {
          if (!failure) failure = std::current_exception();
          stop.store(true);
          can_push.notify_all();
          can_pop.notify_all();
        }
      }
    }
    std::lock_guard lock(mu);
    --producers_left;
    can_pop.notify_all();
  };

  std::vector<std::thread> threads;
  const std::size_t n_threads = producers_left;
  threads.reserve(n_threads);
  for (std::size_t i = 0; i < n_threads; ++i) threads.emplace_back(producer);

  // Scoring runs on this thread while producers keep generating.
  std::exception_ptr scoring_failure;
  while (true) {
    Generated item;
    {
      std::unique_lock lock(mu);
      can_pop.wait(lock, [&] { return !queue.empty() || producers_left == 0 || stop.load(); });
      if (queue.empty()) {
        if (producers_left == 0 || stop.load()) break;
        continue;
      }
      item = std::move(queue.front());
      queue.pop_front();
      can_push.notify_one();
    }
    try {
      const auto& prompt = prompts[item.job / per];
      Scored s;
      s.present = true;
      s.trajectory = Trajectory::make(prompt.messages, std::move(item.text), tokenizer);
      s.reward = env.score(s.trajectory, prompt.task);
      slots[item.job] = std::move(s);
    } catch (...) {
      std::lock_guard lock(mu);
      scoring_failure = std::current_exception();
      stop.store(true);
      can_push.notify_all();
      break;
    }
  }
  for (auto& t : threads) t.join();
  if (failure) std::rethrow_exception(failure);
  if (scoring_failure) std::rethrow_exception(scoring_failure);

  RejectionResult result;
  result.stats.failed_calls = failed_calls;
  for (std::size_t p = 0; p < prompts.size(); ++p) {
    std::set<std::string> seen;
    std::size_t kept = 0;
    for (std::size_t s = 0; s < per; ++s) {
      auto& slot = slots[p * per + s];
      if (!slot.present) continue;
      ++result.stats.generated;
      if (slot.reward.reward != 1.0) continue;
      ++result.stats.rewarded;
      if (slot.trajectory.token_count > options.token_budget) {
        ++result.stats.over_budget;
        continue;
      }
      if (!seen.insert(text::normalize_whitespace(slot.trajectory.generation)).second) {
        ++result.stats.duplicates;
        continue;
      }
      if (kept >= options.retain_cap) {
        ++result.stats.capped;
        continue;
      }
      ++kept;
      result.accepted.push_back({prompts[p].id, static_cast<int>(s), std::move(slot.trajectory),
                                 std::move(slot.reward)});
    }
  }
  result.stats.accepted = result.accepted.size();
  return result;
}

}  // namespace synthforge
