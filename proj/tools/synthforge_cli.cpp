// synthforge command-line driver.
//
//   synthforge validate --config run.json
//   synthforge validate --graphs graphs.json
//   synthforge all --config run.json --mode replay --store calls.jsonl
//
// Endpoint credentials come only from the environment variables named in the
// config's models section.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "synthforge/config.hpp"
#include "synthforge/errors.hpp"
#include "synthforge/pipeline.hpp"

namespace sf = synthforge;

namespace {

struct CommonFlags {
  std::string config;
  std::vector<std::string> endpoints;
  std::vector<std::string> models;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> concurrency;
  std::optional<std::string> mode;
  std::optional<std::string> store;
  std::optional<std::string> out;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("-c,--config", f.config, "Run config file")->required()->check(CLI::ExistingFile);
  cmd->add_option("--endpoint", f.endpoints, "Endpoint base URL per role, role=url");
  cmd->add_option("--model", f.models, "Model name per role, role=name");
  cmd->add_option("--seed", f.seed, "Master seed");
  cmd->add_option("--concurrency", f.concurrency, "In-flight completion limit and worker count");
  cmd->add_option("--mode", f.mode, "Transport mode")->check(CLI::IsMember({"live", "rules", "record", "replay"}));
  cmd->add_option("--store", f.store, "Record/replay log");
  cmd->add_option("-o,--out", f.out, "Output directory");
}

sf::RunConfig load(const CommonFlags& f) {
  auto config = sf::RunConfig::load(f.config);
  sf::ConfigOverrides o;
  o.endpoints = f.endpoints;
  o.models = f.models;
  o.seed = f.seed;
  o.concurrency = f.concurrency;
  o.mode = f.mode;
  if (f.store) o.store = *f.store;
  if (f.out) o.out = *f.out;
  sf::apply_overrides(config, o);
  return config;
}

int report_error(const sf::Error& e) {
  std::cerr << "synthforge: " << e.what() << '\n';
  return e.code() == sf::ErrorCode::kConfigInvalid || e.code() == sf::ErrorCode::kInvalidGraph ||
                 e.code() == sf::ErrorCode::kSameModelRole
             ? 2
             : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Graph-driven synthetic data pipeline"};
  app.require_subcommand(1);

  CommonFlags validate_flags;
  std::string graphs_file;
  auto* validate = app.add_subcommand("validate", "Check a run config or a graph file without running anything");
  validate->add_option("-c,--config", validate_flags.config, "Run config file")->check(CLI::ExistingFile);
  validate->add_option("--graphs", graphs_file, "Standalone graph file")->check(CLI::ExistingFile);
  validate->add_option("--endpoint", validate_flags.endpoints);
  validate->add_option("--model", validate_flags.models);

  struct StageCmd {
    std::string name;
    CLI::App* cmd;
    CommonFlags flags;
  };
  std::vector<StageCmd> stages;
  stages.reserve(6);
  for (const char* name : {"dedup", "generate", "sample", "budget", "pack", "all"}) {
    stages.push_back({name, nullptr, {}});
  }
  for (auto& s : stages) {
    s.cmd = app.add_subcommand(s.name, s.name == "all" ? "Run every configured stage" : "Run the " + s.name + " stage");
    add_common(s.cmd, s.flags);
  }

  CLI11_PARSE(app, argc, argv);

  try {
    if (validate->parsed()) {
      if (!graphs_file.empty()) {
        std::ifstream in(graphs_file);
        const auto j = nlohmann::json::parse(in);
        std::filesystem::path base = std::filesystem::path(graphs_file).parent_path();
        const auto table = sf::load_graphs(j.contains("graphs") ? j["graphs"] : j, base.empty() ? "." : base);
        for (const auto& [name, g] : table) {
          std::cout << name << ": " << g->nodes().size() << " nodes, " << g->edges().size() << " edges\n";
        }
      }
      if (!validate_flags.config.empty()) {
        auto config = load(validate_flags);
        config.validate();
        std::cout << "config ok, hash " << config.hash() << '\n';
      }
      if (graphs_file.empty() && validate_flags.config.empty()) {
        std::cerr << "validate needs --config or --graphs\n";
        return 2;
      }
      return 0;
    }
    for (auto& s : stages) {
      if (!s.cmd->parsed()) continue;
      const auto config = load(s.flags);
      const auto manifest = sf::run_pipeline(config, sf::parse_stages(s.name));
      std::cout << manifest.to_json().dump(2) << '\n';
      return 0;
    }
  } catch (const sf::Error& e) {
    return report_error(e);
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "synthforge: bad JSON: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "synthforge: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
