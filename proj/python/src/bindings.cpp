// Python bindings. Structured values cross the boundary as JSON text; the
// package's __init__ turns them into Python objects.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <json.hpp>

#include "synthforge/config.hpp"
#include "synthforge/errors.hpp"
#include "synthforge/graph_spec.hpp"
#include "synthforge/hashing.hpp"
#include "synthforge/length_budget.hpp"
#include "synthforge/packer.hpp"
#include "synthforge/pipeline.hpp"
#include "synthforge/schema.hpp"
#include "synthforge/seed_prep.hpp"
#include "synthforge/verifiers.hpp"

namespace py = pybind11;
namespace sf = synthforge;
using nlohmann::json;

namespace {

PyObject* error_type = nullptr;

json parse(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw sf::Error(sf::ErrorCode::kInvalidArgument, std::string("bad JSON: ") + e.what());
  }
}

std::string graphs(const std::string& spec, const std::string& base_dir) {
  const auto table = sf::load_graphs(parse(spec), base_dir, false);
  json out = json::object();
  for (const auto& [name, g] : table) {
    json edges = json::array();
    for (const auto& e : g->edges()) edges.push_back({e.from, e.to});
    json entry{{"valid", g->valid()}, {"edges", edges}, {"report", g->report().describe()}};
    if (g->valid()) {
      entry["source"] = g->source().id;
      entry["target"] = g->target().id;
    }
    out[name] = entry;
  }
  return out.dump();
}

std::string dedup(const std::string& passages, double threshold, std::size_t dimension) {
  std::vector<sf::SeedPassage> corpus;
  for (const auto& p : parse(passages)) corpus.push_back(sf::SeedPassage::from_json(p));
  sf::HashingEmbedder embedder(dimension);
  sf::DedupOptions opts;
  opts.threshold = threshold;
  const auto result = sf::semantic_dedup(corpus, embedder, opts);
  json retained = json::array();
  for (const auto& p : result.retained) retained.push_back(p.id);
  return json{{"retained", retained}, {"duplicates", result.duplicates_json()}}.dump();
}

std::string pack(const std::vector<std::int64_t>& lengths, std::int64_t capacity) {
  json bins = json::array();
  for (const auto& b : sf::pack_ffd(lengths, capacity)) bins.push_back(sf::to_json(b));
  return bins.dump();
}

double efficiency(const std::string& bins) {
  std::vector<sf::PackedBin> parsed;
  for (const auto& b : parse(bins)) parsed.push_back(sf::packed_bin_from_json(b));
  return sf::packing_efficiency(parsed);
}

py::dict split(const std::string& generation) {
  const auto s = sf::split_reasoning(generation);
  py::dict d;
  d["ok"] = s.ok;
  d["reasoning"] = std::string(s.reasoning);
  d["answer"] = std::string(s.answer);
  d["detail"] = s.detail;
  return d;
}

std::string answer_format(const std::string& generation, const std::string& format) {
  sf::Trajectory t;
  t.generation = generation;
  return sf::verify_answer_format(t, format).to_json().dump();
}

std::string schema(const std::string& candidate, const std::string& schema_json, std::size_t max_chars) {
  sf::LengthPenalty penalty;
  penalty.max_chars = max_chars;
  return sf::verify_schema(candidate, sf::SchemaSpec::from_json_schema(parse(schema_json)), penalty).to_json().dump();
}

std::string termination(const std::string& text, const std::string& finish, std::int64_t budget) {
  const sf::WhitespaceTokenizer tok;
  return std::string(sf::to_string(sf::classify_termination({text, sf::parse_finish_reason(finish)}, budget, tok)));
}

double overlong(const std::vector<std::string>& generations, std::int64_t limit) {
  const sf::WhitespaceTokenizer tok;
  return sf::overlong_rate(generations, limit, tok);
}

std::string validate_config(const std::string& path) {
  const auto c = sf::RunConfig::load(path);
  c.validate();
  return c.hash();
}

std::string run(const std::string& path, const std::string& stage, const std::string& out) {
  auto c = sf::RunConfig::load(path);
  if (!out.empty()) c.output_dir = out;
  sf::RunManifest m;
  {
    py::gil_scoped_release release;
    m = sf::run_pipeline(c, sf::parse_stages(stage));
  }
  return m.to_json().dump();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "synthforge native core";

  // Module-lifetime reference; never released so the type outlives teardown.
  error_type = PyErr_NewException("synthforge._core.SynthforgeError", PyExc_RuntimeError, nullptr);
  m.attr("SynthforgeError") = py::handle(error_type);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const sf::Error& e) {
      py::object exc = py::handle(error_type)(e.what());
      exc.attr("code") = std::string(sf::to_string(e.code()));
      PyErr_SetObject(error_type, exc.ptr());
    }
  });

  m.def("graphs", &graphs, py::arg("spec"), py::arg("base_dir") = ".");
  m.def("dedup", &dedup, py::arg("passages"), py::arg("threshold") = 0.7, py::arg("dimension") = 256);
  m.def("pack", &pack, py::arg("lengths"), py::arg("capacity") = sf::kDefaultPackCapacity);
  m.def("efficiency", &efficiency, py::arg("bins"));
  m.def("split_reasoning", &split, py::arg("generation"));
  m.def("verify_answer_format", &answer_format, py::arg("generation"), py::arg("format"));
  m.def("format_ids", [] { return sf::FormatRegistry::builtin().ids(); });
  m.def("verify_schema", &schema, py::arg("candidate"), py::arg("schema"), py::arg("max_chars") = 0);
  m.def("classify_termination", &termination, py::arg("text"), py::arg("finish_reason"), py::arg("budget"));
  m.def("overlong_rate", &overlong, py::arg("generations"), py::arg("limit"));
  m.def("validate_config", &validate_config, py::arg("path"));
  m.def("run", &run, py::arg("config"), py::arg("stage") = "all", py::arg("out") = "");
  m.def("sha256", [](const std::string& data) { return sf::sha256_hex(data); }, py::arg("data"));
}
