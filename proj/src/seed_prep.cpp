#include "synthforge/seed_prep.hpp"

#include <httplib.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "synthforge/errors.hpp"
#include "synthforge/hashing.hpp"
#include "synthforge/rng.hpp"
#include "synthforge/text.hpp"

namespace synthforge {

using nlohmann::json;

json SeedPassage::to_json() const {
  return {{"id", id}, {"text", text}, {"source_tag", source_tag}, {"recency_weight", recency_weight}};
}

SeedPassage SeedPassage::from_json(const json& j) {
  SeedPassage p;
  p.id = j.at("id").get<std::string>();
  p.text = j.at("text").get<std::string>();
  p.source_tag = j.value("source_tag", std::string{});
  p.recency_weight = j.value("recency_weight", 0.0);
  return p;
}

std::vector<SeedPassage> clean_passages(std::vector<SeedPassage> corpus) {
  std::vector<SeedPassage> out;
  out.reserve(corpus.size());
  for (auto& p : corpus) {
    if (p.recency_weight < 0.0 || !std::isfinite(p.recency_weight)) {
      throw Error(ErrorCode::kInvalidArgument, "passage '" + p.id + "' has a negative recency weight");
    }
    p.text = text::normalize_whitespace(p.text);
    if (!p.text.empty()) out.push_back(std::move(p));
  }
  return out;
}

std::vector<SeedPassage> read_seed_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  std::vector<SeedPassage> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    try {
      out.push_back(SeedPassage::from_json(json::parse(line)));
    } catch (const json::exception& ex) {
      throw Error(ErrorCode::kIoError,
                  path.string() + ":" + std::to_string(lineno) + ": " + ex.what());
    }
  }
  return out;
}

void write_seed_corpus(std::span<const SeedPassage> corpus, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  for (const auto& p : corpus) out << p.to_json().dump() << '\n';
  if (!out) throw Error(ErrorCode::kIoError, "write failed for " + path.string());
}

std::string_view to_string(DropReason reason) {
  switch (reason) {
    case DropReason::kIncomplete: return "incomplete";
    case DropReason::kIllFormatted: return "ill-formatted";
    case DropReason::kOther: return "other";
  }
  return "other";
}

DropReason parse_drop_reason(std::string_view name) {
  const std::string n = text::to_lower(text::trim(name));
  if (n.rfind("incomplete", 0) == 0) return DropReason::kIncomplete;
  if (n.rfind("ill-formatted", 0) == 0 || n.rfind("ill_formatted", 0) == 0 ||
      n.rfind("ill formatted", 0) == 0) {
    return DropReason::kIllFormatted;
  }
  return DropReason::kOther;
}

QualityDecision quality_filter(const SeedPassage& passage, const NodeSpec& judge,
                               Gateway& gateway) {
  if (!judge.prompt || !judge.model_role) {
    throw Error(ErrorCode::kConfigInvalid, "quality judge needs a prompt and a model role");
  }
  const std::map<std::string, std::string> values{{"passage", passage.text}};
  CompletionRequest req;
  req.model_role = *judge.model_role;
  if (!judge.prompt->system.empty()) {
    req.messages.push_back({Role::kSystem, render_template(judge.prompt->system, values)});
  }
  req.messages.push_back({Role::kUser, render_template(judge.prompt->user, values)});
  if (judge.generator.sampling) req.sampling = *judge.generator.sampling;
  const auto reply = gateway.complete(req);

  QualityDecision d;
  const std::string_view body = text::strip_code_fence(reply.text);
  try {
    const auto j = json::parse(body);
    if (j.is_object() && j.contains("keep") && j["keep"].is_boolean()) {
      d.keep = j["keep"].get<bool>();
      if (!d.keep) d.reason = parse_drop_reason(j.value("reason", std::string{}));
      d.detail = j.value("detail", std::string{});
      return d;
    }
  } catch (const json::exception&) {
  }
  const std::string lower = text::to_lower(text::trim(body));
  if (lower.rfind("keep", 0) == 0) {
    d.keep = true;
  } else if (lower.rfind("drop", 0) == 0) {
    d.keep = false;
    std::string_view rest = std::string_view(lower).substr(4);
    while (!rest.empty() && (rest.front() == ':' || rest.front() == ' ' || rest.front() == '(')) {
      rest.remove_prefix(1);
    }
    d.reason = parse_drop_reason(rest);
  } else {
    throw Error(ErrorCode::kMalformedResponse, "quality judge answered neither keep nor drop");
  }
  d.detail = std::string(text::trim(body));
  return d;
}

std::vector<std::vector<double>> HashingEmbedder::embed(std::span<const std::string> texts) {
  std::vector<std::vector<double>> out;
  out.reserve(texts.size());
  for (const auto& t : texts) {
    std::vector<double> v(dimension_, 0.0);
    const std::string lower = text::to_lower(t);
    for (const auto tok : text::split_whitespace(lower)) {
      std::uint64_t h = 1469598103934665603ULL ^ salt_;
      for (unsigned char c : tok) h = (h ^ c) * 1099511628211ULL;
      h = mix64(h);
      v[h % dimension_] += (h >> 63) ? -1.0 : 1.0;
    }
    out.push_back(std::move(v));
  }
  return out;
}

HttpEmbedder::HttpEmbedder(EndpointDescriptor endpoint, std::size_t dimension,
                           std::size_t batch_size)
    : endpoint_(std::move(endpoint)), dimension_(dimension), batch_size_(std::max<std::size_t>(batch_size, 1)) {}

std::vector<std::vector<double>> HttpEmbedder::embed(std::span<const std::string> texts) {
  httplib::Client client(endpoint_.base_url);
  client.set_connection_timeout(endpoint_.timeout);
  client.set_read_timeout(endpoint_.timeout);
  httplib::Headers headers;
  if (!endpoint_.api_key.empty()) headers.emplace("Authorization", "Bearer " + endpoint_.api_key);
  std::vector<std::vector<double>> out;
  for (std::size_t start = 0; start < texts.size(); start += batch_size_) {
    const auto count = std::min(batch_size_, texts.size() - start);
    json body = {{"model", endpoint_.model},
                 {"input", std::vector<std::string>(texts.begin() + start,
                                                    texts.begin() + start + count)}};
    auto res = client.Post("/v1/embeddings", headers, body.dump(), "application/json");
    if (!res) throw Error(ErrorCode::kEndpointUnavailable, httplib::to_string(res.error()));
    if (res->status != 200) {
      throw Error(ErrorCode::kGatewayError, "HTTP " + std::to_string(res->status) + " from embeddings");
    }
    try {
      const auto parsed = json::parse(res->body);
      std::vector<std::vector<double>> batch(count);
      for (const auto& d : parsed.at("data")) {
        const auto idx = d.value("index", std::size_t{0});
        if (idx >= count) throw Error(ErrorCode::kMalformedResponse, "embedding index out of range");
        batch[idx] = d.at("embedding").get<std::vector<double>>();
      }
      for (auto& v : batch) out.push_back(std::move(v));
    } catch (const json::exception& ex) {
      throw Error(ErrorCode::kMalformedResponse, ex.what());
    }
  }
  return out;
}

json DedupResult::duplicates_json() const {
  json j = json::object();
  for (const auto& [id, link] : duplicates) {
    j[id] = {{"representative", link.representative}, {"cosine", link.cosine}};
  }
  return j;
}

namespace {

// Row-major raw vectors with squared norms. Cosine is taken as
// dot / sqrt(|a|^2 |b|^2) so ratios that are exact in integers (9 of 10
// shared words) land exactly on the threshold. Zero vectors match nothing.
struct RowMatrix {
  std::size_t dim = 0;
  std::vector<double> data;
  std::vector<double> sq_norm;

  const double* row(std::size_t i) const { return data.data() + i * dim; }

  double cosine(std::size_t a, std::size_t b) const {
    if (sq_norm[a] == 0.0 || sq_norm[b] == 0.0) return 0.0;
    const double* x = row(a);
    const double* y = row(b);
    double s = 0.0;
    for (std::size_t k = 0; k < dim; ++k) s += x[k] * y[k];
    return s / std::sqrt(sq_norm[a] * sq_norm[b]);
  }
};

RowMatrix pack_rows(const std::vector<std::vector<double>>& vectors, std::size_t dim) {
  RowMatrix m;
  m.dim = dim;
  m.data.resize(vectors.size() * dim);
  m.sq_norm.resize(vectors.size());
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    if (vectors[i].size() != dim) {
      throw Error(ErrorCode::kInvalidArgument, "embedder returned a vector of the wrong dimension");
    }
    double sq = 0.0;
    for (double x : vectors[i]) sq += x * x;
    m.sq_norm[i] = sq;
    std::copy(vectors[i].begin(), vectors[i].end(), m.data.begin() + static_cast<std::ptrdiff_t>(i * dim));
  }
  return m;
}

class HyperplaneLsh {
 public:
  HyperplaneLsh(std::size_t dim, const DedupOptions& options)
      : dim_(dim), bits_(options.lsh_bits), tables_(options.lsh_tables) {
    if (bits_ < 1 || bits_ > 30 || tables_ < 1) {
      throw Error(ErrorCode::kConfigInvalid, "lsh_bits must be in [1,30] and lsh_tables >= 1");
    }
    Rng rng(options.lsh_seed);
    std::normal_distribution<double> gauss;
    planes_.resize(static_cast<std::size_t>(bits_ * tables_) * dim_);
    for (auto& p : planes_) p = gauss(rng);
    buckets_.resize(tables_);
  }

  std::vector<std::uint32_t> signature(const double* v) const {
    std::vector<std::uint32_t> sig(tables_, 0);
    for (int t = 0; t < tables_; ++t) {
      for (int b = 0; b < bits_; ++b) {
        const double* plane = planes_.data() + static_cast<std::size_t>(t * bits_ + b) * dim_;
        double s = 0.0;
        for (std::size_t k = 0; k < dim_; ++k) s += plane[k] * v[k];
        if (s >= 0.0) sig[t] |= (1u << b);
      }
    }
    return sig;
  }

  std::vector<std::size_t> candidates(const std::vector<std::uint32_t>& sig) const {
    std::set<std::size_t> out;
    for (int t = 0; t < tables_; ++t) {
      auto it = buckets_[t].find(sig[t]);
      if (it != buckets_[t].end()) out.insert(it->second.begin(), it->second.end());
    }
    return {out.begin(), out.end()};
  }

  void insert(const std::vector<std::uint32_t>& sig, std::size_t slot) {
    for (int t = 0; t < tables_; ++t) buckets_[t][sig[t]].push_back(slot);
  }

 private:
  std::size_t dim_;
  int bits_;
  int tables_;
  std::vector<double> planes_;
  std::vector<std::map<std::uint32_t, std::vector<std::size_t>>> buckets_;
};

}  // namespace

DedupResult semantic_dedup(std::span<const SeedPassage> corpus, Embedder& embedder,
                           const DedupOptions& options) {
  {
    std::set<std::string> ids;
    for (const auto& p : corpus) {
      if (!ids.insert(p.id).second) {
        throw Error(ErrorCode::kInvalidArgument, "duplicate passage id '" + p.id + "'");
      }
    }
  }
  std::vector<std::size_t> order(corpus.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return corpus[a].recency_weight > corpus[b].recency_weight;
  });

  std::vector<std::string> texts;
  texts.reserve(order.size());
  for (auto i : order) texts.push_back(corpus[i].text);
  const auto vectors = embedder.embed(texts);
  if (vectors.size() != texts.size()) {
    throw Error(ErrorCode::kInvalidArgument, "embedder returned the wrong number of vectors");
  }
  const RowMatrix rows = pack_rows(vectors, embedder.dimension());

  DedupResult result;
  std::vector<std::size_t> kept;  // indices into `rows`, in retention order
  std::optional<HyperplaneLsh> lsh;
  if (options.index == DedupIndex::kLsh) lsh.emplace(rows.dim, options);

  for (std::size_t r = 0; r < order.size(); ++r) {
    std::optional<std::size_t> match;
    double match_cos = 0.0;
    std::vector<std::uint32_t> sig;
    if (lsh) {
      sig = lsh->signature(rows.row(r));
      for (auto slot : lsh->candidates(sig)) {
        const double c = rows.cosine(r, kept[slot]);
        if (c >= options.threshold) {
          match = slot;
          match_cos = c;
          break;
        }
      }
    } else {
      for (std::size_t slot = 0; slot < kept.size(); ++slot) {
        const double c = rows.cosine(r, kept[slot]);
        if (c >= options.threshold) {
          match = slot;
          match_cos = c;
          break;
        }
      }
    }
    const SeedPassage& p = corpus[order[r]];
    if (match) {
      result.duplicates[p.id] = {corpus[order[kept[*match]]].id, match_cos};
    } else {
      if (lsh) lsh->insert(sig, kept.size());
      kept.push_back(r);
      result.retained.push_back(p);
    }
  }
  return result;
}

}  // namespace synthforge
