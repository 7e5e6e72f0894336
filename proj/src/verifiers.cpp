#include "synthforge/verifiers.hpp"

#include <algorithm>
#include <cctype>
#include <regex>
#include <set>

#include "synthforge/errors.hpp"
#include "synthforge/text.hpp"

namespace synthforge {

using nlohmann::json;

Trajectory Trajectory::make(Messages prompt, std::string generation, const Tokenizer& tokenizer) {
  Trajectory t;
  t.prompt = std::move(prompt);
  t.token_count = static_cast<std::int64_t>(tokenizer.count(generation));
  const auto split = split_reasoning(generation);
  if (split.ok) t.think_span = std::make_pair(split.open, split.close_end);
  t.generation = std::move(generation);
  return t;
}

ReasoningSplit split_reasoning(std::string_view g) {
  ReasoningSplit s;
  std::size_t start = 0;
  while (start < g.size() && std::isspace(static_cast<unsigned char>(g[start]))) ++start;
  if (g.substr(start, kThinkOpen.size()) != kThinkOpen) {
    s.detail = "generation does not open with the reasoning tag";
    return s;
  }
  if (text::count_occurrences(g, kThinkOpen) != 1) {
    s.detail = "more than one opening reasoning tag";
    return s;
  }
  const auto close = g.find(kThinkClose);
  if (close == std::string_view::npos) {
    s.detail = "missing closing reasoning tag";
    return s;
  }
  if (text::count_occurrences(g, kThinkClose) != 1) {
    s.detail = "more than one closing reasoning tag";
    return s;
  }
  const auto body_begin = start + kThinkOpen.size();
  s.open = start;
  s.close_end = close + kThinkClose.size();
  s.reasoning = g.substr(body_begin, close - body_begin);
  s.answer = text::trim(g.substr(s.close_end));
  if (s.answer.empty()) {
    s.detail = "empty answer after reasoning";
    return s;
  }
  s.ok = true;
  return s;
}

std::string_view answer_segment(std::string_view generation) {
  const auto close = generation.rfind(kThinkClose);
  if (close == std::string_view::npos) return text::trim(generation);
  return text::trim(generation.substr(close + kThinkClose.size()));
}

// ----------------------------------------------------------------- CSV

std::optional<std::vector<std::vector<std::string>>> parse_csv(std::string_view s, char delim) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  std::size_t i = 0;
  bool at_field_start = true;
  auto end_record = [&] {
    row.push_back(std::move(field));
    field.clear();
    rows.push_back(std::move(row));
    row.clear();
    at_field_start = true;
  };
  if (s.empty()) return rows;
  while (i < s.size()) {
    const char c = s[i];
    if (at_field_start && c == '"') {
      ++i;
      bool closed = false;
      while (i < s.size()) {
        if (s[i] == '"') {
          if (i + 1 < s.size() && s[i + 1] == '"') {
            field += '"';
            i += 2;
            continue;
          }
          closed = true;
          ++i;
          break;
        }
        field += s[i++];
      }
      if (!closed) return std::nullopt;
      // After a closing quote only a delimiter or record end may follow.
      if (i < s.size() && s[i] != delim && s[i] != '\n' && s[i] != '\r') return std::nullopt;
      at_field_start = false;
      continue;
    }
    if (c == delim) {
      row.push_back(std::move(field));
      field.clear();
      at_field_start = true;
      ++i;
    } else if (c == '\r' || c == '\n') {
      if (c == '\r') {
        if (i + 1 >= s.size() || s[i + 1] != '\n') return std::nullopt;
        ++i;
      }
      ++i;
      end_record();
    } else {
      if (c == '"') return std::nullopt;  // quote inside an unquoted field
      field += c;
      at_field_start = false;
      ++i;
    }
  }
  // A trailing line break does not open an empty record.
  if (!at_field_start || !row.empty() || !field.empty()) end_record();
  return rows;
}

// ------------------------------------------------------------- formats

namespace {

std::vector<std::string_view> nonempty_lines(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    auto nl = s.find('\n', pos);
    if (nl == std::string_view::npos) nl = s.size();
    auto line = text::trim(s.substr(pos, nl - pos));
    if (!line.empty()) out.push_back(line);
    pos = nl + 1;
  }
  return out;
}

FormatCheck pass() { return {true, ""}; }
FormatCheck fail(std::string why) { return {false, std::move(why)}; }

std::optional<json> parse_json_body(std::string_view answer) {
  try {
    return json::parse(text::strip_code_fence(answer));
  } catch (const json::exception&) {
    return std::nullopt;
  }
}

bool has_letter(std::string_view s) {
  return std::any_of(s.begin(), s.end(), [](unsigned char c) { return std::isalpha(c); });
}

FormatCheck check_boxed(std::string_view a) {
  const auto pos = a.rfind("\\boxed{");
  if (pos == std::string_view::npos) return fail("no \\boxed{} span");
  int depth = 0;
  std::size_t i = pos + 6;
  for (; i < a.size(); ++i) {
    if (a[i] == '{') ++depth;
    if (a[i] == '}' && --depth == 0) break;
  }
  if (i >= a.size()) return fail("unbalanced \\boxed{} span");
  if (text::trim(a.substr(pos + 7, i - pos - 7)).empty()) return fail("empty \\boxed{} span");
  return pass();
}

FormatCheck check_delimited(std::string_view a, char delim, const char* name) {
  auto rows = parse_csv(text::trim(a), delim);
  if (!rows) return fail(std::string(name) + " does not parse");
  if (rows->size() < 2) return fail(std::string(name) + " needs a header and a data row");
  const auto width = rows->front().size();
  if (width < 2) return fail(std::string(name) + " needs at least two columns");
  for (const auto& r : *rows) {
    if (r.size() != width) return fail(std::string(name) + " rows differ in width");
  }
  return pass();
}

FormatCheck check_tag_pair(std::string_view a, std::string_view open, std::string_view close) {
  if (text::count_occurrences(a, open) != 1 || text::count_occurrences(a, close) != 1) {
    return fail("expected exactly one " + std::string(open) + " span");
  }
  const auto o = a.find(open);
  const auto c = a.find(close);
  if (c < o) return fail("tags out of order");
  if (text::trim(a.substr(o + open.size(), c - o - open.size())).empty()) return fail("empty span");
  return pass();
}

FormatCheck check_markdown_table(std::string_view a) {
  const auto lines = nonempty_lines(a);
  if (lines.size() < 3) return fail("table needs header, separator and a row");
  static const std::regex sep_cell(R"(\s*:?-{3,}:?\s*)");
  std::size_t width = 0;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto line = lines[i];
    if (line.front() != '|' || line.back() != '|' || line.size() < 2) return fail("row not fenced by pipes");
    std::vector<std::string> cells;
    std::string cur;
    for (std::size_t k = 1; k + 1 < line.size(); ++k) {
      if (line[k] == '|') {
        cells.push_back(cur);
        cur.clear();
      } else {
        cur += line[k];
      }
    }
    cells.push_back(cur);
    if (i == 0) width = cells.size();
    if (cells.size() != width) return fail("rows differ in width");
    if (i == 1) {
      for (const auto& c : cells) {
        if (!std::regex_match(c, sep_cell)) return fail("bad separator row");
      }
    }
  }
  return pass();
}

FormatCheck check_bullets(std::string_view a) {
  const auto lines = nonempty_lines(a);
  if (lines.size() < 2) return fail("need at least two bullets");
  for (auto l : lines) {
    if (!(text::starts_with(l, "- ") || text::starts_with(l, "* "))) return fail("non-bullet line");
  }
  return pass();
}

FormatCheck check_numbered(std::string_view a) {
  const auto lines = nonempty_lines(a);
  if (lines.size() < 2) return fail("need at least two items");
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto prefix = std::to_string(i + 1) + ". ";
    if (!text::starts_with(lines[i], prefix) || text::trim(lines[i].substr(prefix.size())).empty()) {
      return fail("item " + std::to_string(i + 1) + " misnumbered");
    }
  }
  return pass();
}

// Minimal well-formedness: balanced start/end tags, a single root element,
// no stray text outside it. Attributes and self-closing tags are accepted.
FormatCheck check_xml(std::string_view a) {
  a = text::strip_code_fence(a);
  static const std::regex name_re(R"([A-Za-z_][\w.\-]*)");
  std::vector<std::string> stack;
  int roots = 0;
  std::size_t i = 0;
  while (i < a.size()) {
    if (a[i] != '<') {
      if (stack.empty() && !std::isspace(static_cast<unsigned char>(a[i]))) return fail("text outside root");
      ++i;
      continue;
    }
    const auto close = a.find('>', i);
    if (close == std::string_view::npos) return fail("unterminated tag");
    std::string_view tag = a.substr(i + 1, close - i - 1);
    i = close + 1;
    if (text::starts_with(tag, "?") || text::starts_with(tag, "!")) continue;
    if (text::starts_with(tag, "/")) {
      const std::string name(text::trim(tag.substr(1)));
      if (stack.empty() || stack.back() != name) return fail("mismatched end tag </" + name + ">");
      stack.pop_back();
      continue;
    }
    const bool self_closing = text::ends_with(tag, "/");
    if (self_closing) tag.remove_suffix(1);
    const auto sp = tag.find_first_of(" \t\r\n");
    const std::string name(tag.substr(0, sp));
    if (!std::regex_match(name, name_re)) return fail("bad tag name");
    if (stack.empty()) ++roots;
    if (!self_closing) stack.push_back(name);
  }
  if (!stack.empty()) return fail("unclosed <" + stack.back() + ">");
  if (roots != 1) return fail("expected a single root element");
  return pass();
}

FormatCheck check_code_block(std::string_view a) {
  const auto open = a.find("```");
  if (open == std::string_view::npos) return fail("no fenced block");
  const auto close = a.find("```", open + 3);
  if (close == std::string_view::npos) return fail("fenced block not closed");
  return pass();
}

FormatCheck check_final_answer_line(std::string_view a) {
  const auto lines = nonempty_lines(a);
  if (lines.empty()) return fail("empty answer");
  const auto last = lines.back();
  if (!text::starts_with(last, "Final Answer:")) return fail("last line lacks 'Final Answer:'");
  if (text::trim(last.substr(13)).empty()) return fail("empty final answer");
  return pass();
}

FormatCheck check_case(std::string_view a, bool upper) {
  if (!has_letter(a)) return fail("no letters");
  for (unsigned char c : a) {
    if (upper ? std::islower(c) : std::isupper(c)) return fail(upper ? "lowercase letter present" : "uppercase letter present");
  }
  return pass();
}

FormatCheck check_wrapped(std::string_view a, std::string_view open, std::string_view close) {
  a = text::trim(a);
  if (a.size() < open.size() + close.size() || !text::starts_with(a, open) || !text::ends_with(a, close)) {
    return fail("not wrapped in " + std::string(open) + std::string(close));
  }
  if (text::trim(a.substr(open.size(), a.size() - open.size() - close.size())).empty()) return fail("empty body");
  return pass();
}

FormatCheck check_single_line(std::string_view a) {
  return nonempty_lines(a).size() == 1 ? pass() : fail("expected a single line");
}

FormatCheck check_title(std::string_view a) {
  const auto lines = nonempty_lines(a);
  if (lines.empty()) return fail("empty answer");
  static const std::regex title_re(R"(^<<[^<>]*[^<>\s][^<>]*>>)");
  const std::string first(lines.front());
  if (!std::regex_search(first, title_re)) return fail("no <<title>> on first line");
  return pass();
}

FormatCheck check_tsv(std::string_view a) {
  const auto lines = nonempty_lines(a);
  if (lines.size() < 2) return fail("tsv needs a header and a data row");
  std::size_t width = 0;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto cols = static_cast<std::size_t>(std::count(lines[i].begin(), lines[i].end(), '\t')) + 1;
    if (i == 0) width = cols;
    if (cols < 2 || cols != width) return fail("tsv rows differ in width");
  }
  return pass();
}

FormatCheck check_choice_letter(std::string_view a) {
  static const std::regex re(R"(^\(?[A-E]\)?$)");
  const std::string s(text::trim(a));
  return std::regex_match(s, re) ? pass() : fail("not a single choice letter");
}

FormatCheck check_semicolon_list(std::string_view a) {
  if (nonempty_lines(a).size() != 1) return fail("expected one line");
  std::size_t items = 0;
  std::size_t pos = 0;
  const auto s = text::trim(a);
  while (pos <= s.size()) {
    auto semi = s.find(';', pos);
    if (semi == std::string_view::npos) semi = s.size();
    if (text::trim(s.substr(pos, semi - pos)).empty()) return fail("empty item");
    ++items;
    pos = semi + 1;
  }
  return items >= 2 ? pass() : fail("need at least two items");
}

FormatCheck check_paragraph_tags(std::string_view a) {
  std::string_view s = text::trim(a);
  int blocks = 0;
  while (!s.empty()) {
    if (!text::starts_with(s, "<p>")) return fail("content outside <p> blocks");
    const auto end = s.find("</p>");
    if (end == std::string_view::npos) return fail("unclosed <p>");
    if (text::trim(s.substr(3, end - 3)).empty()) return fail("empty paragraph");
    ++blocks;
    s = text::trim(s.substr(end + 4));
  }
  return blocks > 0 ? pass() : fail("no paragraphs");
}

FormatCheck check_sections(std::string_view a) {
  const auto lines = nonempty_lines(a);
  int next = 1;
  for (auto l : lines) {
    if (text::starts_with(l, "SECTION ")) {
      if (l.substr(8) != std::to_string(next) && !text::starts_with(l.substr(8), std::to_string(next) + " ") &&
          !text::starts_with(l.substr(8), std::to_string(next) + ":")) {
        return fail("section numbering out of order");
      }
      ++next;
    }
  }
  if (next < 3) return fail("need at least two sections");
  if (lines.empty() || !text::starts_with(lines.front(), "SECTION ")) return fail("text before first section");
  return pass();
}

FormatCheck check_key_value(std::string_view a) {
  static const std::regex re(R"(^[A-Za-z_][\w \-]*:\s*\S.*$)");
  const auto lines = nonempty_lines(a);
  if (lines.empty()) return fail("empty answer");
  for (auto l : lines) {
    if (!std::regex_match(std::string(l), re)) return fail("line is not key: value");
  }
  return pass();
}

FormatRegistry make_builtin_formats() {
  FormatRegistry r;
  auto add = [&](std::string id, std::string instruction, std::function<FormatCheck(std::string_view)> f) {
    r.add({std::move(id), std::move(instruction), std::move(f)});
  };
  add("boxed", "Put the final answer inside \\boxed{}.", check_boxed);
  add("csv", "Give the answer as CSV with a header row.",
      [](std::string_view a) { return check_delimited(a, ',', "csv"); });
  add("tsv", "Give the answer as tab-separated columns with a header row.", check_tsv);
  add("answer-tags", "Wrap the final answer in <answer></answer>.",
      [](std::string_view a) { return check_tag_pair(a, "<answer>", "</answer>"); });
  add("json-object", "Answer with a single JSON object.", [](std::string_view a) {
    auto j = parse_json_body(a);
    return j && j->is_object() ? pass() : fail("not a JSON object");
  });
  add("json-array", "Answer with a JSON array.", [](std::string_view a) {
    auto j = parse_json_body(a);
    return j && j->is_array() ? pass() : fail("not a JSON array");
  });
  add("key-value", "Answer with one 'key: value' pair per line.", check_key_value);
  add("markdown-table", "Present the answer as a Markdown table.", check_markdown_table);
  add("bullet-list", "Answer with a bulleted list.", check_bullets);
  add("numbered-list", "Answer with a numbered list.", check_numbered);
  add("xml", "Answer with a single XML element.", check_xml);
  add("code-block", "Put the answer inside a fenced code block.", check_code_block);
  add("final-answer-line", "End with a line 'Final Answer: <answer>'.", check_final_answer_line);
  add("all-caps", "Write the answer in capital letters only.",
      [](std::string_view a) { return check_case(a, true); });
  add("all-lowercase", "Write the answer in lowercase letters only.",
      [](std::string_view a) { return check_case(a, false); });
  add("double-quoted", "Wrap the whole answer in double quotes.",
      [](std::string_view a) { return check_wrapped(a, "\"", "\""); });
  add("single-line", "Answer on a single line.", check_single_line);
  add("titled", "Start with a title wrapped in double angular brackets, like <<title>>.", check_title);
  add("choice-letter", "Answer with only the letter of the correct option.", check_choice_letter);
  add("latex-inline", "Give the answer as inline LaTeX between $ signs.",
      [](std::string_view a) { return check_wrapped(a, "$", "$"); });
  add("semicolon-list", "List the items on one line separated by semicolons.", check_semicolon_list);
  add("html-paragraphs", "Wrap every paragraph in <p></p>.", check_paragraph_tags);
  add("double-bracketed", "Wrap the answer in [[ ]].",
      [](std::string_view a) { return check_wrapped(a, "[[", "]]"); });
  add("sections", "Split the answer into parts headed SECTION 1, SECTION 2, and so on.", check_sections);
  return r;
}

}  // namespace

void FormatRegistry::add(FormatSpec spec) {
  if (index_.count(spec.id)) throw Error(ErrorCode::kConfigInvalid, "format '" + spec.id + "' registered twice");
  index_.emplace(spec.id, specs_.size());
  specs_.push_back(std::move(spec));
}

const FormatSpec& FormatRegistry::get(std::string_view id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw Error(ErrorCode::kUnknownFormat, "unknown format '" + std::string(id) + "'");
  return specs_[it->second];
}

bool FormatRegistry::contains(std::string_view id) const { return index_.find(id) != index_.end(); }

std::vector<std::string> FormatRegistry::ids() const {
  std::vector<std::string> out;
  for (const auto& s : specs_) out.push_back(s.id);
  return out;
}

const FormatSpec& FormatRegistry::draw(Rng& rng) const {
  if (specs_.empty()) throw Error(ErrorCode::kConfigInvalid, "empty format registry");
  return specs_[uniform_index(rng, specs_.size())];
}

const FormatRegistry& FormatRegistry::builtin() {
  static const FormatRegistry registry = make_builtin_formats();
  return registry;
}

RewardRecord verify_answer_format(const Trajectory& trajectory, std::string_view format_id,
                                  const FormatRegistry& registry) {
  const FormatSpec& spec = registry.get(format_id);
  RewardRecord r;
  r.verifier_id = "answer-format:" + spec.id;
  const auto split = split_reasoning(trajectory.generation);
  if (!split.ok) {
    r.detail = split.detail;
    return r;
  }
  const auto check = spec.check(split.answer);
  r.reward = check.ok ? 1.0 : 0.0;
  r.detail = check.detail;
  return r;
}

// --------------------------------------------------------- constraints

ConstraintInstruction ConstraintInstruction::from_json(const json& j) {
  ConstraintInstruction c;
  c.id = j.at("id").get<std::string>();
  c.params = j.value("params", json::object());
  return c;
}

std::vector<std::string> constraint_words(std::string_view s) {
  std::vector<std::string> out;
  for (auto tok : text::split_whitespace(s)) {
    std::size_t b = 0;
    std::size_t e = tok.size();
    auto punct = [](unsigned char c) { return c < 0x80 && std::ispunct(c); };
    while (b < e && punct(tok[b])) ++b;
    while (e > b && punct(tok[e - 1])) --e;
    if (b < e) out.push_back(text::to_lower(tok.substr(b, e - b)));
  }
  return out;
}

std::size_t count_sentences(std::string_view s) {
  std::size_t count = 0;
  bool content = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    if (c == '.' || c == '!' || c == '?') {
      std::size_t j = i;
      while (j < s.size() && (s[j] == '.' || s[j] == '!' || s[j] == '?')) ++j;
      const bool boundary = j == s.size() || std::isspace(static_cast<unsigned char>(s[j]));
      if (boundary) {
        if (content) ++count;
        content = false;
      }
      i = j - 1;
      continue;
    }
    if (std::isalnum(static_cast<unsigned char>(c)) || static_cast<unsigned char>(c) >= 0x80) content = true;
  }
  if (content) ++count;
  return count;
}

bool is_french_word(std::string_view w) {
  static const std::set<std::string, std::less<>> lexicon = {
      "le", "la", "les", "un", "une", "des", "et", "est", "dans", "pour", "avec", "sur", "pas",
      "que", "qui", "nous", "vous", "ils", "elles", "je", "tu", "il", "elle", "son", "sa", "ses",
      "mon", "ma", "mes", "ton", "ta", "tes", "leur", "leurs", "ce", "cette", "ces", "du", "au",
      "aux", "mais", "ou", "donc", "car", "ni", "très", "bien", "bonjour", "merci", "oui", "non",
      "maison", "chat", "chien", "pomme", "eau", "pain", "fromage", "vin", "soleil", "lune",
      "ciel", "mer", "jour", "nuit", "temps", "ami", "amie", "homme", "femme", "enfant", "livre",
      "école", "ville", "pays", "monde", "vie", "amour", "travail", "rouge", "bleu", "vert",
      "blanc", "noir", "grand", "petit", "beau", "belle", "nouveau", "vieux", "bon", "mauvais",
      "toujours", "jamais", "souvent", "demain", "hier", "avoir", "être", "faire", "aller",
      "voir", "savoir", "pouvoir", "vouloir", "venir", "dire", "prendre", "donner", "parler",
      "manger", "boire", "dormir", "lire", "écrire", "aussi", "encore", "déjà", "ici", "là",
      "comme", "quand", "comment", "pourquoi", "tout", "tous", "rien", "quelque", "chose",
      "fleur", "arbre", "jardin", "rue", "voiture", "musique", "chanson", "heure", "semaine",
      "année", "matin", "soir", "famille", "père", "mère", "frère", "sœur", "fille", "fils",
      "tête", "cœur", "yeux", "porte", "fenêtre", "chaise", "lit", "café", "thé", "lait",
      "sucre", "sel", "gâteau", "mot", "langue", "français", "aujourd'hui", "beaucoup", "peu",
      "avant", "après", "pendant", "sans", "sous", "chez", "entre", "vers", "parce"};
  return lexicon.count(w) != 0;
}

namespace {

int int_param(const json& p, const char* key) {
  if (!p.contains(key) || !p[key].is_number_integer()) {
    throw Error(ErrorCode::kInvalidArgument, std::string("constraint parameter '") + key + "' must be an integer");
  }
  return p[key].get<int>();
}

std::string str_param(const json& p, const char* key) {
  if (!p.contains(key) || !p[key].is_string()) {
    throw Error(ErrorCode::kInvalidArgument, std::string("constraint parameter '") + key + "' must be a string");
  }
  return p[key].get<std::string>();
}

std::vector<std::string> list_param(const json& p, const char* key) {
  if (!p.contains(key) || !p[key].is_array()) {
    throw Error(ErrorCode::kInvalidArgument, std::string("constraint parameter '") + key + "' must be a list");
  }
  return p[key].get<std::vector<std::string>>();
}

FormatCheck expect_count(std::size_t got, std::size_t want, const char* what) {
  if (got == want) return pass();
  return fail("expected " + std::to_string(want) + " " + what + ", found " + std::to_string(got));
}

std::size_t count_paragraphs(std::string_view s) {
  static const std::regex blank(R"(\n[ \t]*\n)");
  const std::string str(s);
  std::size_t n = 0;
  for (std::sregex_token_iterator it(str.begin(), str.end(), blank, -1), end; it != end; ++it) {
    if (!text::trim(it->str()).empty()) ++n;
  }
  return n;
}

ConstraintRegistry make_builtin_constraints() {
  ConstraintRegistry r;
  r.add("exact-sentences",
        {[](std::string_view s, const json& p) {
           return expect_count(count_sentences(s), static_cast<std::size_t>(int_param(p, "n")), "sentences");
         },
         [](const json& p) { return "Your reply must contain exactly " + std::to_string(int_param(p, "n")) + " sentences."; }});
  r.add("every-nth-word-french",
        {[](std::string_view s, const json& p) {
           const int n = int_param(p, "n");
           if (n < 1) throw Error(ErrorCode::kInvalidArgument, "n must be positive");
           const auto words = constraint_words(s);
           if (words.size() < static_cast<std::size_t>(n)) return fail("fewer than n words");
           for (std::size_t k = static_cast<std::size_t>(n); k <= words.size(); k += static_cast<std::size_t>(n)) {
             if (!is_french_word(words[k - 1])) {
               return fail("word " + std::to_string(k) + " ('" + words[k - 1] + "') is not French");
             }
           }
           return pass();
         },
         [](const json& p) {
           return "Every word in position " + std::to_string(int_param(p, "n")) +
                  ", " + std::to_string(2 * int_param(p, "n")) + ", ... must be a French word.";
         }});
  r.add("min-words",
        {[](std::string_view s, const json& p) {
           const auto n = constraint_words(s).size();
           return n >= static_cast<std::size_t>(int_param(p, "n")) ? pass() : fail("too few words");
         },
         [](const json& p) { return "Use at least " + std::to_string(int_param(p, "n")) + " words."; }});
  r.add("max-words",
        {[](std::string_view s, const json& p) {
           const auto n = constraint_words(s).size();
           return n <= static_cast<std::size_t>(int_param(p, "n")) ? pass() : fail("too many words");
         },
         [](const json& p) { return "Use no more than " + std::to_string(int_param(p, "n")) + " words."; }});
  r.add("exact-paragraphs",
        {[](std::string_view s, const json& p) {
           return expect_count(count_paragraphs(s), static_cast<std::size_t>(int_param(p, "n")), "paragraphs");
         },
         [](const json& p) {
           return "Write exactly " + std::to_string(int_param(p, "n")) + " paragraphs separated by blank lines.";
         }});
  r.add("include-keywords",
        {[](std::string_view s, const json& p) {
           const std::string lower = text::to_lower(s);
           for (const auto& k : list_param(p, "keywords")) {
             if (lower.find(text::to_lower(k)) == std::string::npos) return fail("missing keyword '" + k + "'");
           }
           return pass();
         },
         [](const json& p) {
           std::string out = "Mention these words:";
           for (const auto& k : list_param(p, "keywords")) out += " " + k;
           return out + ".";
         }});
  r.add("forbid-words",
        {[](std::string_view s, const json& p) {
           const auto words = constraint_words(s);
           for (const auto& k : list_param(p, "words")) {
             if (std::find(words.begin(), words.end(), text::to_lower(k)) != words.end()) {
               return fail("forbidden word '" + k + "'");
             }
           }
           return pass();
         },
         [](const json& p) {
           std::string out = "Do not use these words:";
           for (const auto& k : list_param(p, "words")) out += " " + k;
           return out + ".";
         }});
  r.add("start-with",
        {[](std::string_view s, const json& p) {
           return text::starts_with(text::to_lower(text::trim(s)), text::to_lower(str_param(p, "phrase")))
                      ? pass()
                      : fail("does not start with the phrase");
         },
         [](const json& p) { return "Begin your reply with \"" + str_param(p, "phrase") + "\"."; }});
  r.add("end-with",
        {[](std::string_view s, const json& p) {
           return text::ends_with(text::trim(s), str_param(p, "phrase")) ? pass() : fail("does not end with the phrase");
         },
         [](const json& p) { return "Finish your reply with the exact phrase \"" + str_param(p, "phrase") + "\"."; }});
  r.add("lowercase",
        {[](std::string_view s, const json&) { return check_case(s, false); },
         [](const json&) { return std::string("Write entirely in lowercase."); }});
  r.add("uppercase",
        {[](std::string_view s, const json&) { return check_case(s, true); },
         [](const json&) { return std::string("Write entirely in capital letters."); }});
  r.add("no-commas",
        {[](std::string_view s, const json&) {
           return s.find(',') == std::string_view::npos ? pass() : fail("comma present");
         },
         [](const json&) { return std::string("Do not use any commas."); }});
  r.add("exact-bullets",
        {[](std::string_view s, const json& p) {
           std::size_t n = 0;
           for (auto l : nonempty_lines(s)) {
             if (text::starts_with(l, "* ") || text::starts_with(l, "- ")) ++n;
           }
           return expect_count(n, static_cast<std::size_t>(int_param(p, "n")), "bullets");
         },
         [](const json& p) { return "Include exactly " + std::to_string(int_param(p, "n")) + " bullet points."; }});
  r.add("keyword-frequency",
        {[](std::string_view s, const json& p) {
           const auto key = text::to_lower(str_param(p, "keyword"));
           const auto words = constraint_words(s);
           const auto n = static_cast<std::size_t>(std::count(words.begin(), words.end(), key));
           const auto want = static_cast<std::size_t>(int_param(p, "n"));
           const std::string rel = p.value("relation", std::string("at-least"));
           if (rel == "at-least") return n >= want ? pass() : fail("keyword too rare");
           if (rel == "exactly") return expect_count(n, want, "keyword occurrences");
           if (rel == "less-than") return n < want ? pass() : fail("keyword too frequent");
           throw Error(ErrorCode::kInvalidArgument, "unknown relation '" + rel + "'");
         },
         [](const json& p) {
           return "Use the word \"" + str_param(p, "keyword") + "\" " + p.value("relation", std::string("at-least")) +
                  " " + std::to_string(int_param(p, "n")) + " times.";
         }});
  r.add("wrap-quotes",
        {[](std::string_view s, const json&) { return check_wrapped(s, "\"", "\""); },
         [](const json&) { return std::string("Enclose your whole reply in double quotes."); }});
  r.add("min-placeholders",
        {[](std::string_view s, const json& p) {
           static const std::regex re(R"(\[[^\[\]]+\])");
           const std::string str(s);
           const auto n = static_cast<std::size_t>(std::distance(std::sregex_iterator(str.begin(), str.end(), re), std::sregex_iterator()));
           return n >= static_cast<std::size_t>(int_param(p, "n")) ? pass() : fail("too few placeholders");
         },
         [](const json& p) {
           return "Include at least " + std::to_string(int_param(p, "n")) + " placeholders in square brackets, like [name].";
         }});
  r.add("title",
        {[](std::string_view s, const json&) { return check_title(s); },
         [](const json&) { return std::string("Give your reply a title in double angular brackets, like <<title>>."); }});
  r.add("postscript",
        {[](std::string_view s, const json& p) {
           const std::string marker = p.value("marker", std::string("P.S."));
           for (auto l : nonempty_lines(s)) {
             if (text::starts_with(l, marker)) return pass();
           }
           return fail("no postscript line");
         },
         [](const json& p) { return "Add a postscript starting with " + p.value("marker", std::string("P.S.")) + "."; }});
  r.add("json-format",
        {[](std::string_view s, const json&) { return parse_json_body(s) ? pass() : fail("not valid JSON"); },
         [](const json&) { return std::string("Format the entire reply as JSON."); }});
  return r;
}

}  // namespace

void ConstraintRegistry::add(std::string id, ConstraintChecker checker) {
  if (checkers_.count(id)) throw Error(ErrorCode::kConfigInvalid, "constraint '" + id + "' registered twice");
  checkers_.emplace(std::move(id), std::move(checker));
}

const ConstraintChecker& ConstraintRegistry::get(std::string_view id) const {
  auto it = checkers_.find(id);
  if (it == checkers_.end()) {
    throw Error(ErrorCode::kUnsupportedConstraint, "no checker for constraint '" + std::string(id) + "'");
  }
  return it->second;
}

bool ConstraintRegistry::contains(std::string_view id) const { return checkers_.find(id) != checkers_.end(); }

std::vector<std::string> ConstraintRegistry::ids() const {
  std::vector<std::string> out;
  for (const auto& [id, c] : checkers_) out.push_back(id);
  return out;
}

const ConstraintRegistry& ConstraintRegistry::builtin() {
  static const ConstraintRegistry registry = make_builtin_constraints();
  return registry;
}

RewardRecord verify_constraint(const Trajectory& trajectory, const ConstraintInstruction& constraint,
                               const ConstraintRegistry& registry) {
  const auto& checker = registry.get(constraint.id);
  RewardRecord r;
  r.verifier_id = "constraint:" + constraint.id;
  const auto check = checker.check(answer_segment(trajectory.generation), constraint.params);
  r.reward = check.ok ? 1.0 : 0.0;
  r.detail = check.detail;
  return r;
}

// ---------------------------------------------------------- tool calls

json canonical_tool_call(json call) {
  if (call.is_object() && call.contains("function") && call["function"].is_object()) {
    json fn = call["function"];
    call.erase("function");
    call.erase("type");
    for (auto& [k, v] : fn.items()) call[k] = v;
  }
  if (call.is_object() && call.contains("arguments") && call["arguments"].is_string()) {
    try {
      call["arguments"] = json::parse(call["arguments"].get<std::string>());
    } catch (const json::exception&) {
      throw Error(ErrorCode::kMalformedResponse, "tool call arguments are not JSON");
    }
  }
  return call;
}

std::vector<json> extract_tool_calls(std::string_view generation) {
  static constexpr std::string_view open = "<tool_call>";
  static constexpr std::string_view close = "</tool_call>";
  std::vector<json> out;
  std::size_t pos = 0;
  while ((pos = generation.find(open, pos)) != std::string_view::npos) {
    const auto body = pos + open.size();
    const auto end = generation.find(close, body);
    if (end == std::string_view::npos) throw Error(ErrorCode::kMalformedResponse, "unterminated tool call");
    try {
      out.push_back(canonical_tool_call(json::parse(generation.substr(body, end - body))));
    } catch (const json::exception& ex) {
      throw Error(ErrorCode::kMalformedResponse, std::string("tool call is not JSON: ") + ex.what());
    }
    pos = end + close.size();
  }
  return out;
}

RewardRecord verify_tool_call(const Trajectory& trajectory, std::span<const json> references) {
  RewardRecord r;
  r.verifier_id = "tool-call";
  std::vector<json> calls;
  try {
    calls = extract_tool_calls(answer_segment(trajectory.generation));
  } catch (const Error& ex) {
    r.detail = ex.what();
    return r;
  }
  std::vector<json> refs;
  for (const auto& ref : references) refs.push_back(canonical_tool_call(ref));
  if (calls.size() != refs.size()) {
    r.detail = "emitted " + std::to_string(calls.size()) + " calls, expected " + std::to_string(refs.size());
    return r;
  }
  std::vector<bool> used(refs.size(), false);
  for (std::size_t i = 0; i < calls.size(); ++i) {
    bool matched = false;
    for (std::size_t k = 0; k < refs.size(); ++k) {
      if (!used[k] && calls[i] == refs[k]) {
        used[k] = true;
        matched = true;
        break;
      }
    }
    if (!matched) {
      std::string where;
      for (std::size_t k = 0; k < refs.size(); ++k) {
        if (used[k]) continue;
        const auto patch = json::diff(refs[k], calls[i]);
        if (!patch.empty()) where = patch.front().value("path", std::string{});
        break;
      }
      r.detail = "call " + std::to_string(i) + " has no equivalent reference" +
                 (where.empty() ? std::string{} : " (first difference at " + where + ")");
      return r;
    }
  }
  r.reward = 1.0;
  return r;
}

}  // namespace synthforge
