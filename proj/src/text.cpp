#include "synthforge/text.hpp"

#include <algorithm>
#include <cctype>
#include <cstdint>

namespace synthforge::text {
namespace {

bool is_space(char c) {
  return std::isspace(static_cast<unsigned char>(c)) != 0;
}

std::uint64_t hash_run(const std::vector<std::string_view>& tokens,
                       std::size_t begin, int n) {
  std::uint64_t h = 1469598103934665603ULL;
  for (int k = 0; k < n; ++k) {
    for (char c : tokens[begin + k]) {
      h ^= static_cast<unsigned char>(c);
      h *= 1099511628211ULL;
    }
    h ^= 0x1f;
    h *= 1099511628211ULL;
  }
  return h;
}

bool same_run(const std::vector<std::string_view>& a, std::size_t ai,
              const std::vector<std::string_view>& b, std::size_t bi, int n) {
  for (int k = 0; k < n; ++k) {
    if (a[ai + k] != b[bi + k]) return false;
  }
  return true;
}

}  // namespace

std::string_view trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
  return s.substr(b, e - b);
}

std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) {
    return static_cast<char>(std::tolower(c));
  });
  return out;
}

std::vector<std::string_view> split_whitespace(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && is_space(s[i])) ++i;
    const std::size_t start = i;
    while (i < s.size() && !is_space(s[i])) ++i;
    if (i > start) out.push_back(s.substr(start, i - start));
  }
  return out;
}

std::string normalize_whitespace(std::string_view s) {
  std::string out;
  for (auto token : split_whitespace(s)) {
    if (!out.empty()) out.push_back(' ');
    out.append(token);
  }
  return out;
}

std::string_view strip_code_fence(std::string_view s) {
  auto t = trim(s);
  if (!starts_with(t, "```") || t.size() < 6 || !ends_with(t, "```")) return t;
  auto body = t.substr(3, t.size() - 6);
  const auto newline = body.find('\n');
  if (newline == std::string_view::npos) return trim(body);
  // A bare word on the fence line is a language tag.
  auto tag = body.substr(0, newline);
  if (split_whitespace(tag).size() <= 1) body = body.substr(newline + 1);
  return trim(body);
}

bool shares_token_ngram(std::string_view a, std::string_view b, int n) {
  if (n <= 0) return true;
  const auto ta = split_whitespace(a);
  const auto tb = split_whitespace(b);
  const auto un = static_cast<std::size_t>(n);
  if (ta.size() < un || tb.size() < un) return false;
  std::vector<std::pair<std::uint64_t, std::size_t>> index;
  for (std::size_t i = 0; i + un <= tb.size(); ++i) {
    index.emplace_back(hash_run(tb, i, n), i);
  }
  std::sort(index.begin(), index.end());
  for (std::size_t i = 0; i + un <= ta.size(); ++i) {
    const auto h = hash_run(ta, i, n);
    auto it = std::lower_bound(index.begin(), index.end(),
                               std::make_pair(h, std::size_t{0}));
    for (; it != index.end() && it->first == h; ++it) {
      if (same_run(ta, i, tb, it->second, n)) return true;
    }
  }
  return false;
}

bool starts_with(std::string_view s, std::string_view prefix) {
  return s.substr(0, prefix.size()) == prefix;
}

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() &&
         s.substr(s.size() - suffix.size()) == suffix;
}

std::size_t count_occurrences(std::string_view haystack,
                              std::string_view needle) {
  if (needle.empty()) return 0;
  std::size_t count = 0;
  for (auto pos = haystack.find(needle); pos != std::string_view::npos;
       pos = haystack.find(needle, pos + needle.size())) {
    ++count;
  }
  return count;
}

}  // namespace synthforge::text
