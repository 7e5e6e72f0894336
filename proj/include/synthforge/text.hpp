#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace synthforge::text {

std::string_view trim(std::string_view s);
std::string to_lower(std::string_view s);

/// Maximal runs of non-whitespace characters.
std::vector<std::string_view> split_whitespace(std::string_view s);

/// Collapses whitespace runs to one space and trims the ends.
std::string normalize_whitespace(std::string_view s);

/// Strips one surrounding ``` fence (with optional language tag) if present.
std::string_view strip_code_fence(std::string_view s);

/// True iff `a` and `b` share a contiguous run of at least `n` whitespace
/// tokens.
bool shares_token_ngram(std::string_view a, std::string_view b, int n);

bool starts_with(std::string_view s, std::string_view prefix);
bool ends_with(std::string_view s, std::string_view suffix);
std::size_t count_occurrences(std::string_view haystack,
                              std::string_view needle);

}  // namespace synthforge::text
