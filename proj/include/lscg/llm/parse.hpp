#pragma once

// Answer extraction from model transcripts. The last complete
// <answer>...</answer> envelope wins; tags match case-insensitively.

#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "lscg/text.hpp"

namespace lscg::llm {

struct ParsedAnswer {
  std::optional<bool> value;  // true: the model says a word is contained
  std::string error;          // set iff !value

  bool ok() const { return value.has_value(); }
};

/// Content of the last complete envelope, if any.
inline std::optional<std::string> last_envelope(std::string_view response) {
  std::string lower = text::to_lower(response);
  auto close = lower.rfind("</answer>");
  if (close == std::string::npos) return std::nullopt;
  auto open = lower.rfind("<answer>", close);
  if (open == std::string::npos) return std::nullopt;
  open += 8;
  return std::string(response.substr(open, close - open));
}

inline ParsedAnswer parse_answer(std::string_view response) {
  auto env = last_envelope(response);
  if (!env) return {std::nullopt, "no <answer></answer> envelope in response"};
  std::string v = text::normalize_word(*env);
  if (v == "true") return {true, {}};
  if (v == "false") return {false, {}};
  return {std::nullopt, "envelope content is not True/False: '" + std::string(text::trim(*env)) + "'"};
}

struct ParsedWords {
  std::vector<std::string> words;
  std::string warning;  // non-empty when no list could be read
};

inline bool is_list_separator(char c) {
  return c == ',' || c == ';' || c == '\n' || c == '\r' || c == '\t' || c == '|';
}

/// Lowercased, trimmed, with surrounding quotes, brackets and list bullets removed.
inline std::string clean_list_item(std::string_view item) {
  auto strip = [](char c) {
    return text::is_space(c) || c == '"' || c == '\'' || c == '`' || c == '[' || c == ']' ||
           c == '{' || c == '}' || c == '(' || c == ')' || c == '*' || c == '.';
  };
  std::size_t b = 0, e = item.size();
  while (b < e && strip(item[b])) ++b;
  while (e > b && strip(item[e - 1])) --e;
  // leading "- " / "• " style bullets
  while (b < e && (item[b] == '-' || item[b] == '+')) {
    ++b;
    while (b < e && strip(item[b])) ++b;
  }
  return text::to_lower(item.substr(b, e - b));
}

inline ParsedWords parse_predicted_words(std::string_view response) {
  ParsedWords out;
  auto env = last_envelope(response);
  if (!env) {
    out.warning = "no <answer></answer> envelope; predicted word list taken as empty";
    return out;
  }
  std::unordered_set<std::string> seen;
  std::size_t start = 0;
  const std::string& s = *env;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i < s.size() && !is_list_separator(s[i])) continue;
    std::string w = clean_list_item(std::string_view(s).substr(start, i - start));
    start = i + 1;
    if (w.empty() || w == "none") continue;
    if (seen.insert(w).second) out.words.push_back(std::move(w));
  }
  return out;
}

}  // namespace lscg::llm
