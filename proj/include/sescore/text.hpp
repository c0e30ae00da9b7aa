#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace sescore {

/// A whitespace-tokenized text unit. Tokens are never empty strings.
struct Sentence {
  std::vector<std::string> tokens;
  std::string source_id;
  std::string language_tag = "en";

  std::size_t size() const { return tokens.size(); }
  bool empty() const { return tokens.empty(); }

  friend bool operator==(const Sentence& a, const Sentence& b) { return a.tokens == b.tokens; }
};

/// Half-open token range [start, start + len) in 0-based coordinates.
/// len == 0 denotes an insertion point or a deletion marker.
struct Span {
  std::size_t start = 0;
  std::size_t len = 0;

  std::size_t end() const { return start + len; }
  friend bool operator==(const Span&, const Span&) = default;
};

enum class EditKind { Insert, Delete, Replace, Swap };

inline constexpr EditKind kAllEditKinds[] = {EditKind::Insert, EditKind::Delete, EditKind::Replace,
                                             EditKind::Swap};

inline std::string_view to_string(EditKind kind) {
  switch (kind) {
    case EditKind::Insert: return "insert";
    case EditKind::Delete: return "delete";
    case EditKind::Replace: return "replace";
    case EditKind::Swap: return "swap";
  }
  return "unknown";
}

inline bool parse_edit_kind(std::string_view name, EditKind& out) {
  for (EditKind k : kAllEditKinds) {
    if (to_string(k) == name) {
      out = k;
      return true;
    }
  }
  return false;
}

inline bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}

/// Splits on runs of ASCII whitespace. Punctuation stays attached to words.
inline Sentence tokenize(std::string_view text) {
  Sentence s;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    std::size_t j = i;
    while (j < text.size() && !is_space(text[j])) ++j;
    if (j > i) s.tokens.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return s;
}

inline std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

inline std::string detokenize(const Sentence& s) { return join_tokens(s.tokens); }

}  // namespace sescore
