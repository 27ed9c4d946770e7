#pragma once

#include <algorithm>
#include <cctype>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vnlg/dialogue_act.hpp"

namespace vnlg {

// Delexicalized token sequence. `alignment` maps the i-th placeholder
// occurrence (counting placeholders in token order) back to the surface
// text it replaced.
struct Utterance {
  std::vector<std::string> tokens;
  std::map<std::size_t, std::string> alignment;
};

// Lowercases and splits on whitespace; punctuation becomes its own token.
inline std::vector<std::string> tokenize(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  };
  for (char ch : s) {
    const unsigned char c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      flush();
    } else if (std::isalnum(c) || ch == '_') {
      cur += static_cast<char>(std::tolower(c));
    } else {
      flush();
      out.push_back(std::string(1, ch));
    }
  }
  flush();
  return out;
}

inline std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

// Tokenized then rejoined: the normal form relexicalization reproduces.
inline std::string normalize_surface(const std::string& s) { return join_tokens(tokenize(s)); }

inline std::string placeholder_for(const std::string& slot_name) {
  std::string out = "SLOT_";
  for (char c : slot_name) out += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

inline bool is_placeholder(const std::string& token) {
  return token.size() > 5 && token.rfind("SLOT_", 0) == 0;
}

// "SLOT_NAME" -> "name"
inline std::optional<std::string> placeholder_slot(const std::string& token) {
  if (!is_placeholder(token)) return std::nullopt;
  std::string name = token.substr(5);
  for (char& c : name) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return name;
}

struct DelexResult {
  Utterance utterance;
  std::vector<std::string> lint;  // slot values that never matched
};

namespace detail {

inline bool word_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

// case-insensitive substring search respecting word boundaries
inline std::size_t find_word_ci(const std::string& hay, const std::string& needle,
                                std::size_t from) {
  if (needle.empty()) return std::string::npos;
  auto tolow = [](char c) { return std::tolower(static_cast<unsigned char>(c)); };
  for (std::size_t i = from; i + needle.size() <= hay.size(); ++i) {
    bool match = true;
    for (std::size_t j = 0; j < needle.size(); ++j) {
      if (tolow(hay[i + j]) != tolow(needle[j])) {
        match = false;
        break;
      }
    }
    if (!match) continue;
    const bool left_ok = i == 0 || !word_char(hay[i - 1]);
    const std::size_t end = i + needle.size();
    const bool right_ok = end == hay.size() || !word_char(hay[end]);
    if (left_ok && right_ok) return i;
  }
  return std::string::npos;
}

}  // namespace detail

// Replaces each slot value occurrence in `surface` with SLOT_<NAME>.
// Longer values claim their spans first so "typhon 45" wins over "45".
// Value-less slots are never delexicalized. Unmatched values go to lint.
inline DelexResult delexicalize(const std::string& surface, const DialogueAct& da) {
  struct Span {
    std::size_t start, len, slot_index;
  };
  std::vector<Span> spans;

  // matching priority: longest value first, DA order breaking ties
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < da.slots.size(); ++i)
    if (da.slots[i].value) order.push_back(i);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return da.slots[a].value->size() > da.slots[b].value->size();
  });

  DelexResult result;
  for (std::size_t idx : order) {
    const std::string& value = *da.slots[idx].value;
    std::size_t from = 0;
    bool placed = false;
    while (!placed) {
      const std::size_t at = detail::find_word_ci(surface, value, from);
      if (at == std::string::npos) break;
      const bool overlaps = std::any_of(spans.begin(), spans.end(), [&](const Span& s) {
        return at < s.start + s.len && s.start < at + value.size();
      });
      if (!overlaps) {
        spans.push_back({at, value.size(), idx});
        placed = true;
      } else {
        from = at + 1;
      }
    }
    if (!placed)
      result.lint.push_back("slot '" + da.slots[idx].name + "' value '" + value +
                            "' not found in surface");
  }

  std::sort(spans.begin(), spans.end(),
            [](const Span& a, const Span& b) { return a.start < b.start; });

  Utterance& u = result.utterance;
  std::size_t cursor = 0;
  std::size_t occurrence = 0;
  for (const Span& s : spans) {
    for (const std::string& t : tokenize(surface.substr(cursor, s.start - cursor)))
      u.tokens.push_back(t);
    u.tokens.push_back(placeholder_for(da.slots[s.slot_index].name));
    u.alignment[occurrence++] = surface.substr(s.start, s.len);
    cursor = s.start + s.len;
  }
  for (const std::string& t : tokenize(surface.substr(cursor))) u.tokens.push_back(t);
  return result;
}

struct RelexResult {
  std::string surface;
  std::vector<std::string> redundant;  // placeholders with no remaining slot
};

// Fills placeholders from the DA, consuming slots of the matching name in
// order. Placeholders left over after all matching slots are consumed are
// reported, not fatal (the slot error rate counts them).
inline RelexResult relexicalize(const Utterance& u, const DialogueAct& da) {
  std::vector<bool> consumed(da.slots.size(), false);
  RelexResult result;
  std::vector<std::string> out_tokens;
  for (const std::string& tok : u.tokens) {
    const auto slot_name = placeholder_slot(tok);
    if (!slot_name) {
      out_tokens.push_back(tok);
      continue;
    }
    bool filled = false;
    for (std::size_t i = 0; i < da.slots.size(); ++i) {
      if (consumed[i] || da.slots[i].name != *slot_name || !da.slots[i].value) continue;
      consumed[i] = true;
      for (const std::string& vt : tokenize(*da.slots[i].value)) out_tokens.push_back(vt);
      filled = true;
      break;
    }
    if (!filled) {
      result.redundant.push_back(tok);
      out_tokens.push_back(tok);
    }
  }
  result.surface = join_tokens(out_tokens);
  return result;
}

}  // namespace vnlg
