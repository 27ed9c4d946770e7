#pragma once

#include <cctype>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace vnlg {

struct SlotValue {
  std::string name;
  std::optional<std::string> value;  // value-less slots, e.g. request(area)

  bool operator==(const SlotValue&) const = default;
};

// Ordered act type + slot-value list. Order and duplicate slots are
// meaningful (compare acts repeat slot names).
struct DialogueAct {
  std::string act_type;
  std::vector<SlotValue> slots;

  bool operator==(const DialogueAct&) const = default;
};

class DaParseError : public std::runtime_error {
 public:
  DaParseError(const std::string& msg, std::size_t offset)
      : std::runtime_error(msg + " at byte " + std::to_string(offset)), offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

namespace detail {

inline bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
inline bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

inline std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

}  // namespace detail

// Parses act(name='value'; other='v'; flag) syntax. Values may be quoted
// with single quotes or left bare; bare values run to the next ';' or ')'.
inline DialogueAct parse_da(const std::string& text) {
  std::size_t pos = 0;
  auto skip_ws = [&] {
    while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
  };
  auto fail = [&](const std::string& msg) -> DaParseError { return {msg, pos}; };

  skip_ws();
  if (pos >= text.size() || !detail::ident_start(text[pos]))
    throw fail("expected act type identifier");
  const std::size_t act_start = pos;
  while (pos < text.size() && detail::ident_char(text[pos])) ++pos;
  DialogueAct da;
  da.act_type = detail::lower(text.substr(act_start, pos - act_start));

  skip_ws();
  if (pos >= text.size() || text[pos] != '(') throw fail("expected '('");
  ++pos;
  skip_ws();

  if (pos < text.size() && text[pos] == ')') {
    ++pos;
  } else {
    while (true) {
      skip_ws();
      if (pos >= text.size() || !detail::ident_start(text[pos]))
        throw fail("expected slot name");
      const std::size_t name_start = pos;
      while (pos < text.size() && detail::ident_char(text[pos])) ++pos;
      SlotValue sv;
      sv.name = detail::lower(text.substr(name_start, pos - name_start));
      skip_ws();
      if (pos < text.size() && text[pos] == '=') {
        ++pos;
        skip_ws();
        if (pos < text.size() && (text[pos] == '\'' || text[pos] == '`')) {
          ++pos;
          const std::size_t val_start = pos;
          while (pos < text.size() && text[pos] != '\'') ++pos;
          if (pos >= text.size()) throw fail("unterminated quoted value");
          sv.value = text.substr(val_start, pos - val_start);
          ++pos;
        } else {
          const std::size_t val_start = pos;
          while (pos < text.size() && text[pos] != ';' && text[pos] != ')') ++pos;
          std::size_t val_end = pos;
          while (val_end > val_start &&
                 std::isspace(static_cast<unsigned char>(text[val_end - 1])))
            --val_end;
          if (val_end == val_start) throw fail("empty slot value");
          sv.value = text.substr(val_start, val_end - val_start);
        }
      }
      da.slots.push_back(std::move(sv));
      skip_ws();
      if (pos < text.size() && text[pos] == ';') {
        ++pos;
        continue;
      }
      if (pos < text.size() && text[pos] == ')') {
        ++pos;
        break;
      }
      throw fail("expected ';' or ')'");
    }
  }
  skip_ws();
  if (pos != text.size()) throw fail("trailing characters after ')'");
  return da;
}

// Canonical form: values single-quoted, slots joined by '; '.
inline std::string serialize_da(const DialogueAct& da) {
  std::string out = da.act_type + "(";
  for (std::size_t i = 0; i < da.slots.size(); ++i) {
    if (i) out += "; ";
    out += da.slots[i].name;
    if (da.slots[i].value) out += "='" + *da.slots[i].value + "'";
  }
  out += ")";
  return out;
}

}  // namespace vnlg
