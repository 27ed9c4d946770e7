#pragma once

#include <nlohmann/json.hpp>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "vnlg/rng.hpp"

namespace vnlg {

// Token table with fixed reserved ids.
class Vocabulary {
 public:
  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kBos = 1;
  static constexpr std::size_t kEos = 2;
  static constexpr std::size_t kUnk = 3;

  Vocabulary() {
    for (const char* t : {"<pad>", "<bos>", "<eos>", "<unk>"}) add(t);
  }

  std::size_t add(const std::string& token) {
    auto it = index_.find(token);
    if (it != index_.end()) return it->second;
    tokens_.push_back(token);
    index_[token] = tokens_.size() - 1;
    return tokens_.size() - 1;
  }

  std::size_t id(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? kUnk : it->second;
  }

  bool contains(const std::string& token) const { return index_.count(token) > 0; }

  const std::string& token(std::size_t id) const {
    if (id >= tokens_.size()) throw std::out_of_range("vocab id out of range");
    return tokens_[id];
  }

  std::size_t size() const { return tokens_.size(); }

  nlohmann::json to_json() const {
    return nlohmann::json{{"tokens", tokens_}};
  }

  static Vocabulary from_json(const nlohmann::json& j) {
    Vocabulary v;
    const auto& toks = j.at("tokens");
    for (std::size_t i = 4; i < toks.size(); ++i) v.add(toks[i].get<std::string>());
    return v;
  }

  // stable fingerprint for checkpoint/vocabulary pairing
  std::uint64_t hash() const {
    std::uint64_t h = 14695981039346656037ull;
    for (const auto& t : tokens_) {
      h ^= fnv1a64(t);
      h *= 1099511628211ull;
    }
    return h;
  }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Separate slot-name and value tables for the DA encoder. Act types are
// encoded as the leading pair of the slot-value sequence under an "act:"
// key in the slot table; value-less slots map to the <none> value symbol.
struct DaVocabulary {
  Vocabulary slot_names;
  Vocabulary values;

  static constexpr const char* kNoneValue = "<none>";
  static constexpr const char* kActPrefix = "act:";

  DaVocabulary() { values.add(kNoneValue); }

  std::size_t none_value_id() const { return values.id(kNoneValue); }

  nlohmann::json to_json() const {
    return nlohmann::json{{"slot_names", slot_names.to_json()}, {"values", values.to_json()}};
  }

  static DaVocabulary from_json(const nlohmann::json& j) {
    DaVocabulary v;
    v.slot_names = Vocabulary::from_json(j.at("slot_names"));
    v.values = Vocabulary::from_json(j.at("values"));
    return v;
  }

  std::uint64_t hash() const { return slot_names.hash() ^ (values.hash() * 0x9e3779b97f4a7c15ull); }
};

}  // namespace vnlg
