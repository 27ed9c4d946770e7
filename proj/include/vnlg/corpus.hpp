#pragma once

#include <cmath>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "vnlg/delex.hpp"
#include "vnlg/dialogue_act.hpp"
#include "vnlg/rng.hpp"
#include "vnlg/vocab.hpp"

namespace vnlg {

// One corpus line: a dialogue act and its reference realizations.
struct Example {
  DialogueAct da;
  std::vector<std::string> refs;        // raw surfaces
  std::vector<Utterance> delex_refs;    // filled by prepare

  nlohmann::json to_json() const {
    return nlohmann::json{{"da", serialize_da(da)}, {"refs", refs}};
  }
};

struct DomainData {
  std::string domain;
  std::vector<Example> train, valid, test;
};

inline std::vector<Example> load_jsonl(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open corpus file " + path);
  std::vector<Example> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    Example ex;
    ex.da = parse_da(j.at("da").get<std::string>());
    for (const auto& r : j.at("refs")) ex.refs.push_back(r.get<std::string>());
    out.push_back(std::move(ex));
  }
  return out;
}

inline void save_jsonl(const std::string& path, const std::vector<Example>& examples) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write corpus file " + path);
  for (const auto& ex : examples) os << ex.to_json().dump() << "\n";
}

inline std::uint64_t file_content_hash(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return fnv1a64(ss.str());
}

enum class ScenarioKind { scratch, adaptation, semi };

inline std::string to_string(ScenarioKind k) {
  switch (k) {
    case ScenarioKind::scratch: return "scratch";
    case ScenarioKind::adaptation: return "adaptation";
    case ScenarioKind::semi: return "semi";
  }
  return "?";
}

inline ScenarioKind scenario_kind_from_string(const std::string& s) {
  if (s == "scratch") return ScenarioKind::scratch;
  if (s == "adaptation") return ScenarioKind::adaptation;
  if (s == "semi") return ScenarioKind::semi;
  throw std::invalid_argument("unknown scenario kind: " + s);
}

struct ScenarioSpec {
  ScenarioKind kind = ScenarioKind::scratch;
  double train_fraction = 1.0;            // of the target train split
  std::vector<std::string> source_domains;  // adaptation only
  std::string target_domain;
  double unlabeled_fraction = 0.0;        // semi only
  std::uint64_t seed = 0;

  void validate() const {
    if (!(train_fraction > 0.0 && train_fraction <= 1.0))
      throw std::invalid_argument("train_fraction must be in (0,1]");
    if (kind == ScenarioKind::adaptation && source_domains.empty())
      throw std::invalid_argument("adaptation requires source domains");
    if (kind == ScenarioKind::semi &&
        !(unlabeled_fraction > 0.0 && unlabeled_fraction <= 1.0))
      throw std::invalid_argument("unlabeled_fraction must be in (0,1]");
    if (target_domain.empty()) throw std::invalid_argument("target domain required");
  }

  nlohmann::json to_json() const {
    return nlohmann::json{{"kind", to_string(kind)},
                          {"train_fraction", train_fraction},
                          {"source_domains", source_domains},
                          {"target_domain", target_domain},
                          {"unlabeled_fraction", unlabeled_fraction},
                          {"seed", seed}};
  }

  static ScenarioSpec from_json(const nlohmann::json& j) {
    ScenarioSpec s;
    s.kind = scenario_kind_from_string(j.at("kind").get<std::string>());
    s.train_fraction = j.at("train_fraction").get<double>();
    s.source_domains = j.at("source_domains").get<std::vector<std::string>>();
    s.target_domain = j.at("target_domain").get<std::string>();
    s.unlabeled_fraction = j.at("unlabeled_fraction").get<double>();
    s.seed = j.at("seed").get<std::uint64_t>();
    return s;
  }
};

// Membership is tracked by (domain, split, index) so a manifest can rebuild
// the exact scenario from the corpus files.
struct SplitRef {
  std::string domain;
  std::string split;  // train / valid / test
  std::size_t index;
};

struct ScenarioSplits {
  std::vector<Example> train;      // labeled training pairs
  std::vector<Example> fine_tune;  // adaptation only: the 10% target set
  std::vector<Example> valid;
  std::vector<Example> test;
  std::vector<Example> unlabeled;  // semi only: DAs stripped

  std::vector<SplitRef> train_refs, fine_tune_refs, valid_refs, test_refs, unlabeled_refs;
};

namespace detail {

inline std::size_t fraction_count(double fraction, std::size_t n) {
  return static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
}

inline const DomainData& domain_or_throw(const std::map<std::string, DomainData>& data,
                                         const std::string& name) {
  auto it = data.find(name);
  if (it == data.end()) throw std::invalid_argument("unknown domain: " + name);
  return it->second;
}

inline void take(const DomainData& dom, const std::string& split,
                 const std::vector<std::size_t>& idx, std::vector<Example>& out,
                 std::vector<SplitRef>& refs) {
  const std::vector<Example>& src =
      split == "train" ? dom.train : (split == "valid" ? dom.valid : dom.test);
  for (std::size_t i : idx) {
    out.push_back(src[i]);
    refs.push_back({dom.domain, split, i});
  }
}

inline std::vector<std::size_t> iota_idx(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

}  // namespace detail

// Deterministic under spec.seed. Valid and test are always the full target
// splits; the train side depends on the scenario kind.
inline ScenarioSplits make_scenario(const std::map<std::string, DomainData>& dataset,
                                    const ScenarioSpec& spec) {
  spec.validate();
  const DomainData& target = detail::domain_or_throw(dataset, spec.target_domain);
  ScenarioSplits out;

  detail::take(target, "valid", detail::iota_idx(target.valid.size()), out.valid,
               out.valid_refs);
  detail::take(target, "test", detail::iota_idx(target.test.size()), out.test, out.test_refs);

  Rng rng(spec.seed, "scenario:" + spec.target_domain);
  std::vector<std::size_t> shuffled = detail::iota_idx(target.train.size());
  rng.shuffle(shuffled);

  const std::size_t n_label =
      detail::fraction_count(spec.train_fraction, target.train.size());
  if (n_label > target.train.size())
    throw std::invalid_argument("train fraction exceeds available data");
  if (n_label == 0) throw std::invalid_argument("train fraction selects zero examples");

  switch (spec.kind) {
    case ScenarioKind::scratch: {
      std::vector<std::size_t> idx(shuffled.begin(), shuffled.begin() + n_label);
      detail::take(target, "train", idx, out.train, out.train_refs);
      break;
    }
    case ScenarioKind::adaptation: {
      for (const auto& src_name : spec.source_domains) {
        const DomainData& src = detail::domain_or_throw(dataset, src_name);
        detail::take(src, "train", detail::iota_idx(src.train.size()), out.train,
                     out.train_refs);
      }
      std::vector<std::size_t> idx(shuffled.begin(), shuffled.begin() + n_label);
      detail::take(target, "train", idx, out.fine_tune, out.fine_tune_refs);
      break;
    }
    case ScenarioKind::semi: {
      const std::size_t n_unlabeled =
          detail::fraction_count(spec.unlabeled_fraction, target.train.size());
      if (n_label + n_unlabeled > target.train.size())
        throw std::invalid_argument("labeled + unlabeled fractions exceed available data");
      std::vector<std::size_t> lab(shuffled.begin(), shuffled.begin() + n_label);
      std::vector<std::size_t> unl(shuffled.begin() + n_label,
                                   shuffled.begin() + n_label + n_unlabeled);
      detail::take(target, "train", lab, out.train, out.train_refs);
      detail::take(target, "train", unl, out.unlabeled, out.unlabeled_refs);
      for (auto& ex : out.unlabeled) ex.da = DialogueAct{};  // keep only the utterances
      break;
    }
  }
  return out;
}

// Exchanges n_swaps uniformly chosen position pairs; the token multiset is
// preserved. n_swaps is clipped to len/2.
inline std::vector<std::string> corrupt_swap(std::vector<std::string> tokens,
                                             std::size_t n_swaps, Rng& rng) {
  if (tokens.size() < 2) return tokens;
  n_swaps = std::min(n_swaps, tokens.size() / 2);
  for (std::size_t s = 0; s < n_swaps; ++s) {
    const std::size_t i = rng.uniform_int(tokens.size());
    std::size_t j = rng.uniform_int(tokens.size() - 1);
    if (j >= i) ++j;
    std::swap(tokens[i], tokens[j]);
  }
  return tokens;
}

// Builds the utterance vocabulary from delexicalized references and the
// slot/value tables from the dialogue acts.
inline void grow_vocab(const std::vector<Example>& examples, Vocabulary& tokens,
                       DaVocabulary& da_vocab) {
  for (const auto& ex : examples) {
    if (!ex.da.act_type.empty())
      da_vocab.slot_names.add(std::string(DaVocabulary::kActPrefix) + ex.da.act_type);
    for (const auto& sv : ex.da.slots) {
      da_vocab.slot_names.add(sv.name);
      if (sv.value) da_vocab.values.add(detail::lower(*sv.value));
    }
    for (const auto& u : ex.delex_refs)
      for (const auto& t : u.tokens) tokens.add(t);
  }
}

// Fills delex_refs for every example, collecting lint messages.
inline std::vector<std::string> prepare_examples(std::vector<Example>& examples) {
  std::vector<std::string> lint;
  for (auto& ex : examples) {
    ex.delex_refs.clear();
    for (const auto& ref : ex.refs) {
      DelexResult dr = delexicalize(ref, ex.da);
      for (auto& msg : dr.lint) lint.push_back(serialize_da(ex.da) + ": " + msg);
      ex.delex_refs.push_back(std::move(dr.utterance));
    }
  }
  return lint;
}

}  // namespace vnlg
