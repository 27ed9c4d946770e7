#pragma once

#include <algorithm>
#include <set>
#include <string>
#include <vector>

#include "vnlg/corpus.hpp"
#include "vnlg/rng.hpp"

// Template-based synthetic NLG domains for tests and the experiment
// harness. "venue_a" and "venue_b" are a close pair: they share areas,
// price words, ratings and sentence templates but have disjoint name
// pools and one domain-specific slot each, so adaptation between them has
// something real to transfer.
namespace vnlg::synth {

struct SynthSpec {
  std::string domain = "venue_a";
  std::size_t n_das = 1000;
  std::uint64_t seed = 1;
  double valid_frac = 0.15;
  double test_frac = 0.25;
  int max_refs = 2;  // realizations per DA (1..max_refs)
};

namespace detail {

struct Lexicons {
  std::vector<std::string> names;
  std::vector<std::string> areas{"north", "south", "east", "west", "riverside",
                                 "midtown", "hillside", "harborfront"};
  std::vector<std::string> prices{"cheap", "moderate", "expensive"};
  std::vector<std::string> ratings{"1", "2", "3", "4", "5"};
  std::vector<std::string> foods;    // venue_a only
  std::vector<std::string> phones;
  bool has_parking = false;  // venue_b: value-less slot
};

inline Lexicons lexicons_for(const std::string& domain) {
  Lexicons lex;
  const std::vector<std::string> firsts_a{"velo",  "aria",  "corto", "luna", "brisa",
                                          "onda",  "terra", "vista", "prado", "moril"};
  const std::vector<std::string> seconds_a{"house", "garden", "corner"};
  const std::vector<std::string> firsts_b{"solano", "miray", "cedra", "opala", "nira",
                                          "quinta", "rivo",  "salda", "tessa", "urbina"};
  const std::vector<std::string> seconds_b{"lodge", "inn", "suites"};
  if (domain == "venue_a") {
    for (const auto& f : firsts_a)
      for (const auto& s : seconds_a) lex.names.push_back(f + " " + s);
    lex.foods = {"sivan", "talen", "morro", "pescan", "verdano", "quilla"};
  } else if (domain == "venue_b") {
    for (const auto& f : firsts_b)
      for (const auto& s : seconds_b) lex.names.push_back(f + " " + s);
    lex.has_parking = true;
  } else {
    throw std::invalid_argument("unknown synthetic domain: " + domain);
  }
  for (int i = 0; i < 40; ++i) lex.phones.push_back("5550" + std::to_string(100 + i));
  return lex;
}

inline const std::string& pick(const std::vector<std::string>& pool, Rng& rng) {
  return pool[rng.uniform_int(pool.size())];
}

// attribute clause used after an opener; variant chosen per realization
inline std::string clause(const std::string& slot, const std::string& v, std::size_t variant) {
  if (slot == "area")
    return variant ? "located in the " + v + " part of town" : "in the " + v + " area";
  if (slot == "food")
    return variant ? "where " + v + " dishes are served" : "serving " + v + " food";
  if (slot == "pricerange")
    return variant ? "in the " + v + " price range" : "with " + v + " prices";
  if (slot == "rating")
    return variant ? "holding a " + v + " star rating" : "rated " + v + " stars";
  if (slot == "phone")
    return variant ? "reachable at " + v : "and their phone number is " + v;
  if (slot == "parking") return variant ? "and parking is available" : "with free parking";
  throw std::logic_error("no clause for slot " + slot);
}

inline std::string compare_attr(const std::string& slot, const std::string& v,
                                std::size_t variant) {
  if (slot == "rating") return variant ? "rated " + v + " stars" : "a " + v + " star option";
  return variant ? v + " priced" : "in the " + v + " price range";  // pricerange
}

inline std::string opener(const std::string& act, const std::string& name,
                          std::size_t variant) {
  if (act == "inform") {
    const char* forms[3] = {"the %s is a nice place", "%s is a good choice",
                            "you could try the %s"};
    std::string f = forms[variant % 3];
    return f.replace(f.find("%s"), 2, name);
  }
  if (act == "recommend") {
    const char* forms[3] = {"i would recommend the %s", "my top pick is the %s",
                            "you should consider the %s"};
    std::string f = forms[variant % 3];
    return f.replace(f.find("%s"), 2, name);
  }
  // inform_only_match
  const char* forms[2] = {"the only match i found is the %s",
                          "there is just one option , the %s"};
  std::string f = forms[variant % 2];
  return f.replace(f.find("%s"), 2, name);
}

inline std::string realize(const DialogueAct& da, Rng& rng) {
  if (da.act_type == "goodbye")
    return rng.uniform_int(2) ? "thank you , goodbye ." : "goodbye and have a nice day .";
  if (da.act_type == "request") {
    const std::string& slot = da.slots[0].name;
    const char* forms[3] = {"what %s are you looking for ?", "which %s would you prefer ?",
                            "do you have a %s preference ?"};
    std::string f = forms[rng.uniform_int(3)];
    return f.replace(f.find("%s"), 2, slot);
  }
  if (da.act_type == "compare") {
    const std::string n1 = *da.slots[0].value;
    const std::string a1 =
        compare_attr(da.slots[1].name, *da.slots[1].value, rng.uniform_int(2));
    const std::string n2 = *da.slots[2].value;
    const std::string a2 =
        compare_attr(da.slots[3].name, *da.slots[3].value, rng.uniform_int(2));
    if (rng.uniform_int(2))
      return "the " + n1 + " is " + a1 + " while the " + n2 + " is " + a2 +
             " . which do you like ?";
    return "compared to the " + n1 + " which is " + a1 + " , the " + n2 + " is " + a2 +
           " . which one do you prefer ?";
  }
  // inform / recommend / inform_only_match: opener + slot clauses in DA order
  std::string text = opener(da.act_type, *da.slots[0].value, rng.uniform_int(3));
  std::vector<std::string> clauses;
  for (std::size_t i = 1; i < da.slots.size(); ++i) {
    const auto& sv = da.slots[i];
    clauses.push_back(clause(sv.name, sv.value ? *sv.value : "", rng.uniform_int(2)));
  }
  for (std::size_t i = 0; i < clauses.size(); ++i) {
    if (clauses.size() > 1 && i + 1 == clauses.size())
      text += " and " + clauses[i];
    else
      text += " " + clauses[i];
  }
  return text + " .";
}

inline DialogueAct sample_da(const Lexicons& lex, Rng& rng) {
  DialogueAct da;
  const double roll = rng.uniform();
  if (roll < 0.40)
    da.act_type = "inform";
  else if (roll < 0.65)
    da.act_type = "recommend";
  else if (roll < 0.80)
    da.act_type = "compare";
  else if (roll < 0.88)
    da.act_type = "inform_only_match";
  else if (roll < 0.95)
    da.act_type = "request";
  else
    da.act_type = "goodbye";

  if (da.act_type == "goodbye") return da;
  if (da.act_type == "request") {
    std::vector<std::string> requestable{"area", "pricerange"};
    if (!lex.foods.empty()) requestable.push_back("food");
    da.slots.push_back({pick(requestable, rng), std::nullopt});
    return da;
  }
  if (da.act_type == "compare") {
    const std::string attr = rng.uniform_int(2) ? "rating" : "pricerange";
    const auto& pool = attr == "rating" ? lex.ratings : lex.prices;
    da.slots.push_back({"name", pick(lex.names, rng)});
    da.slots.push_back({attr, pick(pool, rng)});
    std::string other = pick(lex.names, rng);
    while (other == *da.slots[0].value) other = pick(lex.names, rng);
    da.slots.push_back({"name", other});
    da.slots.push_back({attr, pick(pool, rng)});
    return da;
  }

  da.slots.push_back({"name", pick(lex.names, rng)});
  struct Extra {
    const char* slot;
    const std::vector<std::string>* pool;  // null: value-less
  };
  std::vector<Extra> extras;
  extras.push_back({"area", &lex.areas});
  if (!lex.foods.empty()) extras.push_back({"food", &lex.foods});
  extras.push_back({"pricerange", &lex.prices});
  extras.push_back({"rating", &lex.ratings});
  extras.push_back({"phone", &lex.phones});
  if (lex.has_parking) extras.push_back({"parking", nullptr});

  const std::size_t n_extra =
      1 + rng.uniform_int(std::min<std::size_t>(3, extras.size()));
  // choose a subset, keeping canonical order
  std::vector<std::size_t> chosen;
  while (chosen.size() < n_extra) {
    const std::size_t c = rng.uniform_int(extras.size());
    if (std::find(chosen.begin(), chosen.end(), c) == chosen.end()) chosen.push_back(c);
  }
  std::sort(chosen.begin(), chosen.end());
  for (std::size_t c : chosen) {
    const Extra& e = extras[c];
    if (e.pool)
      da.slots.push_back({e.slot, pick(*e.pool, rng)});
    else
      da.slots.push_back({e.slot, std::nullopt});
  }
  return da;
}

}  // namespace detail

// Deterministic under spec.seed: unique DAs, 1..max_refs distinct
// realizations each, split into train/valid/test.
inline DomainData make_domain(const SynthSpec& spec) {
  detail::Lexicons lex = detail::lexicons_for(spec.domain);
  Rng rng(spec.seed, "synth:" + spec.domain);

  std::vector<Example> examples;
  std::set<std::string> seen;
  std::size_t attempts = 0;
  while (examples.size() < spec.n_das && attempts < spec.n_das * 50) {
    ++attempts;
    DialogueAct da = detail::sample_da(lex, rng);
    const std::string key = serialize_da(da);
    if (!seen.insert(key).second) continue;
    Example ex;
    ex.da = da;
    const int n_refs = 1 + static_cast<int>(rng.uniform_int(
                               static_cast<std::uint64_t>(std::max(1, spec.max_refs))));
    std::set<std::string> ref_seen;
    for (int r = 0; r < n_refs; ++r) {
      std::string s = detail::realize(da, rng);
      if (ref_seen.insert(s).second) ex.refs.push_back(std::move(s));
    }
    examples.push_back(std::move(ex));
  }
  if (examples.size() < spec.n_das)
    throw std::runtime_error("synthetic domain too small for requested DA count");

  rng.shuffle(examples);
  DomainData out;
  out.domain = spec.domain;
  const std::size_t n_valid =
      static_cast<std::size_t>(spec.valid_frac * static_cast<double>(examples.size()));
  const std::size_t n_test =
      static_cast<std::size_t>(spec.test_frac * static_cast<double>(examples.size()));
  const std::size_t n_train = examples.size() - n_valid - n_test;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    if (i < n_train)
      out.train.push_back(std::move(examples[i]));
    else if (i < n_train + n_valid)
      out.valid.push_back(std::move(examples[i]));
    else
      out.test.push_back(std::move(examples[i]));
  }
  return out;
}

}  // namespace vnlg::synth
