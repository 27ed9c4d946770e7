#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <nlohmann/json.hpp>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "vnlg/delex.hpp"
#include "vnlg/dialogue_act.hpp"

namespace vnlg {

namespace detail {

inline void count_ngrams(const std::vector<std::string>& tokens, std::size_t n,
                         std::unordered_map<std::string, std::size_t>& out) {
  if (tokens.size() < n) return;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    std::string key;
    for (std::size_t j = 0; j < n; ++j) {
      if (j) key += '\x1f';
      key += tokens[i + j];
    }
    ++out[key];
  }
}

}  // namespace detail

// Corpus-level BLEU-4: modified n-gram precision with clipping against the
// reference maximum, geometric mean over the orders that have any
// candidate n-grams, epsilon-smoothing (1e-9) for zero-match orders, and
// the closest-reference-length brevity penalty (ties prefer the shorter
// reference). Returns a value in [0,1].
inline double bleu(const std::vector<std::vector<std::string>>& candidates,
                   const std::vector<std::vector<std::vector<std::string>>>& references) {
  if (candidates.empty()) throw std::invalid_argument("bleu: empty candidate list");
  if (candidates.size() != references.size())
    throw std::invalid_argument("bleu: candidate/reference count mismatch");
  constexpr double kEps = 1e-9;
  constexpr std::size_t kMaxOrder = 4;

  std::size_t cand_len = 0, ref_len = 0;
  std::array<std::size_t, kMaxOrder> matches{}, totals{};

  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& cand = candidates[i];
    const auto& refs = references[i];
    if (refs.empty()) throw std::invalid_argument("bleu: empty reference set");

    cand_len += cand.size();
    std::size_t best_ref = refs[0].size();
    for (const auto& r : refs) {
      const auto diff = [&](std::size_t len) {
        return len > cand.size() ? len - cand.size() : cand.size() - len;
      };
      if (diff(r.size()) < diff(best_ref) || (diff(r.size()) == diff(best_ref) && r.size() < best_ref))
        best_ref = r.size();
    }
    ref_len += best_ref;

    for (std::size_t n = 1; n <= kMaxOrder; ++n) {
      std::unordered_map<std::string, std::size_t> cand_counts;
      detail::count_ngrams(cand, n, cand_counts);
      if (cand_counts.empty()) continue;
      std::unordered_map<std::string, std::size_t> ref_max;
      for (const auto& r : refs) {
        std::unordered_map<std::string, std::size_t> rc;
        detail::count_ngrams(r, n, rc);
        for (const auto& [k, v] : rc) ref_max[k] = std::max(ref_max[k], v);
      }
      for (const auto& [k, v] : cand_counts) {
        totals[n - 1] += v;
        auto it = ref_max.find(k);
        if (it != ref_max.end()) matches[n - 1] += std::min(v, it->second);
      }
    }
  }

  if (cand_len == 0) return 0.0;

  double log_sum = 0.0;
  std::size_t orders = 0;
  for (std::size_t n = 0; n < kMaxOrder; ++n) {
    if (totals[n] == 0) continue;  // no n-grams of this order anywhere: skip
    ++orders;
    const double p = matches[n] > 0
                         ? static_cast<double>(matches[n]) / static_cast<double>(totals[n])
                         : kEps;
    log_sum += std::log(p);
  }
  if (orders == 0) return 0.0;
  const double geo = std::exp(log_sum / static_cast<double>(orders));
  const double bp =
      cand_len >= ref_len
          ? 1.0
          : std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(cand_len));
  return bp * geo;
}

struct SlotErrorCounts {
  std::size_t required = 0;   // N
  std::size_t missing = 0;    // p
  std::size_t redundant = 0;  // q

  void operator+=(const SlotErrorCounts& o) {
    required += o.required;
    missing += o.missing;
    redundant += o.redundant;
  }

  double rate() const {
    if (required == 0) return 0.0;
    return 100.0 * static_cast<double>(missing + redundant) / static_cast<double>(required);
  }
};

// Per-domain keyword lists let value-less (binary) slots participate in the
// error count; without keywords they are skipped with a lint note.
using BinarySlotKeywords = std::map<std::string, std::vector<std::string>>;

// Counts placeholder occurrences per slot name with multiplicity against
// what the DA requires. Evaluated in delexicalized space.
inline SlotErrorCounts slot_error_counts(const std::vector<std::string>& tokens,
                                         const DialogueAct& da,
                                         const BinarySlotKeywords* binary_keywords = nullptr,
                                         std::vector<std::string>* lint = nullptr) {
  std::map<std::string, std::size_t> required, produced;
  SlotErrorCounts out;
  for (const auto& sv : da.slots) {
    if (sv.value) {
      ++required[sv.name];
      ++out.required;
      continue;
    }
    const auto* kw =
        binary_keywords && binary_keywords->count(sv.name) ? &binary_keywords->at(sv.name) : nullptr;
    if (!kw) {
      if (lint)
        lint->push_back("value-less slot '" + sv.name + "' has no keyword list; not counted");
      continue;
    }
    ++out.required;
    bool found = false;
    for (const auto& k : *kw)
      for (const auto& t : tokens)
        if (t == k) {
          found = true;
          break;
        }
    if (!found) ++out.missing;
  }
  for (const auto& t : tokens) {
    const auto slot = placeholder_slot(t);
    if (slot) ++produced[*slot];
  }
  for (const auto& [name, got] : produced) {
    const std::size_t req = required.count(name) ? required[name] : 0;
    if (got > req) out.redundant += got - req;
  }
  for (const auto& [name, req] : required) {
    const std::size_t got = produced.count(name) ? produced[name] : 0;
    if (req > got) out.missing += req - got;
  }
  return out;
}

// ERR = 100 (p + q) / N pooled over the corpus (not a mean of per-sentence
// rates).
inline double slot_error_rate(const std::vector<std::vector<std::string>>& generated,
                              const std::vector<DialogueAct>& das,
                              const BinarySlotKeywords* binary_keywords = nullptr,
                              std::vector<std::string>* lint = nullptr) {
  if (generated.size() != das.size())
    throw std::invalid_argument("slot_error_rate: length mismatch");
  SlotErrorCounts pooled;
  for (std::size_t i = 0; i < das.size(); ++i)
    pooled += slot_error_counts(generated[i], das[i], binary_keywords, lint);
  return pooled.rate();
}

inline std::string fmt_g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Per (model, scenario, domain) cell: per-seed BLEU/ERR plus their mean
// and standard deviation, the layout of the result tables.
struct MetricsCell {
  std::string model, scenario, domain;
  std::vector<std::uint64_t> seeds;
  std::vector<double> seed_bleu, seed_err;

  static double mean(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  }
  static double stddev(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
  }

  double bleu_mean() const { return mean(seed_bleu); }
  double bleu_std() const { return stddev(seed_bleu); }
  double err_mean() const { return mean(seed_err); }
  double err_std() const { return stddev(seed_err); }

  nlohmann::json to_json() const {
    return nlohmann::json{{"model", model},       {"scenario", scenario},
                          {"domain", domain},     {"seeds", seeds},
                          {"seed_bleu", seed_bleu}, {"seed_err", seed_err},
                          {"bleu_mean", bleu_mean()}, {"bleu_std", bleu_std()},
                          {"err_mean", err_mean()},   {"err_std", err_std()}};
  }
};

struct MetricsReport {
  std::vector<MetricsCell> cells;

  std::string to_csv() const {
    std::string out = "model,scenario,domain,seed,bleu,err\n";
    for (const auto& c : cells)
      for (std::size_t i = 0; i < c.seed_bleu.size(); ++i)
        out += c.model + "," + c.scenario + "," + c.domain + "," +
               std::to_string(c.seeds[i]) + "," + fmt_g17(c.seed_bleu[i]) + "," +
               fmt_g17(c.seed_err[i]) + "\n";
    return out;
  }

  std::string to_markdown() const {
    std::string out = "| model | scenario | domain | BLEU (mean ± sd) | ERR % (mean ± sd) |\n";
    out += "|---|---|---|---|---|\n";
    char buf[128];
    for (const auto& c : cells) {
      std::snprintf(buf, sizeof(buf), "| %s | %s | %s | %.4f ± %.4f | %.2f ± %.2f |\n",
                    c.model.c_str(), c.scenario.c_str(), c.domain.c_str(), c.bleu_mean(),
                    c.bleu_std(), c.err_mean(), c.err_std());
      out += buf;
    }
    return out;
  }
};

}  // namespace vnlg
