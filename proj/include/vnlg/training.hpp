#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <span>
#include <string>
#include <vector>

#include "vnlg/corpus.hpp"
#include "vnlg/metrics.hpp"
#include "vnlg/model.hpp"
#include "vnlg/optimizer.hpp"

namespace vnlg {

// Linear schedules. kl weight warms 0 -> 1 over kl_warmup_steps (0 means
// always 1); alpha decays 1 -> 0 over alpha_decay_steps (0 pins alpha at
// 0, the ablation setting).
struct AnnealSchedule {
  std::size_t kl_warmup_steps = 10000;
  std::size_t alpha_decay_steps = 10000;

  double kl_weight(std::size_t step) const {
    if (kl_warmup_steps == 0) return 1.0;
    if (step >= kl_warmup_steps) return 1.0;
    return static_cast<double>(step) / static_cast<double>(kl_warmup_steps);
  }

  double alpha(std::size_t step) const {
    if (alpha_decay_steps == 0) return 0.0;
    if (step >= alpha_decay_steps) return 0.0;
    return 1.0 - static_cast<double>(step) / static_cast<double>(alpha_decay_steps);
  }
};

// One labeled training item: a DA and one delexicalized reference as ids.
struct TrainPair {
  DialogueAct da;
  std::vector<std::size_t> ids;
};

struct LossBreakdown {
  double total = 0.0;
  double kl = 0.0;       // VNLG KL term (unweighted)
  double nll = 0.0;      // teacher-forced reconstruction
  double ae = 0.0;       // CNN-DCNN lower bound (unweighted by alpha)
  double dadcnn = 0.0;   // DA-DCNN lower bound (unweighted by alpha)
};

namespace detail {

inline std::size_t swap_count(std::size_t len, double rate) {
  if (len < 2) return 0;
  return std::max<std::size_t>(1, static_cast<std::size_t>(rate * static_cast<double>(len)));
}

// corrupt_swap over id sequences (same exchange rule as the token version)
inline std::vector<std::size_t> corrupt_ids(std::vector<std::size_t> ids, std::size_t n_swaps,
                                            Rng& rng) {
  if (ids.size() < 2) return ids;
  n_swaps = std::min(n_swaps, ids.size() / 2);
  for (std::size_t s = 0; s < n_swaps; ++s) {
    const std::size_t i = rng.uniform_int(ids.size());
    std::size_t j = rng.uniform_int(ids.size() - 1);
    if (j >= i) ++j;
    std::swap(ids[i], ids[j]);
  }
  return ids;
}

}  // namespace detail

struct LossOptions {
  double dropout_keep = 0.7;
  bool train_mode = true;
  int mc_samples = 1;      // M
  double swap_rate = 0.05;  // denoising: n_swaps = max(1, floor(rate * len))
};

// Variational NLG objective for one example (negated lower bound):
// kl_w * KL(q(z|d,u) || p(z|d)) + (1/M) sum_m NLL(u | d, h_z^(m)).
// When the variational path is off this is the plain teacher-forced NLL.
inline ad::Var example_loss_vnlg(const Generator& m, const TrainPair& ex, double kl_w,
                                 const LossOptions& opt, Rng& rng, LossBreakdown* bd,
                                 const ad::Var& h_da_in = {}, DiagonalGaussian* q_out = nullptr) {
  ad::Var h_da = h_da_in.defined() ? h_da_in : m.encode_da(ex.da);
  Rng* drop_rng = opt.train_mode ? &rng : nullptr;
  if (!m.variational()) {
    ad::Var nll = m.decoder().teacher_forced_nll(ex.ids, h_da, {}, Vocabulary::kBos,
                                                 Vocabulary::kEos, opt.train_mode,
                                                 opt.dropout_keep, drop_rng);
    if (bd) bd->nll += nll.scalar();
    return nll;
  }
  ad::Var h_u = m.encode_utterance(ex.ids);
  DiagonalGaussian q = m.latent().posterior(h_da, h_u);
  DiagonalGaussian p = m.latent().prior(h_da);
  ad::Var kl = kl_gaussians(q, p);
  std::vector<ad::Var> nll_terms;
  for (int s = 0; s < opt.mc_samples; ++s) {
    ad::Var h_z = reparameterize(q, rng);
    ad::Var h_e = m.latent().project(h_z);
    nll_terms.push_back(m.decoder().teacher_forced_nll(ex.ids, h_da, h_e, Vocabulary::kBos,
                                                       Vocabulary::kEos, opt.train_mode,
                                                       opt.dropout_keep, drop_rng));
  }
  ad::Var nll = ad::scale(ad::add_n(nll_terms), 1.0 / static_cast<double>(opt.mc_samples));
  if (bd) {
    bd->kl += kl.scalar();
    bd->nll += nll.scalar();
  }
  if (q_out) *q_out = q;
  return ad::add(ad::scale(kl, kl_w), nll);
}

// Denoising autoencoder objective for one utterance:
// kl_w * KL(q(z|u~) || N(0,I)) + DCNN cross-entropy of the clean target.
inline ad::Var example_loss_cnn_dcnn(const Generator& m, const std::vector<std::size_t>& ids,
                                     double kl_w, const LossOptions& opt, Rng& rng,
                                     LossBreakdown* bd) {
  std::vector<std::size_t> corrupted =
      opt.train_mode
          ? detail::corrupt_ids(ids, detail::swap_count(ids.size(), opt.swap_rate), rng)
          : ids;
  ad::Var h_u = m.encode_utterance(corrupted);
  DiagonalGaussian q = m.latent().ae_posterior(h_u);
  DiagonalGaussian std_normal = DiagonalGaussian::standard(q.dim());
  ad::Var kl = kl_gaussians(q, std_normal);
  ad::Var h_zu = reparameterize(q, rng);
  ad::Var h_e = m.latent().project(h_zu);
  Rng* drop_rng = opt.train_mode ? &rng : nullptr;
  ad::Var recon = m.dcnn().reconstruction_nll(h_e, ids, Vocabulary::kEos, Vocabulary::kPad,
                                              opt.train_mode, opt.dropout_keep, drop_rng);
  ad::Var loss = ad::add(ad::scale(kl, kl_w), recon);
  if (bd) bd->ae += loss.scalar();
  return loss;
}

namespace detail {

// kl_w * KL(q || p(z|d)) + DCNN cross-entropy of u, for a given posterior
inline ad::Var da_dcnn_term(const Generator& m, const TrainPair& ex,
                            const DiagonalGaussian& q, const ad::Var& h_da, double kl_w,
                            const LossOptions& opt, Rng& rng, LossBreakdown* bd) {
  DiagonalGaussian p = m.latent().prior(h_da);
  ad::Var kl = kl_gaussians(q, p);
  ad::Var h_z = reparameterize(q, rng);
  ad::Var h_e = m.latent().project(h_z);
  Rng* drop_rng = opt.train_mode ? &rng : nullptr;
  ad::Var recon = m.dcnn().reconstruction_nll(h_e, ex.ids, Vocabulary::kEos, Vocabulary::kPad,
                                              opt.train_mode, opt.dropout_keep, drop_rng);
  ad::Var loss = ad::add(ad::scale(kl, kl_w), recon);
  if (bd) bd->dadcnn += loss.scalar();
  return loss;
}

}  // namespace detail

// Cross objective: the VNLG inference network driving the DCNN decoder:
// kl_w * KL(q(z|d,u) || p(z|d)) + DCNN cross-entropy of u.
inline ad::Var example_loss_da_dcnn(const Generator& m, const TrainPair& ex, double kl_w,
                                    const LossOptions& opt, Rng& rng, LossBreakdown* bd) {
  ad::Var h_da = m.encode_da(ex.da);
  ad::Var h_u = m.encode_utterance(ex.ids);
  DiagonalGaussian q = m.latent().posterior(h_da, h_u);
  return detail::da_dcnn_term(m, ex, q, h_da, kl_w, opt, rng, bd);
}

namespace detail {

inline ad::Var batch_mean(std::vector<ad::Var> example_losses) {
  ad::Var total = ad::add_n(example_losses);
  return ad::scale(total, 1.0 / static_cast<double>(example_losses.size()));
}

inline void finalize_breakdown(LossBreakdown* bd, std::size_t batch, double total) {
  if (!bd) return;
  const double b = static_cast<double>(batch);
  bd->kl /= b;
  bd->nll /= b;
  bd->ae /= b;
  bd->dadcnn /= b;
  bd->total = total;
}

}  // namespace detail

// ---- batch objectives (means over the batch) ----

inline ad::Var loss_vnlg(const Generator& m, std::span<const TrainPair> batch, double kl_w,
                         const LossOptions& opt, Rng& rng, LossBreakdown* bd = nullptr) {
  if (batch.empty()) throw std::invalid_argument("loss_vnlg: empty batch");
  std::vector<ad::Var> losses;
  for (const auto& ex : batch)
    losses.push_back(example_loss_vnlg(m, ex, kl_w, opt, rng, bd));
  ad::Var out = detail::batch_mean(std::move(losses));
  detail::finalize_breakdown(bd, batch.size(), out.scalar());
  return out;
}

inline ad::Var loss_cnn_dcnn(const Generator& m,
                             std::span<const std::vector<std::size_t>> utterances, double kl_w,
                             const LossOptions& opt, Rng& rng, LossBreakdown* bd = nullptr) {
  if (utterances.empty()) throw std::invalid_argument("loss_cnn_dcnn: empty batch");
  std::vector<ad::Var> losses;
  for (const auto& ids : utterances)
    losses.push_back(example_loss_cnn_dcnn(m, ids, kl_w, opt, rng, bd));
  ad::Var out = detail::batch_mean(std::move(losses));
  detail::finalize_breakdown(bd, utterances.size(), out.scalar());
  return out;
}

inline ad::Var loss_da_dcnn(const Generator& m, std::span<const TrainPair> batch, double kl_w,
                            const LossOptions& opt, Rng& rng, LossBreakdown* bd = nullptr) {
  if (batch.empty()) throw std::invalid_argument("loss_da_dcnn: empty batch");
  std::vector<ad::Var> losses;
  for (const auto& ex : batch)
    losses.push_back(example_loss_da_dcnn(m, ex, kl_w, opt, rng, bd));
  ad::Var out = detail::batch_mean(std::move(losses));
  detail::finalize_breakdown(bd, batch.size(), out.scalar());
  return out;
}

// DualVAE: loss_vnlg + alpha * loss_cnn_dcnn. With alpha == 0 the auxiliary
// branch is skipped entirely (no graph, no RNG draws), which keeps the
// training trajectory bit-identical to the plain VNLG model.
inline ad::Var loss_dualvae(const Generator& m, std::span<const TrainPair> batch, double kl_w,
                            double alpha, const LossOptions& opt, Rng& rng,
                            LossBreakdown* bd = nullptr) {
  if (batch.empty()) throw std::invalid_argument("loss_dualvae: empty batch");
  std::vector<ad::Var> losses;
  for (const auto& ex : batch) {
    ad::Var h_da = m.encode_da(ex.da);
    ad::Var l = example_loss_vnlg(m, ex, kl_w, opt, rng, bd, h_da);
    if (alpha != 0.0 && m.variational())
      l = ad::add(l, ad::scale(example_loss_cnn_dcnn(m, ex.ids, kl_w, opt, rng, bd), alpha));
    losses.push_back(l);
  }
  ad::Var out = detail::batch_mean(std::move(losses));
  detail::finalize_breakdown(bd, batch.size(), out.scalar());
  return out;
}

// CrossVAE: loss_vnlg + alpha * (loss_cnn_dcnn + loss_da_dcnn). The DA-DCNN
// term reuses the same posterior the VNLG term produced for the example.
inline ad::Var loss_crossvae(const Generator& m, std::span<const TrainPair> batch, double kl_w,
                             double alpha, const LossOptions& opt, Rng& rng,
                             LossBreakdown* bd = nullptr) {
  if (batch.empty()) throw std::invalid_argument("loss_crossvae: empty batch");
  std::vector<ad::Var> losses;
  for (const auto& ex : batch) {
    ad::Var h_da = m.encode_da(ex.da);
    DiagonalGaussian q;
    ad::Var l = example_loss_vnlg(m, ex, kl_w, opt, rng, bd, h_da, &q);
    if (alpha != 0.0 && m.variational()) {
      ad::Var aux = example_loss_cnn_dcnn(m, ex.ids, kl_w, opt, rng, bd);
      ad::Var cross = detail::da_dcnn_term(m, ex, q, h_da, kl_w, opt, rng, bd);
      l = ad::add(l, ad::scale(ad::add(aux, cross), alpha));
    }
    losses.push_back(l);
  }
  ad::Var out = detail::batch_mean(std::move(losses));
  detail::finalize_breakdown(bd, batch.size(), out.scalar());
  return out;
}

// Semi-supervised step: supervised CrossVAE loss on the labeled batch plus
// alpha * the DA-free autoencoder loss on the unlabeled utterances.
inline ad::Var semi_supervised_step(const Generator& m, std::span<const TrainPair> labeled,
                                    std::span<const std::vector<std::size_t>> unlabeled,
                                    double kl_w, double alpha, const LossOptions& opt,
                                    Rng& rng, LossBreakdown* bd = nullptr) {
  ad::Var sup = m.kind() == ModelKind::dualvae
                    ? loss_dualvae(m, labeled, kl_w, alpha, opt, rng, bd)
                    : loss_crossvae(m, labeled, kl_w, alpha, opt, rng, bd);
  if (unlabeled.empty() || alpha == 0.0) return sup;
  LossBreakdown unl_bd;
  ad::Var unsup = loss_cnn_dcnn(m, unlabeled, kl_w, opt, rng, &unl_bd);
  if (bd) bd->ae += unl_bd.ae;
  ad::Var out = ad::add(sup, ad::scale(unsup, alpha));
  if (bd) bd->total = out.scalar();
  return out;
}

// Single entry point used by the training loop.
inline ad::Var model_loss(const Generator& m, std::span<const TrainPair> batch,
                          std::span<const std::vector<std::size_t>> unlabeled, double kl_w,
                          double alpha, const LossOptions& opt, Rng& rng,
                          LossBreakdown* bd = nullptr) {
  switch (m.kind()) {
    case ModelKind::ralstm_baseline:
    case ModelKind::rvnlg:
    case ModelKind::cvnlg:
      return loss_vnlg(m, batch, kl_w, opt, rng, bd);
    case ModelKind::dualvae:
    case ModelKind::crossvae:
      if (!unlabeled.empty())
        return semi_supervised_step(m, batch, unlabeled, kl_w, alpha, opt, rng, bd);
      return m.kind() == ModelKind::dualvae
                 ? loss_dualvae(m, batch, kl_w, alpha, opt, rng, bd)
                 : loss_crossvae(m, batch, kl_w, alpha, opt, rng, bd);
  }
  throw std::logic_error("model_loss: unreachable");
}

// ---- data preparation ----

struct PreparedData {
  Vocabulary vocab;
  DaVocabulary da_vocab;
  std::vector<TrainPair> train_pairs;
  std::vector<TrainPair> fine_tune_pairs;
  std::vector<std::vector<std::size_t>> unlabeled_ids;
  std::vector<Example> valid, test;  // delexicalized, for scoring
  std::vector<std::string> lint;
};

// Delexicalizes every split and builds the vocabularies from the data a
// run may legitimately see: labeled train, the adaptation fine-tune set,
// and unlabeled utterances.
inline PreparedData prepare_data(ScenarioSplits splits) {
  PreparedData out;
  for (auto* exs : {&splits.train, &splits.fine_tune, &splits.unlabeled, &splits.valid,
                    &splits.test}) {
    auto lint = prepare_examples(*exs);
    out.lint.insert(out.lint.end(), lint.begin(), lint.end());
  }
  grow_vocab(splits.train, out.vocab, out.da_vocab);
  grow_vocab(splits.fine_tune, out.vocab, out.da_vocab);
  grow_vocab(splits.unlabeled, out.vocab, out.da_vocab);

  auto expand = [&](const std::vector<Example>& exs, std::vector<TrainPair>& pairs) {
    for (const auto& ex : exs)
      for (const auto& u : ex.delex_refs) {
        TrainPair p;
        p.da = ex.da;
        p.ids.reserve(u.tokens.size());
        for (const auto& t : u.tokens) p.ids.push_back(out.vocab.id(t));
        pairs.push_back(std::move(p));
      }
  };
  expand(splits.train, out.train_pairs);
  expand(splits.fine_tune, out.fine_tune_pairs);
  for (const auto& ex : splits.unlabeled)
    for (const auto& u : ex.delex_refs) {
      std::vector<std::size_t> ids;
      ids.reserve(u.tokens.size());
      for (const auto& t : u.tokens) ids.push_back(out.vocab.id(t));
      out.unlabeled_ids.push_back(std::move(ids));
    }
  out.valid = std::move(splits.valid);
  out.test = std::move(splits.test);
  return out;
}

// ---- evaluation with a model ----

struct EvalScores {
  double bleu_score = 0.0;
  double err = 0.0;
};

struct GenerationRecord {
  std::string da;
  std::vector<BeamHypothesis> top_k;
  std::vector<std::string> tokens;  // top hypothesis, as strings
};

inline std::vector<std::string> ids_to_tokens(const Vocabulary& vocab,
                                              const std::vector<std::size_t>& ids) {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (std::size_t id : ids)
    if (id != Vocabulary::kEos) out.push_back(vocab.token(id));
  return out;
}

// Beam-decodes every example's DA and scores BLEU against the example's
// delexicalized references and pooled slot error rate against the DAs.
inline EvalScores evaluate_split(const Generator& gen, const std::vector<Example>& split,
                                 const BeamConfig& beam_cfg,
                                 std::vector<GenerationRecord>* generations = nullptr,
                                 const BinarySlotKeywords* binary_keywords = nullptr) {
  if (split.empty()) throw std::invalid_argument("evaluate_split: empty split");
  std::vector<std::vector<std::string>> candidates;
  std::vector<std::vector<std::vector<std::string>>> references;
  std::vector<DialogueAct> das;
  for (const auto& ex : split) {
    auto hyps = gen.generate(ex.da, beam_cfg);
    std::vector<std::string> tokens =
        hyps.empty() ? std::vector<std::string>{} : ids_to_tokens(gen.vocab(), hyps[0].tokens);
    if (generations) {
      GenerationRecord rec;
      rec.da = serialize_da(ex.da);
      rec.top_k = hyps;
      rec.tokens = tokens;
      generations->push_back(std::move(rec));
    }
    candidates.push_back(std::move(tokens));
    std::vector<std::vector<std::string>> refs;
    for (const auto& u : ex.delex_refs) refs.push_back(u.tokens);
    references.push_back(std::move(refs));
    das.push_back(ex.da);
  }
  EvalScores s;
  s.bleu_score = bleu(candidates, references);
  s.err = slot_error_rate(candidates, das, binary_keywords);
  return s;
}

// Teacher-forced argmax accuracy in eval mode (decode-time latent).
inline double teacher_forced_accuracy(const Generator& gen,
                                      std::span<const TrainPair> pairs) {
  ad::NoGradGuard guard;
  std::size_t correct = 0, total = 0;
  for (const auto& ex : pairs) {
    ad::Var h_da = gen.encode_da(ex.da);
    ad::Var h_e = gen.decode_h_e(h_da);
    ad::LstmState state = gen.decoder().init_state(h_da, h_e);
    std::size_t prev = Vocabulary::kBos;
    for (std::size_t t = 0; t <= ex.ids.size(); ++t) {
      const std::size_t target = t < ex.ids.size() ? ex.ids[t] : Vocabulary::kEos;
      auto s = gen.decoder().step(prev, state, h_da, h_e);
      const auto& lp = s.log_probs.value().values;
      const std::size_t argmax =
          static_cast<std::size_t>(std::max_element(lp.begin(), lp.end()) - lp.begin());
      correct += (argmax == target) ? 1 : 0;
      ++total;
      state = s.state;
      prev = target;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

// Mean posterior-vs-prior KL over pairs, eval mode. The posterior-collapse
// diagnostic: near zero means the latent carries nothing.
inline double mean_posterior_kl(const Generator& gen, std::span<const TrainPair> pairs,
                                std::size_t limit = 200) {
  if (!gen.variational()) return 0.0;
  ad::NoGradGuard guard;
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& ex : pairs) {
    if (n >= limit) break;
    ad::Var h_da = gen.encode_da(ex.da);
    ad::Var h_u = gen.encode_utterance(ex.ids);
    DiagonalGaussian q = gen.latent().posterior(h_da, h_u);
    DiagonalGaussian p = gen.latent().prior(h_da);
    total += kl_gaussians(q, p).scalar();
    ++n;
  }
  return n == 0 ? 0.0 : total / static_cast<double>(n);
}

// ---- the training loop ----

struct TrainConfig {
  ModelKind kind = ModelKind::cvnlg;
  ModelDims dims;
  bool latent_injection = true;
  int batch_size = 32;
  int max_epochs = 50;
  int patience = 5;
  int mc_samples = 1;
  double dropout_keep = 0.7;
  double clip_norm = 5.0;
  double base_lr = 1e-3;
  double lr_decay = 0.95;
  int lr_hold_epochs = 5;
  AnnealSchedule anneal;
  double swap_rate = 0.05;
  BeamConfig beam{};
  int validate_every = 1;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const {
    return nlohmann::json{{"model", to_string(kind)},
                          {"dims", dims.to_json()},
                          {"latent_injection", latent_injection},
                          {"batch_size", batch_size},
                          {"max_epochs", max_epochs},
                          {"patience", patience},
                          {"mc_samples", mc_samples},
                          {"dropout_keep", dropout_keep},
                          {"clip_norm", clip_norm},
                          {"base_lr", base_lr},
                          {"lr_decay", lr_decay},
                          {"lr_hold_epochs", lr_hold_epochs},
                          {"kl_warmup_steps", anneal.kl_warmup_steps},
                          {"alpha_decay_steps", anneal.alpha_decay_steps},
                          {"swap_rate", swap_rate},
                          {"beam_width", beam.width},
                          {"max_decode_len", beam.max_len},
                          {"length_norm", beam.length_norm},
                          {"validate_every", validate_every},
                          {"seed", seed}};
  }

  static TrainConfig from_json(const nlohmann::json& j) {
    TrainConfig c;
    if (j.contains("model")) c.kind = model_kind_from_string(j.at("model").get<std::string>());
    if (j.contains("dims")) c.dims = ModelDims::from_json(j.at("dims"));
    c.latent_injection = j.value("latent_injection", c.latent_injection);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.patience = j.value("patience", c.patience);
    c.mc_samples = j.value("mc_samples", c.mc_samples);
    c.dropout_keep = j.value("dropout_keep", c.dropout_keep);
    c.clip_norm = j.value("clip_norm", c.clip_norm);
    c.base_lr = j.value("base_lr", c.base_lr);
    c.lr_decay = j.value("lr_decay", c.lr_decay);
    c.lr_hold_epochs = j.value("lr_hold_epochs", c.lr_hold_epochs);
    c.anneal.kl_warmup_steps = j.value("kl_warmup_steps", c.anneal.kl_warmup_steps);
    c.anneal.alpha_decay_steps = j.value("alpha_decay_steps", c.anneal.alpha_decay_steps);
    c.swap_rate = j.value("swap_rate", c.swap_rate);
    c.beam.width = j.value("beam_width", c.beam.width);
    c.beam.max_len = j.value("max_decode_len", c.beam.max_len);
    c.beam.length_norm = j.value("length_norm", c.beam.length_norm);
    c.validate_every = j.value("validate_every", c.validate_every);
    c.seed = j.value("seed", c.seed);
    return c;
  }
};

struct TrainOutcome {
  bool diverged = false;
  int epochs_run = 0;
  int best_epoch = -1;
  double best_bleu = 0.0;
  double best_err = 100.0;
  double final_train_kl = 0.0;
  std::vector<std::string> csv_rows;       // header + one row per event
  std::vector<double> epoch_val_bleu, epoch_val_err;
};

namespace detail {

inline std::string csv_header() {
  return "step,epoch,lr,kl_w,alpha,loss_total,loss_kl,loss_nll,loss_ae,loss_dadcnn,"
         "val_bleu,val_err";
}

inline std::string step_row(std::size_t step, int epoch, double lr, double kl_w, double alpha,
                            const LossBreakdown& bd) {
  return std::to_string(step) + "," + std::to_string(epoch) + "," + fmt_g17(lr) + "," +
         fmt_g17(kl_w) + "," + fmt_g17(alpha) + "," + fmt_g17(bd.total) + "," +
         fmt_g17(bd.kl) + "," + fmt_g17(bd.nll) + "," + fmt_g17(bd.ae) + "," +
         fmt_g17(bd.dadcnn) + ",,";
}

inline std::string val_row(std::size_t step, int epoch, const EvalScores& s) {
  return std::to_string(step) + "," + std::to_string(epoch) + ",,,,,,,,," +
         fmt_g17(s.bleu_score) + "," + fmt_g17(s.err);
}

}  // namespace detail

// Epoch loop with per-step annealing, global-norm clipping, Adam with the
// exponential lr schedule, per-epoch validation BLEU/ERR, and early
// stopping on validation BLEU (ties broken by lower ERR). The best
// checkpoint is restored into the generator before returning. Training on
// a divergent (non-finite) loss aborts the run and flags the outcome.
inline TrainOutcome train_run(Generator& gen, const PreparedData& data,
                              const TrainConfig& cfg, bool use_fine_tune_pairs = false) {
  const std::vector<TrainPair>& pairs =
      use_fine_tune_pairs ? data.fine_tune_pairs : data.train_pairs;
  if (pairs.empty()) throw std::invalid_argument("train_run: empty training split");
  if (data.valid.empty()) throw std::invalid_argument("train_run: empty validation split");

  TrainOutcome out;
  out.csv_rows.push_back(detail::csv_header());

  Rng rng(cfg.seed, "train");
  Adam adam;
  LossOptions opt;
  opt.dropout_keep = cfg.dropout_keep;
  opt.mc_samples = cfg.mc_samples;
  opt.swap_rate = cfg.swap_rate;
  opt.train_mode = true;

  std::vector<std::size_t> order(pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  std::vector<Tensor> best_params;
  std::size_t global_step = 0;
  std::size_t unlabeled_pos = 0;
  int epochs_since_improve = 0;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    out.epochs_run = epoch;
    const double lr = lr_schedule(epoch, cfg.base_lr, cfg.lr_decay, cfg.lr_hold_epochs);
    rng.shuffle(order);

    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<TrainPair> batch;
      batch.reserve(end - start);
      for (std::size_t i = start; i < end; ++i) batch.push_back(pairs[order[i]]);

      // unlabeled utterances ride along one batch at a time (semi scenario)
      std::vector<std::vector<std::size_t>> unlabeled_batch;
      if (!data.unlabeled_ids.empty() && gen.has_autoencoder() && !use_fine_tune_pairs) {
        for (std::size_t k = 0; k < batch.size() && k < data.unlabeled_ids.size(); ++k) {
          unlabeled_batch.push_back(data.unlabeled_ids[unlabeled_pos]);
          unlabeled_pos = (unlabeled_pos + 1) % data.unlabeled_ids.size();
        }
      }

      const double kl_w = cfg.anneal.kl_weight(global_step);
      const double alpha = cfg.anneal.alpha(global_step);
      LossBreakdown bd;
      ad::Var loss = model_loss(gen, batch, unlabeled_batch, kl_w, alpha, opt, rng, &bd);
      if (!std::isfinite(loss.scalar())) {
        out.diverged = true;
        out.csv_rows.push_back("# diverged at step " + std::to_string(global_step));
        return out;
      }
      ad::backward(loss);
      clip_global_norm(gen.params(), cfg.clip_norm);
      try {
        adam.step(gen.params(), lr);
      } catch (const std::runtime_error&) {
        out.diverged = true;
        out.csv_rows.push_back("# diverged at step " + std::to_string(global_step));
        return out;
      }
      out.csv_rows.push_back(detail::step_row(global_step, epoch, lr, kl_w, alpha, bd));
      ++global_step;
    }

    if (epoch % cfg.validate_every == 0 || epoch == cfg.max_epochs) {
      EvalScores val = evaluate_split(gen, data.valid, cfg.beam);
      out.csv_rows.push_back(detail::val_row(global_step, epoch, val));
      out.epoch_val_bleu.push_back(val.bleu_score);
      out.epoch_val_err.push_back(val.err);
      const bool improved = val.bleu_score > out.best_bleu ||
                            (val.bleu_score == out.best_bleu && val.err < out.best_err);
      if (improved) {
        out.best_bleu = val.bleu_score;
        out.best_err = val.err;
        out.best_epoch = epoch;
        epochs_since_improve = 0;
        best_params.clear();
        for (std::size_t i = 0; i < gen.params().size(); ++i)
          best_params.push_back(gen.params().at(i).value());
      } else {
        ++epochs_since_improve;
        if (epochs_since_improve >= cfg.patience) break;
      }
    }
  }

  if (!best_params.empty())
    for (std::size_t i = 0; i < gen.params().size(); ++i)
      gen.params().at(i).value() = best_params[i];

  out.final_train_kl = mean_posterior_kl(gen, pairs);
  return out;
}

}  // namespace vnlg
