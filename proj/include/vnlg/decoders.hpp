#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "vnlg/encoders.hpp"
#include "vnlg/latent.hpp"
#include "vnlg/lstm.hpp"

namespace vnlg {

// Recurrent decoder whose LSTM gates each receive an additive U_g * h_e
// term, so the latent projection can steer the hidden state. A sigmoid
// gate over the DA representation feeds the output projection alongside
// the hidden state.
class RecurrentDecoder {
 public:
  RecurrentDecoder() = default;

  RecurrentDecoder(ParameterStore& store, std::size_t vocab_size, std::size_t emb_dim,
                   std::size_t hidden, std::size_t da_dim, std::size_t latent_out_dim,
                   bool with_latent_gates)
      : vocab_size_(vocab_size), hidden_(hidden), latent_out_dim_(latent_out_dim) {
    token_emb_ = store.create("dec.token_emb", {vocab_size, emb_dim}).var();
    lstm_ = {store.create("dec.w_x", {4 * hidden, emb_dim}).var(),
             store.create("dec.w_h", {4 * hidden, hidden}).var(),
             store.create("dec.b", {4 * hidden}, Init::lstm_bias).var()};
    if (with_latent_gates)
      u_z_ = store.create("dec.u_z", {4 * hidden, latent_out_dim}).var();
    w_init_ = store.create("dec.w_init", {2 * hidden, da_dim + latent_out_dim}).var();
    b_init_ = store.create("dec.b_init", {2 * hidden}, Init::zeros).var();
    w_gate_ = store.create("dec.w_gate", {da_dim, hidden}).var();
    b_gate_ = store.create("dec.b_gate", {da_dim}, Init::zeros).var();
    w_out_ = store.create("dec.w_out", {vocab_size, hidden + da_dim}).var();
    b_out_ = store.create("dec.b_out", {vocab_size}, Init::zeros).var();
  }

  std::size_t vocab_size() const { return vocab_size_; }
  std::size_t hidden() const { return hidden_; }

  // state from a learned transform of [h_D; h_e]; h_e falls back to zero
  // when the variational path is off
  ad::LstmState init_state(const ad::Var& h_da, const ad::Var& h_e) const {
    ad::Var latent = h_e.defined() ? h_e : ad::constant(Tensor::zeros({latent_out_dim_}));
    ad::Var hc = ad::tanh(ad::affine(w_init_, ad::concat(h_da, latent), b_init_));
    return {ad::slice(hc, 0, hidden_), ad::slice(hc, hidden_, hidden_)};
  }

  struct Step {
    ad::LstmState state;
    ad::Var log_probs;
  };

  Step step(std::size_t prev_token, const ad::LstmState& state, const ad::Var& h_da,
            const ad::Var& h_e, bool train_mode = false, double dropout_keep = 1.0,
            Rng* rng = nullptr) const {
    ad::Var x = ad::row(token_emb_, prev_token);
    ad::Var injection;
    if (u_z_.defined() && h_e.defined()) injection = ad::linear(u_z_, h_e);
    ad::LstmState next = ad::lstm_step(x, state, lstm_, injection);
    ad::Var da_feature = ad::mul(ad::sigmoid(ad::affine(w_gate_, next.h, b_gate_)), h_da);
    ad::Var h_out = next.h;
    if (train_mode && rng) h_out = ad::dropout(h_out, dropout_keep, *rng, true);
    ad::Var logits = ad::affine(w_out_, ad::concat(h_out, da_feature), b_out_);
    return {next, ad::log_softmax(logits)};
  }

  // -sum_t log p(u_t | u_<t, d, h_e); BOS-fed, EOS-terminated
  ad::Var teacher_forced_nll(const std::vector<std::size_t>& ids, const ad::Var& h_da,
                             const ad::Var& h_e, std::size_t bos, std::size_t eos,
                             bool train_mode = false, double dropout_keep = 1.0,
                             Rng* rng = nullptr) const {
    if (ids.empty()) throw std::invalid_argument("teacher_forced_nll: empty utterance");
    ad::LstmState state = init_state(h_da, h_e);
    std::size_t prev = bos;
    std::vector<ad::Var> terms;
    terms.reserve(ids.size() + 1);
    for (std::size_t t = 0; t <= ids.size(); ++t) {
      const std::size_t target = t < ids.size() ? ids[t] : eos;
      Step s = step(prev, state, h_da, h_e, train_mode, dropout_keep, rng);
      terms.push_back(ad::neg(ad::pick(s.log_probs, target)));
      state = s.state;
      prev = target;
    }
    return ad::add_n(terms);
  }

 private:
  std::size_t vocab_size_ = 0, hidden_ = 0, latent_out_dim_ = 0;
  ad::Var token_emb_;
  ad::LstmWeights lstm_;
  ad::Var u_z_;
  ad::Var w_init_, b_init_, w_gate_, b_gate_, w_out_, b_out_;
};

// Deconvolutional mirror of the CNN encoder: h_e lifts to the 1 x k3 map,
// transposed convolutions walk the shape chain backwards, and a
// position-wise projection emits vocabulary logits for all positions.
class DeconvDecoder {
 public:
  DeconvDecoder() = default;

  DeconvDecoder(ParameterStore& store, std::size_t vocab_size, const CnnGeometry& geom,
                std::size_t latent_out_dim)
      : geom_(geom), vocab_size_(vocab_size) {
    geom_.validate();
    w_lift_ = store.create("dcnn.lift.w", {geom_.filters[2], latent_out_dim}).var();
    b_lift_ = store.create("dcnn.lift.b", {geom_.filters[2]}, Init::zeros).var();
    const std::size_t depths[4] = {geom_.emb_dim, geom_.filters[0], geom_.filters[1],
                                   geom_.filters[2]};
    for (int l = 2; l >= 0; --l) {
      const std::string prefix = "dcnn.deconv" + std::to_string(l + 1);
      filters_[l] = store.create(prefix + ".f",
                                 {geom_.filters[l], geom_.widths[l], depths[l]}).var();
      biases_[l] = store.create(prefix + ".b", {depths[l]}, Init::zeros).var();
    }
    w_voc_ = store.create("dcnn.out.w", {vocab_size, geom_.emb_dim}).var();
    b_voc_ = store.create("dcnn.out.b", {vocab_size}, Init::zeros).var();
  }

  std::size_t output_len() const { return geom_.input_len; }

  // [T x V] logits
  ad::Var logits(const ad::Var& h_e, bool train_mode = false, double dropout_keep = 1.0,
                 Rng* rng = nullptr) const {
    ad::Var map = ad::reshape(ad::affine(w_lift_, h_e, b_lift_), {1, geom_.filters[2]});
    map = ad::relu(ad::add_rowwise(ad::conv1d_transposed(map, filters_[2], geom_.strides[2]),
                                   biases_[2]));
    map = ad::relu(ad::add_rowwise(ad::conv1d_transposed(map, filters_[1], geom_.strides[1]),
                                   biases_[1]));
    map = ad::add_rowwise(ad::conv1d_transposed(map, filters_[0], geom_.strides[0]),
                          biases_[0]);
    if (train_mode && rng) map = ad::dropout(map, dropout_keep, *rng, true);
    return ad::affine_rows(w_voc_, map, b_voc_);
  }

  // clean tokens, then EOS, then PAD out to the fixed length
  std::vector<std::size_t> target_frame(const std::vector<std::size_t>& ids, std::size_t eos,
                                        std::size_t pad) const {
    const std::size_t t = geom_.input_len;
    std::vector<std::size_t> frame(ids.begin(),
                                   ids.begin() + std::min(ids.size(), t - 1));
    frame.push_back(eos);
    frame.resize(t, pad);
    return frame;
  }

  // per-position cross-entropy of the padded target
  ad::Var reconstruction_nll(const ad::Var& h_e, const std::vector<std::size_t>& ids,
                             std::size_t eos, std::size_t pad, bool train_mode = false,
                             double dropout_keep = 1.0, Rng* rng = nullptr) const {
    return ad::seq_cross_entropy(logits(h_e, train_mode, dropout_keep, rng),
                                 target_frame(ids, eos, pad));
  }

 private:
  CnnGeometry geom_;
  std::size_t vocab_size_ = 0;
  ad::Var w_lift_, b_lift_;
  std::array<ad::Var, 3> filters_;
  std::array<ad::Var, 3> biases_;
  ad::Var w_voc_, b_voc_;
};

// ---- beam search ----

struct BeamConfig {
  std::size_t width = 10;
  std::size_t max_len = 73;
  double length_norm = 0.7;  // final ranking: log-prob / len^length_norm
};

struct BeamHypothesis {
  std::vector<std::size_t> tokens;  // excludes BOS; includes EOS when finished
  double log_prob = 0.0;
  double score = 0.0;
  bool finished = false;
};

// Standard beam over RecurrentDecoder::step. Deterministic: ties break on
// the token sequence. When nothing finishes within max_len the best
// partial hypothesis is returned with `finished = false`.
inline std::vector<BeamHypothesis> beam_search(const RecurrentDecoder& dec,
                                               const ad::Var& h_da, const ad::Var& h_e,
                                               const BeamConfig& cfg, std::size_t bos,
                                               std::size_t eos,
                                               const std::vector<std::size_t>& blocked = {}) {
  ad::NoGradGuard guard;
  if (cfg.width == 0) throw std::invalid_argument("beam_search: width must be positive");

  struct Live {
    std::vector<std::size_t> tokens;
    double log_prob;
    ad::LstmState state;
    std::size_t prev;
  };
  auto norm_score = [&cfg](double lp, std::size_t len) {
    return lp / std::pow(static_cast<double>(std::max<std::size_t>(len, 1)), cfg.length_norm);
  };
  auto is_blocked = [&blocked](std::size_t tok) {
    return std::find(blocked.begin(), blocked.end(), tok) != blocked.end();
  };

  std::vector<Live> live;
  live.push_back({{}, 0.0, dec.init_state(h_da, h_e), bos});
  std::vector<BeamHypothesis> done;

  for (std::size_t depth = 0; depth < cfg.max_len && !live.empty(); ++depth) {
    struct Cand {
      std::size_t parent;
      std::size_t token;
      double log_prob;
    };
    std::vector<Cand> cands;
    std::vector<ad::LstmState> next_states(live.size());
    for (std::size_t i = 0; i < live.size(); ++i) {
      auto s = dec.step(live[i].prev, live[i].state, h_da, h_e);
      next_states[i] = s.state;
      const auto& lp = s.log_probs.value().values;
      for (std::size_t v = 0; v < lp.size(); ++v) {
        if (is_blocked(v)) continue;
        cands.push_back({i, v, live[i].log_prob + lp[v]});
      }
    }
    std::stable_sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
      return a.log_prob > b.log_prob;
    });

    // the top `width` candidates claim the beam slots; an EOS candidate
    // retires its slot into the done pool (this is what makes width = 1
    // coincide with greedy decoding)
    std::vector<Live> next_live;
    std::size_t taken = 0;
    for (const Cand& c : cands) {
      if (taken >= cfg.width) break;
      ++taken;
      std::vector<std::size_t> toks = live[c.parent].tokens;
      toks.push_back(c.token);
      if (c.token == eos)
        done.push_back({toks, c.log_prob, norm_score(c.log_prob, toks.size()), true});
      else
        next_live.push_back({std::move(toks), c.log_prob, next_states[c.parent], c.token});
    }
    live = std::move(next_live);
  }

  if (done.empty())  // nothing emitted EOS: fall back to the best partials
    for (const Live& l : live)
      done.push_back({l.tokens, l.log_prob, norm_score(l.log_prob, l.tokens.size()), false});

  std::stable_sort(done.begin(), done.end(), [](const BeamHypothesis& a,
                                                const BeamHypothesis& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.tokens < b.tokens;
  });
  if (done.size() > cfg.width) done.resize(cfg.width);
  return done;
}

}  // namespace vnlg
