#include <catch2/catch_amalgamated.hpp>

#include "test_util.hpp"
#include "vnlg/decoders.hpp"

using namespace vnlg;
using Catch::Approx;

namespace {

CnnGeometry tiny_geometry() {
  CnnGeometry g;
  g.input_len = 9;
  g.emb_dim = 4;
  g.strides = {2, 2, 2};
  g.filters = {6, 8, 5};
  g.widths = {3, 2, 2};
  return g;
}

struct TinyDecoder {
  ParameterStore store;
  RecurrentDecoder dec;
  Tensor h_da, h_e;

  TinyDecoder(std::size_t vocab, std::uint64_t seed, bool gates = true,
              std::size_t da_dim = 5, std::size_t d_e = 3, std::size_t hidden = 6)
      : store(seed), dec(store, vocab, 4, hidden, da_dim, d_e, gates) {
    Rng rng(seed, "inputs");
    h_da = test::random_tensor(rng, {da_dim});
    h_e = test::random_tensor(rng, {d_e});
  }
};

// every EOS-terminated sequence up to max_len, scored like the beam
struct Exhaustive {
  std::vector<std::size_t> best_tokens;
  double best_score = -1e300;
};

void enumerate(const RecurrentDecoder& dec, const ad::Var& h_da, const ad::Var& h_e,
               const ad::LstmState& state, std::size_t prev, std::vector<std::size_t>& prefix,
               double lp, std::size_t max_len, std::size_t eos, double len_norm,
               const std::vector<std::size_t>& blocked, Exhaustive& out) {
  if (prefix.size() >= max_len) return;
  auto s = dec.step(prev, state, h_da, h_e);
  const auto& probs = s.log_probs.value().values;
  for (std::size_t v = 0; v < probs.size(); ++v) {
    if (std::find(blocked.begin(), blocked.end(), v) != blocked.end()) continue;
    prefix.push_back(v);
    const double nlp = lp + probs[v];
    if (v == eos) {
      const double score =
          nlp / std::pow(static_cast<double>(prefix.size()), len_norm);
      if (score > out.best_score ||
          (score == out.best_score && prefix < out.best_tokens)) {
        out.best_score = score;
        out.best_tokens = prefix;
      }
    } else {
      enumerate(dec, h_da, h_e, s.state, v, prefix, nlp, max_len, eos, len_norm, blocked,
                out);
    }
    prefix.pop_back();
  }
}

}  // namespace

TEST_CASE("decoder step emits a proper log distribution") {
  TinyDecoder t(9, 101);
  ad::NoGradGuard guard;
  ad::Var h_da = ad::constant(t.h_da);
  ad::Var h_e = ad::constant(t.h_e);
  auto state = t.dec.init_state(h_da, h_e);
  auto s = t.dec.step(Vocabulary::kBos, state, h_da, h_e);
  double sum = 0.0;
  for (double lp : s.log_probs.value().values) {
    REQUIRE(lp < 0.0);
    sum += std::exp(lp);
  }
  REQUIRE(std::abs(sum - 1.0) < 1e-9);
}

TEST_CASE("zeroed latent gate matrices reduce to the plain conditioned step") {
  TinyDecoder with_gates(9, 102, true);
  // a twin without the gate matrices, same seed: shared names share values
  TinyDecoder without(9, 102, false);

  ad::Parameter* u_z = with_gates.store.find("dec.u_z");
  REQUIRE(u_z != nullptr);
  u_z->value().fill(0.0);

  ad::NoGradGuard guard;
  ad::Var h_da = ad::constant(with_gates.h_da);
  ad::Var h_e = ad::constant(with_gates.h_e);
  auto st1 = with_gates.dec.init_state(h_da, h_e);
  auto st2 = without.dec.init_state(h_da, h_e);
  REQUIRE(st1.h.value().values == st2.h.value().values);

  auto s1 = with_gates.dec.step(Vocabulary::kBos, st1, h_da, h_e);
  auto s2 = without.dec.step(Vocabulary::kBos, st2, h_da, h_e);
  for (std::size_t i = 0; i < s1.log_probs.size(); ++i)
    REQUIRE(s1.log_probs.value().values[i] == Approx(s2.log_probs.value().values[i]));
}

TEST_CASE("latent vector perturbation moves the gate activations") {
  TinyDecoder t(9, 103);
  ad::NoGradGuard guard;
  ad::Var h_da = ad::constant(t.h_da);
  auto state = t.dec.init_state(h_da, ad::constant(t.h_e));
  Tensor h_e2 = t.h_e;
  h_e2.values[0] += 0.25;
  auto a = t.dec.step(2, state, h_da, ad::constant(t.h_e));
  auto b = t.dec.step(2, state, h_da, ad::constant(h_e2));
  double diff = 0.0;
  for (std::size_t i = 0; i < a.log_probs.size(); ++i)
    diff += std::abs(a.log_probs.value().values[i] - b.log_probs.value().values[i]);
  REQUIRE(diff > 1e-9);
}

TEST_CASE("decoder gradients match finite differences through two steps") {
  TinyDecoder t(7, 104, true, 4, 3, 4);
  std::vector<std::size_t> ids{4, 2, 5};
  REQUIRE(test::gradient_check(t.store, [&] {
            ad::Var h_da = ad::constant(t.h_da);
            ad::Var h_e = ad::constant(t.h_e);
            return t.dec.teacher_forced_nll(ids, h_da, h_e, Vocabulary::kBos,
                                            Vocabulary::kEos);
          }) < 1e-4);
}

TEST_CASE("teacher-forced nll equals the negated sum of step log-probs") {
  TinyDecoder t(9, 105);
  ad::NoGradGuard guard;
  ad::Var h_da = ad::constant(t.h_da);
  ad::Var h_e = ad::constant(t.h_e);
  std::vector<std::size_t> ids{4, 7, 2, 8};

  const double nll = t.dec.teacher_forced_nll(ids, h_da, h_e, Vocabulary::kBos,
                                              Vocabulary::kEos).scalar();
  double manual = 0.0;
  auto state = t.dec.init_state(h_da, h_e);
  std::size_t prev = Vocabulary::kBos;
  for (std::size_t ti = 0; ti <= ids.size(); ++ti) {
    const std::size_t target = ti < ids.size() ? ids[ti] : Vocabulary::kEos;
    auto s = t.dec.step(prev, state, h_da, h_e);
    manual -= s.log_probs.value().values[target];
    state = s.state;
    prev = target;
  }
  REQUIRE(std::abs(nll - manual) < 1e-10);
}

TEST_CASE("single-token vocabulary forces probability one and zero nll") {
  TinyDecoder t(1, 106);
  ad::NoGradGuard guard;
  ad::Var h_da = ad::constant(t.h_da);
  ad::Var h_e = ad::constant(t.h_e);
  std::vector<std::size_t> ids{0, 0};
  REQUIRE(t.dec.teacher_forced_nll(ids, h_da, h_e, 0, 0).scalar() == 0.0);
}

TEST_CASE("uniform untrained decoder nll is T ln V") {
  ParameterStore store(107);
  RecurrentDecoder dec(store, 11, 4, 6, 5, 3, true);
  for (std::size_t i = 0; i < store.size(); ++i) store.at(i).value().fill(0.0);
  ad::NoGradGuard guard;
  ad::Var h_da = ad::constant(Tensor::zeros({5}));
  ad::Var h_e = ad::constant(Tensor::zeros({3}));
  std::vector<std::size_t> ids{4, 7, 2};  // 3 tokens + EOS = 4 steps
  const double nll = dec.teacher_forced_nll(ids, h_da, h_e, 1, 2).scalar();
  REQUIRE(nll == Approx(4.0 * std::log(11.0)).epsilon(1e-12));
}

TEST_CASE("dcnn decoder walks the mirrored shape chain") {
  ParameterStore store(108);
  DeconvDecoder dec(store, 13, tiny_geometry(), 3);
  ad::NoGradGuard guard;
  Rng rng(1);
  ad::Var logits = dec.logits(ad::constant(test::random_tensor(rng, {3})));
  REQUIRE(logits.value().shape == std::vector<std::size_t>{9, 13});
}

TEST_CASE("dcnn with zero latent and zero biases emits uniform logits") {
  ParameterStore store(109);
  DeconvDecoder dec(store, 13, tiny_geometry(), 3);
  ad::NoGradGuard guard;
  ad::Var logits = dec.logits(ad::constant(Tensor::zeros({3})));
  for (double v : logits.value().values) REQUIRE(v == 0.0);
}

TEST_CASE("dcnn target framing: tokens, EOS, then PAD") {
  ParameterStore store(110);
  DeconvDecoder dec(store, 13, tiny_geometry(), 3);
  auto frame = dec.target_frame({5, 6}, Vocabulary::kEos, Vocabulary::kPad);
  REQUIRE(frame == std::vector<std::size_t>{5, 6, 2, 0, 0, 0, 0, 0, 0});
  // overlong inputs truncate to leave room for EOS
  std::vector<std::size_t> longids(20, 5);
  auto f2 = dec.target_frame(longids, Vocabulary::kEos, Vocabulary::kPad);
  REQUIRE(f2.size() == 9);
  REQUIRE(f2.back() == Vocabulary::kEos);
}

TEST_CASE("gradients reach h_e from the last output position") {
  ParameterStore store(111);
  auto& h_e = store.create("h_e_probe", {3}, Init::xavier);
  DeconvDecoder dec(store, 13, tiny_geometry(), 3);
  store.zero_grads();
  ad::Var logits = dec.logits(h_e.var());
  // loss reads only the final position's logits
  ad::Var last = ad::slice(ad::reshape(logits, {9 * 13}), 8 * 13, 13);
  ad::backward(ad::sum(ad::square(last)));
  double g = 0.0;
  for (double v : h_e.grad().values) g += std::abs(v);
  REQUIRE(g > 0.0);
}

TEST_CASE("dcnn reconstruction gradients match finite differences") {
  CnnGeometry g = tiny_geometry();
  g.filters = {4, 5, 3};
  ParameterStore store(112);
  auto& h_e = store.create("h_e_probe", {3}, Init::xavier);
  DeconvDecoder dec(store, 7, g, 3);
  std::vector<std::size_t> ids{4, 6, 5};
  REQUIRE(test::gradient_check(store, [&] {
            return dec.reconstruction_nll(h_e.var(), ids, Vocabulary::kEos,
                                          Vocabulary::kPad);
          }) < 1e-4);
}

TEST_CASE("beam width 1 equals greedy decoding") {
  for (std::uint64_t seed : {7ull, 8ull, 9ull}) {
    TinyDecoder t(8, 200 + seed);
    ad::NoGradGuard guard;
    ad::Var h_da = ad::constant(t.h_da);
    ad::Var h_e = ad::constant(t.h_e);

    BeamConfig cfg;
    cfg.width = 1;
    cfg.max_len = 6;
    auto beam = beam_search(t.dec, h_da, h_e, cfg, Vocabulary::kBos, Vocabulary::kEos,
                            {Vocabulary::kPad, Vocabulary::kBos});

    // greedy rollout
    std::vector<std::size_t> greedy;
    auto state = t.dec.init_state(h_da, h_e);
    std::size_t prev = Vocabulary::kBos;
    for (std::size_t step = 0; step < cfg.max_len; ++step) {
      auto s = t.dec.step(prev, state, h_da, h_e);
      const auto& lp = s.log_probs.value().values;
      std::size_t best = 0;
      double best_lp = -1e300;
      for (std::size_t v = 0; v < lp.size(); ++v) {
        if (v == Vocabulary::kPad || v == Vocabulary::kBos) continue;
        if (lp[v] > best_lp) {
          best_lp = lp[v];
          best = v;
        }
      }
      greedy.push_back(best);
      if (best == Vocabulary::kEos) break;
      state = s.state;
      prev = best;
    }
    REQUIRE(beam.front().tokens == greedy);
  }
}

TEST_CASE("beam search equals exhaustive argmax on small models") {
  // pruning-free regimes: per-level candidate counts never exceed the
  // width, so the beam enumerates the whole EOS-terminated space
  struct Case {
    std::size_t vocab, max_len;
  };
  Rng seeds(33);
  int cases = 0;
  for (const Case c : {Case{4, 4}, Case{5, 3}, Case{3, 4}, Case{8, 2}}) {
    for (int rep = 0; rep < 6; ++rep) {
      TinyDecoder t(c.vocab, 5000 + 97 * cases, true, 4, 3, 5);
      ad::NoGradGuard guard;
      ad::Var h_da = ad::constant(t.h_da);
      ad::Var h_e = ad::constant(t.h_e);

      BeamConfig cfg;
      cfg.width = 64;
      cfg.max_len = c.max_len;
      const std::size_t eos = 1;
      const std::vector<std::size_t> blocked{0};
      auto beam =
          beam_search(t.dec, h_da, h_e, cfg, /*bos=*/0, eos, blocked);

      Exhaustive ex;
      std::vector<std::size_t> prefix;
      auto state = t.dec.init_state(h_da, h_e);
      enumerate(t.dec, h_da, h_e, state, 0, prefix, 0.0, cfg.max_len, eos,
                cfg.length_norm, blocked, ex);

      REQUIRE(!beam.empty());
      REQUIRE(beam.front().tokens == ex.best_tokens);
      REQUIRE(beam.front().score == Approx(ex.best_score).epsilon(1e-12));
      ++cases;
    }
  }
  REQUIRE(cases == 24);
}

TEST_CASE("beam search is deterministic") {
  TinyDecoder t(9, 300);
  ad::NoGradGuard guard;
  ad::Var h_da = ad::constant(t.h_da);
  ad::Var h_e = ad::constant(t.h_e);
  BeamConfig cfg;
  cfg.width = 10;
  cfg.max_len = 12;
  auto a = beam_search(t.dec, h_da, h_e, cfg, Vocabulary::kBos, Vocabulary::kEos);
  auto b = beam_search(t.dec, h_da, h_e, cfg, Vocabulary::kBos, Vocabulary::kEos);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a[i].tokens == b[i].tokens);
    REQUIRE(a[i].score == b[i].score);
  }
}

TEST_CASE("beam scores accumulate non-increasing log-probs") {
  TinyDecoder t(9, 301);
  ad::NoGradGuard guard;
  ad::Var h_da = ad::constant(t.h_da);
  ad::Var h_e = ad::constant(t.h_e);
  BeamConfig cfg;
  cfg.width = 5;
  cfg.max_len = 10;
  auto hyps = beam_search(t.dec, h_da, h_e, cfg, Vocabulary::kBos, Vocabulary::kEos);
  for (const auto& h : hyps) REQUIRE(h.log_prob <= 0.0);
}

TEST_CASE("beam falls back to best partial when EOS cannot be emitted") {
  TinyDecoder t(9, 302);
  ad::NoGradGuard guard;
  ad::Var h_da = ad::constant(t.h_da);
  ad::Var h_e = ad::constant(t.h_e);
  BeamConfig cfg;
  cfg.width = 4;
  cfg.max_len = 3;
  // blocking EOS forces the fallback path
  auto hyps = beam_search(t.dec, h_da, h_e, cfg, Vocabulary::kBos, Vocabulary::kEos,
                          {Vocabulary::kPad, Vocabulary::kBos, Vocabulary::kEos});
  REQUIRE(!hyps.empty());
  REQUIRE(!hyps.front().finished);
  REQUIRE(hyps.front().tokens.size() == 3);
}
