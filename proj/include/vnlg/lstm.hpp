#pragma once

#include <vector>

#include "vnlg/autodiff.hpp"

namespace vnlg::ad {

// Fused LSTM weights. Gate blocks are stacked [i; f; g; o] along the first
// axis: input gate, forget gate, candidate, output gate.
struct LstmWeights {
  Var w_x;  // [4H x D]
  Var w_h;  // [4H x H]
  Var b;    // [4H]
};

struct LstmState {
  Var h;
  Var c;
};

inline LstmState lstm_zero_state(std::size_t hidden) {
  return {constant(Tensor::zeros({hidden})), constant(Tensor::zeros({hidden}))};
}

// One step of the standard LSTM. `pre_extra`, when defined, is added to the
// gate pre-activations (the latent injection path of the decoder).
inline LstmState lstm_step(const Var& x, const LstmState& prev, const LstmWeights& w,
                           const Var& pre_extra = Var()) {
  const std::size_t hidden = prev.h.size();
  Var pre = add(affine(w.w_x, x, w.b), linear(w.w_h, prev.h));
  if (pre_extra.defined()) pre = add(pre, pre_extra);
  Var i = sigmoid(slice(pre, 0, hidden));
  Var f = sigmoid(slice(pre, hidden, hidden));
  Var g = tanh(slice(pre, 2 * hidden, hidden));
  Var o = sigmoid(slice(pre, 3 * hidden, hidden));
  Var c = add(mul(f, prev.c), mul(i, g));
  Var h = mul(o, tanh(c));
  return {h, c};
}

// Final-state concatenation of a forward and a backward pass.
inline Var bilstm_encode(const std::vector<Var>& sequence, const LstmWeights& fwd,
                         const LstmWeights& bwd, std::size_t hidden) {
  if (sequence.empty()) throw std::invalid_argument("bilstm_encode: empty sequence");
  LstmState f = lstm_zero_state(hidden);
  for (const Var& x : sequence) f = lstm_step(x, f, fwd);
  LstmState b = lstm_zero_state(hidden);
  for (auto it = sequence.rbegin(); it != sequence.rend(); ++it) b = lstm_step(*it, b, bwd);
  return concat(f.h, b.h);
}

}  // namespace vnlg::ad
