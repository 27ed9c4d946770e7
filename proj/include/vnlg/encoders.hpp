#pragma once

#include <algorithm>
#include <array>
#include <stdexcept>
#include <string>
#include <vector>

#include "vnlg/conv.hpp"
#include "vnlg/dialogue_act.hpp"
#include "vnlg/lstm.hpp"
#include "vnlg/optimizer.hpp"
#include "vnlg/vocab.hpp"

namespace vnlg {

// Three-layer convolutional stack. Defaults are the published geometry:
// a length-73 sentence with embedding 100 maps through filter counts
// {300,600,100}, widths {5,5,16}, strides {2,2,2} to feature maps
// 35x300, 16x600 and 1x100; the last one is h_U.
struct CnnGeometry {
  std::size_t input_len = 73;
  std::size_t emb_dim = 100;
  std::array<std::size_t, 3> strides{2, 2, 2};
  std::array<std::size_t, 3> filters{300, 600, 100};
  std::array<std::size_t, 3> widths{5, 5, 16};

  std::vector<std::size_t> map_lens() const {
    std::vector<std::size_t> lens;
    std::size_t t = input_len;
    for (int l = 0; l < 3; ++l) {
      t = ad::conv_out_len(t, widths[l], strides[l]);
      lens.push_back(t);
    }
    return lens;
  }

  std::size_t latent_dim() const { return filters[2]; }

  // The decoder mirrors the stack with transposed convolutions, so each
  // layer must consume its input exactly: (T - h) divisible by s, and the
  // final map must collapse to length 1.
  void validate() const {
    std::size_t t = input_len;
    for (int l = 0; l < 3; ++l) {
      if (t < widths[l])
        throw std::invalid_argument("cnn geometry: map shorter than filter at layer " +
                                    std::to_string(l));
      if ((t - widths[l]) % strides[l] != 0)
        throw std::invalid_argument("cnn geometry: layer " + std::to_string(l) +
                                    " not exactly invertible ((T-h) % s != 0)");
      t = ad::conv_out_len(t, widths[l], strides[l]);
    }
    if (t != 1) throw std::invalid_argument("cnn geometry: final map length must be 1");
  }
};

// BiLSTM over slot-value pairs. Each pair embeds as [slot emb; value emb];
// the act type leads the sequence as an "act:<type>" pair with the <none>
// value, which also covers slot-less acts.
class DaEncoder {
 public:
  DaEncoder() = default;

  DaEncoder(ParameterStore& store, const DaVocabulary& vocab, std::size_t slot_emb_dim,
            std::size_t value_emb_dim, std::size_t hidden)
      : vocab_(&vocab), hidden_(hidden) {
    const std::size_t in_dim = slot_emb_dim + value_emb_dim;
    slot_emb_ = store.create("da_enc.slot_emb", {vocab.slot_names.size(), slot_emb_dim}).var();
    value_emb_ = store.create("da_enc.value_emb", {vocab.values.size(), value_emb_dim}).var();
    fwd_ = {store.create("da_enc.fwd.w_x", {4 * hidden, in_dim}).var(),
            store.create("da_enc.fwd.w_h", {4 * hidden, hidden}).var(),
            store.create("da_enc.fwd.b", {4 * hidden}, Init::lstm_bias).var()};
    bwd_ = {store.create("da_enc.bwd.w_x", {4 * hidden, in_dim}).var(),
            store.create("da_enc.bwd.w_h", {4 * hidden, hidden}).var(),
            store.create("da_enc.bwd.b", {4 * hidden}, Init::lstm_bias).var()};
  }

  std::size_t output_dim() const { return 2 * hidden_; }

  ad::Var encode(const DialogueAct& da) const {
    std::vector<ad::Var> seq;
    const std::size_t none_id = vocab_->none_value_id();
    const std::string act_key = std::string(DaVocabulary::kActPrefix) + da.act_type;
    seq.push_back(pair_embedding(vocab_->slot_names.id(act_key), none_id));
    for (const auto& sv : da.slots) {
      const std::size_t slot_id = vocab_->slot_names.id(sv.name);
      const std::size_t value_id =
          sv.value ? vocab_->values.id(detail::lower(*sv.value)) : none_id;
      seq.push_back(pair_embedding(slot_id, value_id));
    }
    return ad::bilstm_encode(seq, fwd_, bwd_, hidden_);
  }

 private:
  ad::Var pair_embedding(std::size_t slot_id, std::size_t value_id) const {
    return ad::concat(ad::row(slot_emb_, slot_id), ad::row(value_emb_, value_id));
  }

  const DaVocabulary* vocab_ = nullptr;
  std::size_t hidden_ = 0;
  ad::Var slot_emb_, value_emb_;
  ad::LstmWeights fwd_, bwd_;
};

// Shared utterance encoder, CNN variant. Token ids are EOS-framed and
// PAD-filled to the fixed input length; longer inputs are truncated.
class CnnEncoder {
 public:
  CnnEncoder() = default;

  CnnEncoder(ParameterStore& store, std::size_t vocab_size, const CnnGeometry& geom)
      : geom_(geom) {
    geom_.validate();
    token_emb_ = store.create("utt_enc.token_emb", {vocab_size, geom_.emb_dim}).var();
    std::size_t depth = geom_.emb_dim;
    for (int l = 0; l < 3; ++l) {
      const std::string prefix = "utt_enc.conv" + std::to_string(l + 1);
      filters_[l] =
          store.create(prefix + ".f", {geom_.filters[l], geom_.widths[l], depth}).var();
      biases_[l] = store.create(prefix + ".b", {geom_.filters[l]}, Init::zeros).var();
      depth = geom_.filters[l];
    }
  }

  const CnnGeometry& geometry() const { return geom_; }
  std::size_t output_dim() const { return geom_.latent_dim(); }

  std::vector<std::size_t> frame(const std::vector<std::size_t>& ids) const {
    std::vector<std::size_t> padded(
        ids.begin(), ids.begin() + std::min(ids.size(), geom_.input_len));
    padded.resize(geom_.input_len, Vocabulary::kPad);
    return padded;
  }

  // feature maps of every layer; back() flattens to h_U
  std::vector<ad::Var> feature_maps(const std::vector<std::size_t>& ids) const {
    ad::Var x = ad::rows(token_emb_, frame(ids));
    std::vector<ad::Var> maps;
    for (int l = 0; l < 3; ++l) {
      x = ad::relu(ad::add_rowwise(ad::conv1d_valid(x, filters_[l], geom_.strides[l]),
                                   biases_[l]));
      maps.push_back(x);
    }
    return maps;
  }

  ad::Var encode(const std::vector<std::size_t>& ids) const {
    return ad::reshape(feature_maps(ids).back(), {geom_.latent_dim()});
  }

 private:
  CnnGeometry geom_;
  ad::Var token_emb_;
  std::array<ad::Var, 3> filters_;
  std::array<ad::Var, 3> biases_;
};

// Shared utterance encoder, RNN variant: BiLSTM final-state concatenation
// over the unpadded sequence.
class RnnEncoder {
 public:
  RnnEncoder() = default;

  RnnEncoder(ParameterStore& store, std::size_t vocab_size, std::size_t emb_dim,
             std::size_t hidden)
      : hidden_(hidden) {
    token_emb_ = store.create("utt_enc.token_emb", {vocab_size, emb_dim}).var();
    fwd_ = {store.create("utt_enc.fwd.w_x", {4 * hidden, emb_dim}).var(),
            store.create("utt_enc.fwd.w_h", {4 * hidden, hidden}).var(),
            store.create("utt_enc.fwd.b", {4 * hidden}, Init::lstm_bias).var()};
    bwd_ = {store.create("utt_enc.bwd.w_x", {4 * hidden, emb_dim}).var(),
            store.create("utt_enc.bwd.w_h", {4 * hidden, hidden}).var(),
            store.create("utt_enc.bwd.b", {4 * hidden}, Init::lstm_bias).var()};
  }

  std::size_t output_dim() const { return 2 * hidden_; }

  ad::Var encode(const std::vector<std::size_t>& ids) const {
    if (ids.empty()) throw std::invalid_argument("rnn encoder: empty utterance");
    std::vector<ad::Var> seq;
    seq.reserve(ids.size());
    for (std::size_t id : ids) seq.push_back(ad::row(token_emb_, id));
    return ad::bilstm_encode(seq, fwd_, bwd_, hidden_);
  }

 private:
  std::size_t hidden_ = 0;
  ad::Var token_emb_;
  ad::LstmWeights fwd_, bwd_;
};

}  // namespace vnlg
