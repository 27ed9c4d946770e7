#pragma once

#include <memory>
#include <nlohmann/json.hpp>
#include <stdexcept>
#include <string>
#include <vector>

#include "vnlg/checkpoint.hpp"
#include "vnlg/decoders.hpp"
#include "vnlg/encoders.hpp"
#include "vnlg/latent.hpp"
#include "vnlg/vocab.hpp"

namespace vnlg {

// The ablation chain: each kind adds one component to the previous one.
// ralstm_baseline is the decoder with the variational path removed.
enum class ModelKind { ralstm_baseline, rvnlg, cvnlg, dualvae, crossvae };

inline std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::ralstm_baseline: return "ralstm";
    case ModelKind::rvnlg: return "rvnlg";
    case ModelKind::cvnlg: return "cvnlg";
    case ModelKind::dualvae: return "dualvae";
    case ModelKind::crossvae: return "crossvae";
  }
  return "?";
}

inline ModelKind model_kind_from_string(const std::string& s) {
  if (s == "ralstm") return ModelKind::ralstm_baseline;
  if (s == "rvnlg") return ModelKind::rvnlg;
  if (s == "cvnlg") return ModelKind::cvnlg;
  if (s == "dualvae") return ModelKind::dualvae;
  if (s == "crossvae") return ModelKind::crossvae;
  throw std::invalid_argument("unknown model kind: " + s);
}

struct ModelDims {
  std::size_t dec_emb = 100;
  std::size_t dec_hidden = 100;
  std::size_t da_slot_emb = 100;
  std::size_t da_value_emb = 100;
  std::size_t da_hidden = 100;  // h_D = 2 * da_hidden
  std::size_t d_z = 300;
  std::size_t d_e = 100;
  CnnGeometry cnn{};
  std::size_t rnn_hidden = 100;  // RNN utterance encoder, per direction

  nlohmann::json to_json() const {
    return nlohmann::json{{"dec_emb", dec_emb},
                          {"dec_hidden", dec_hidden},
                          {"da_slot_emb", da_slot_emb},
                          {"da_value_emb", da_value_emb},
                          {"da_hidden", da_hidden},
                          {"d_z", d_z},
                          {"d_e", d_e},
                          {"rnn_hidden", rnn_hidden},
                          {"cnn",
                           {{"input_len", cnn.input_len},
                            {"emb_dim", cnn.emb_dim},
                            {"strides", cnn.strides},
                            {"filters", cnn.filters},
                            {"widths", cnn.widths}}}};
  }

  static ModelDims from_json(const nlohmann::json& j) {
    ModelDims d;
    d.dec_emb = j.value("dec_emb", d.dec_emb);
    d.dec_hidden = j.value("dec_hidden", d.dec_hidden);
    d.da_slot_emb = j.value("da_slot_emb", d.da_slot_emb);
    d.da_value_emb = j.value("da_value_emb", d.da_value_emb);
    d.da_hidden = j.value("da_hidden", d.da_hidden);
    d.d_z = j.value("d_z", d.d_z);
    d.d_e = j.value("d_e", d.d_e);
    d.rnn_hidden = j.value("rnn_hidden", d.rnn_hidden);
    if (j.contains("cnn")) {
      const auto& c = j.at("cnn");
      d.cnn.input_len = c.value("input_len", d.cnn.input_len);
      d.cnn.emb_dim = c.value("emb_dim", d.cnn.emb_dim);
      if (c.contains("strides")) d.cnn.strides = c.at("strides").get<std::array<std::size_t, 3>>();
      if (c.contains("filters")) d.cnn.filters = c.at("filters").get<std::array<std::size_t, 3>>();
      if (c.contains("widths")) d.cnn.widths = c.at("widths").get<std::array<std::size_t, 3>>();
    }
    return d;
  }
};

// Full generator: DA encoder, shared utterance encoder, inference network,
// recurrent decoder, and (for the autoencoding kinds) the DCNN decoder.
// One physical utterance encoder serves both the VNLG posterior and the
// autoencoder; one (W_e, b_e) pair serves both decode paths.
class Generator {
 public:
  Generator(ModelKind kind, const ModelDims& dims, const Vocabulary& vocab,
            const DaVocabulary& da_vocab, std::uint64_t seed, bool latent_injection = true)
      : kind_(kind),
        dims_(dims),
        vocab_(vocab),
        da_vocab_(da_vocab),
        latent_injection_(latent_injection),
        store_(seed) {
    da_encoder_ = DaEncoder(store_, da_vocab_, dims.da_slot_emb, dims.da_value_emb,
                            dims.da_hidden);
    const std::size_t da_dim = da_encoder_.output_dim();

    std::size_t utt_dim = 0;
    if (kind == ModelKind::rvnlg) {
      rnn_encoder_ = RnnEncoder(store_, vocab.size(), dims.cnn.emb_dim, dims.rnn_hidden);
      utt_dim = rnn_encoder_.output_dim();
    } else if (kind != ModelKind::ralstm_baseline) {
      cnn_encoder_ = CnnEncoder(store_, vocab.size(), dims.cnn);
      utt_dim = cnn_encoder_.output_dim();
    }

    if (kind != ModelKind::ralstm_baseline) {
      latent_ = LatentSpace(store_, da_dim, utt_dim, dims.d_z, dims.d_e);
      if (has_autoencoder()) latent_.add_autoencoder_heads(store_, utt_dim);
    }

    decoder_ = RecurrentDecoder(store_, vocab.size(), dims.dec_emb, dims.dec_hidden, da_dim,
                                dims.d_e, /*with_latent_gates=*/kind != ModelKind::ralstm_baseline);
    if (has_autoencoder())
      dcnn_ = DeconvDecoder(store_, vocab.size(), dims.cnn, dims.d_e);
  }

  ModelKind kind() const { return kind_; }
  const ModelDims& dims() const { return dims_; }
  const Vocabulary& vocab() const { return vocab_; }
  const DaVocabulary& da_vocab() const { return da_vocab_; }
  ParameterStore& params() { return store_; }
  const LatentSpace& latent() const { return latent_; }
  const RecurrentDecoder& decoder() const { return decoder_; }
  const DeconvDecoder& dcnn() const { return dcnn_; }
  const CnnEncoder& cnn_encoder() const { return cnn_encoder_; }

  // the variational path is bypassed entirely when injection is disabled:
  // no posterior, no sampling, no KL, h_e fixed at zero
  bool variational() const {
    return kind_ != ModelKind::ralstm_baseline && latent_injection_;
  }
  bool has_autoencoder() const {
    return kind_ == ModelKind::dualvae || kind_ == ModelKind::crossvae;
  }
  bool cross_trained() const { return kind_ == ModelKind::crossvae; }

  ad::Var encode_da(const DialogueAct& da) const { return da_encoder_.encode(da); }

  ad::Var encode_utterance(const std::vector<std::size_t>& ids) const {
    if (kind_ == ModelKind::rvnlg) return rnn_encoder_.encode(ids);
    if (kind_ == ModelKind::ralstm_baseline)
      throw std::logic_error("baseline model has no utterance encoder");
    return cnn_encoder_.encode(ids);
  }

  std::vector<std::size_t> to_ids(const std::vector<std::string>& tokens) const {
    std::vector<std::size_t> ids;
    ids.reserve(tokens.size());
    for (const auto& t : tokens) ids.push_back(vocab_.id(t));
    return ids;
  }

  // decode-time latent projection; undefined for the non-variational path
  ad::Var decode_h_e(const ad::Var& h_da) const {
    if (!variational()) return {};
    return latent_.decode_latent(h_da);
  }

  // optional diversity sampling (off by default): draw h_z from the prior
  ad::Var sampled_h_e(const ad::Var& h_da, Rng& rng) const {
    if (!variational()) return {};
    return latent_.project(reparameterize(latent_.prior(h_da), rng));
  }

  std::vector<BeamHypothesis> generate(const DialogueAct& da, const BeamConfig& cfg,
                                       Rng* sample_rng = nullptr) const {
    ad::NoGradGuard guard;
    ad::Var h_da = encode_da(da);
    ad::Var h_e = sample_rng ? sampled_h_e(h_da, *sample_rng) : decode_h_e(h_da);
    return beam_search(decoder_, h_da, h_e, cfg, Vocabulary::kBos, Vocabulary::kEos,
                       {Vocabulary::kPad, Vocabulary::kBos});
  }

  void save(const std::string& path) { save_checkpoint(path, store_, vocab_hash()); }

  void load(const std::string& path) {
    const std::uint64_t h = load_checkpoint(path, store_);
    if (h != 0 && h != vocab_hash())
      throw std::runtime_error("checkpoint vocabulary mismatch for " + path);
  }

  std::uint64_t vocab_hash() const { return vocab_.hash() ^ da_vocab_.hash(); }

 private:
  ModelKind kind_;
  ModelDims dims_;
  Vocabulary vocab_;
  DaVocabulary da_vocab_;
  bool latent_injection_;
  ParameterStore store_;
  DaEncoder da_encoder_;
  CnnEncoder cnn_encoder_;
  RnnEncoder rnn_encoder_;
  LatentSpace latent_;
  RecurrentDecoder decoder_;
  DeconvDecoder dcnn_;
};

}  // namespace vnlg
