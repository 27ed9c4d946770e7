#pragma once

#include <stdexcept>

#include "vnlg/autodiff.hpp"
#include "vnlg/optimizer.hpp"
#include "vnlg/rng.hpp"

namespace vnlg {

// (mean, log-variance) over the latent space. log_var is clamped to
// [-10, 10] at construction so the KL term cannot overflow early in
// training.
struct DiagonalGaussian {
  ad::Var mu;
  ad::Var log_var;

  static constexpr double kLogVarMin = -10.0;
  static constexpr double kLogVarMax = 10.0;

  static DiagonalGaussian make(ad::Var mu, ad::Var raw_log_var) {
    return {std::move(mu), ad::clamp(raw_log_var, kLogVarMin, kLogVarMax)};
  }

  static DiagonalGaussian standard(std::size_t dim) {
    return {ad::constant(Tensor::zeros({dim})), ad::constant(Tensor::zeros({dim}))};
  }

  std::size_t dim() const { return mu.size(); }
};

// h_z = mu + exp(log_var / 2) * eps, differentiable in mu and log_var.
inline ad::Var reparameterize(const DiagonalGaussian& g, const ad::Var& eps) {
  if (eps.size() != g.dim()) throw std::invalid_argument("reparameterize: eps dim mismatch");
  return ad::add(g.mu, ad::mul(ad::exp(ad::scale(g.log_var, 0.5)), eps));
}

inline ad::Var reparameterize(const DiagonalGaussian& g, Rng& rng) {
  return reparameterize(g, ad::constant(Tensor::vector(rng.normal_vec(g.dim()))));
}

// KL(q || p) of two diagonal Gaussians, summed over dimensions:
// sum_i [ (log s2p - log s2q)/2 + (s2q + (mq - mp)^2) / (2 s2p) - 1/2 ]
inline ad::Var kl_gaussians(const DiagonalGaussian& q, const DiagonalGaussian& p) {
  if (q.dim() != p.dim()) throw std::invalid_argument("kl_gaussians: dim mismatch");
  const double d = static_cast<double>(q.dim());
  ad::Var log_term = ad::scale(ad::sum(ad::sub(p.log_var, q.log_var)), 0.5);
  ad::Var num = ad::add(ad::exp(q.log_var), ad::square(ad::sub(q.mu, p.mu)));
  ad::Var quad = ad::sum(ad::div(num, ad::scale(ad::exp(p.log_var), 2.0)));
  return ad::add_scalar(ad::add(log_term, quad), -0.5 * d);
}

// The inference heads: neural posterior q(z | d,u), neural prior p(z | d)
// with its own parameters, the autoencoder posterior q(z | u), and the
// single shared latent-to-output projection W_e used by every decode path.
class LatentSpace {
 public:
  LatentSpace() = default;

  LatentSpace(ParameterStore& store, std::size_t da_dim, std::size_t utt_dim,
              std::size_t latent_dim, std::size_t out_dim)
      : latent_dim_(latent_dim), out_dim_(out_dim) {
    w_z_ = store.create("latent.post.w_z", {latent_dim, da_dim + utt_dim}).var();
    b_z_ = store.create("latent.post.b_z", {latent_dim}, Init::zeros).var();
    w_mu1_ = store.create("latent.post.w_mu", {latent_dim, latent_dim}).var();
    b_mu1_ = store.create("latent.post.b_mu", {latent_dim}, Init::zeros).var();
    w_sig1_ = store.create("latent.post.w_sig", {latent_dim, latent_dim}).var();
    b_sig1_ = store.create("latent.post.b_sig", {latent_dim}, Init::zeros).var();

    w_zp_ = store.create("latent.prior.w_z", {latent_dim, da_dim}).var();
    b_zp_ = store.create("latent.prior.b_z", {latent_dim}, Init::zeros).var();
    w_mu1p_ = store.create("latent.prior.w_mu", {latent_dim, latent_dim}).var();
    b_mu1p_ = store.create("latent.prior.b_mu", {latent_dim}, Init::zeros).var();
    w_sig1p_ = store.create("latent.prior.w_sig", {latent_dim, latent_dim}).var();
    b_sig1p_ = store.create("latent.prior.b_sig", {latent_dim}, Init::zeros).var();

    w_e_ = store.create("latent.w_e", {out_dim, latent_dim}).var();
    b_e_ = store.create("latent.b_e", {out_dim}, Init::zeros).var();
  }

  // Created on demand: only the autoencoding models own mu2/sigma2 heads.
  void add_autoencoder_heads(ParameterStore& store, std::size_t utt_dim) {
    w_mu2_ = store.create("latent.ae.w_mu", {latent_dim_, utt_dim}).var();
    b_mu2_ = store.create("latent.ae.b_mu", {latent_dim_}, Init::zeros).var();
    w_sig2_ = store.create("latent.ae.w_sig", {latent_dim_, utt_dim}).var();
    b_sig2_ = store.create("latent.ae.b_sig", {latent_dim_}, Init::zeros).var();
  }

  std::size_t latent_dim() const { return latent_dim_; }
  std::size_t out_dim() const { return out_dim_; }

  DiagonalGaussian posterior(const ad::Var& h_da, const ad::Var& h_utt) const {
    ad::Var hz = ad::relu(ad::affine(w_z_, ad::concat(h_da, h_utt), b_z_));
    return DiagonalGaussian::make(ad::affine(w_mu1_, hz, b_mu1_),
                                  ad::affine(w_sig1_, hz, b_sig1_));
  }

  // same functional form, independent parameters, no utterance input
  DiagonalGaussian prior(const ad::Var& h_da) const {
    ad::Var hz = ad::relu(ad::affine(w_zp_, h_da, b_zp_));
    return DiagonalGaussian::make(ad::affine(w_mu1p_, hz, b_mu1p_),
                                  ad::affine(w_sig1p_, hz, b_sig1p_));
  }

  // single linear regression on h_U (no intermediate projection)
  DiagonalGaussian ae_posterior(const ad::Var& h_utt) const {
    if (!w_mu2_.defined())
      throw std::logic_error("autoencoder heads not present in this model");
    return DiagonalGaussian::make(ad::affine(w_mu2_, h_utt, b_mu2_),
                                  ad::affine(w_sig2_, h_utt, b_sig2_));
  }

  // h_e = ReLU(W_e h + b_e); shared by the VNLG and CNN-DCNN paths
  ad::Var project(const ad::Var& h_z) const { return ad::relu(ad::affine(w_e_, h_z, b_e_)); }

  // decode-time latent: the prior mean, no sampling
  ad::Var decode_latent(const ad::Var& h_da) const { return project(prior(h_da).mu); }

 private:
  std::size_t latent_dim_ = 0, out_dim_ = 0;
  ad::Var w_z_, b_z_, w_mu1_, b_mu1_, w_sig1_, b_sig1_;
  ad::Var w_zp_, b_zp_, w_mu1p_, b_mu1p_, w_sig1p_, b_sig1p_;
  ad::Var w_mu2_, b_mu2_, w_sig2_, b_sig2_;
  ad::Var w_e_, b_e_;
};

}  // namespace vnlg
