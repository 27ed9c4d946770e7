#include <catch2/catch_amalgamated.hpp>

#include "test_util.hpp"
#include "vnlg/synth.hpp"
#include "vnlg/training.hpp"

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

ModelDims tiny_dims() {
  ModelDims d;
  d.dec_emb = 5;
  d.dec_hidden = 6;
  d.da_slot_emb = 4;
  d.da_value_emb = 4;
  d.da_hidden = 4;
  d.d_z = 5;
  d.d_e = 4;
  d.cnn = tiny_geometry();
  d.rnn_hidden = 5;
  return d;
}

struct TinyWorld {
  PreparedData data;
  TrainConfig cfg;

  explicit TinyWorld(ModelKind kind, std::uint64_t seed = 1, double frac = 1.0,
                     bool injection = true, std::size_t alpha_decay = 40) {
    synth::SynthSpec spec;
    spec.domain = "venue_a";
    spec.n_das = 40;
    spec.seed = 9;
    std::map<std::string, DomainData> dataset;
    dataset["venue_a"] = synth::make_domain(spec);

    ScenarioSpec sc;
    sc.kind = ScenarioKind::scratch;
    sc.train_fraction = frac;
    sc.target_domain = "venue_a";
    sc.seed = 7;
    data = prepare_data(make_scenario(dataset, sc));

    cfg.kind = kind;
    cfg.dims = tiny_dims();
    cfg.latent_injection = injection;
    cfg.batch_size = 8;
    cfg.max_epochs = 3;
    cfg.patience = 5;
    cfg.dropout_keep = 0.9;
    cfg.anneal.kl_warmup_steps = 20;
    cfg.anneal.alpha_decay_steps = alpha_decay;
    cfg.beam.width = 3;
    cfg.beam.max_len = 20;
    cfg.seed = seed;
  }

  Generator make() const {
    return Generator(cfg.kind, cfg.dims, data.vocab, data.da_vocab, cfg.seed,
                     cfg.latent_injection);
  }
};

std::vector<TrainPair> first_pairs(const PreparedData& data, std::size_t n) {
  return {data.train_pairs.begin(),
          data.train_pairs.begin() + std::min(n, data.train_pairs.size())};
}

}  // namespace

TEST_CASE("anneal schedule endpoints and monotonicity") {
  AnnealSchedule a;
  a.kl_warmup_steps = 100;
  a.alpha_decay_steps = 80;
  REQUIRE(a.kl_weight(0) == 0.0);
  REQUIRE(a.kl_weight(100) == 1.0);
  REQUIRE(a.kl_weight(5000) == 1.0);
  REQUIRE(a.alpha(0) == 1.0);
  REQUIRE(a.alpha(80) == 0.0);
  REQUIRE(a.alpha(5000) == 0.0);
  double prev_kl = -1.0, prev_alpha = 2.0;
  for (std::size_t s = 0; s <= 200; ++s) {
    REQUIRE(a.kl_weight(s) >= prev_kl);
    REQUIRE(a.alpha(s) <= prev_alpha);
    prev_kl = a.kl_weight(s);
    prev_alpha = a.alpha(s);
  }
  AnnealSchedule zero;
  zero.alpha_decay_steps = 0;
  REQUIRE(zero.alpha(0) == 0.0);
}

TEST_CASE("vnlg loss with zero kl weight equals the teacher-forced nll") {
  TinyWorld w(ModelKind::cvnlg);
  Generator gen = w.make();
  auto batch = first_pairs(w.data, 2);
  LossOptions opt;
  opt.train_mode = false;  // no dropout: values must match exactly
  LossBreakdown bd;
  Rng rng(5);
  ad::Var loss = loss_vnlg(gen, batch, 0.0, opt, rng, &bd);
  REQUIRE(loss.scalar() == Approx(bd.nll).epsilon(1e-12));
  REQUIRE(bd.kl > 0.0);  // the KL is reported even when unweighted
}

TEST_CASE("posterior forced equal to prior makes the KL term exactly zero") {
  TinyWorld w(ModelKind::cvnlg);
  Generator gen = w.make();
  // copy prior parameters onto the posterior and cut the h_U columns
  auto& store = gen.params();
  const std::size_t da_dim = 8, d_z = 5;
  ad::Parameter* wz = store.find("latent.post.w_z");
  ad::Parameter* wzp = store.find("latent.prior.w_z");
  wz->value().fill(0.0);
  for (std::size_t r = 0; r < d_z; ++r)
    for (std::size_t c = 0; c < da_dim; ++c)
      wz->value().at(r, c) = wzp->value().at(r, c);
  for (const char* pair : {"w_mu", "b_mu", "w_sig", "b_sig", "b_z"}) {
    store.find(std::string("latent.post.") + pair)->value() =
        store.find(std::string("latent.prior.") + pair)->value();
  }
  auto batch = first_pairs(w.data, 2);
  LossOptions opt;
  opt.train_mode = false;
  LossBreakdown bd;
  Rng rng(5);
  loss_vnlg(gen, batch, 1.0, opt, rng, &bd);
  REQUIRE(bd.kl == 0.0);
}

TEST_CASE("monte carlo with M=4 equals the mean of four single-sample losses") {
  TinyWorld w(ModelKind::cvnlg);
  Generator gen = w.make();
  auto batch = first_pairs(w.data, 1);
  LossOptions opt4;
  opt4.train_mode = false;
  opt4.mc_samples = 4;
  Rng rng_a(11);
  const double m4 = loss_vnlg(gen, batch, 0.7, opt4, rng_a, nullptr).scalar();

  LossOptions opt1;
  opt1.train_mode = false;
  opt1.mc_samples = 1;
  Rng rng_b(11);  // same stream: the four draws match
  double acc = 0.0, kl = 0.0;
  for (int i = 0; i < 4; ++i) {
    LossBreakdown bd;
    acc += loss_vnlg(gen, batch, 0.0, opt1, rng_b, &bd).scalar();
    kl = bd.kl;
  }
  REQUIRE(m4 == Approx(acc / 4.0 + 0.7 * kl).epsilon(1e-9));
}

TEST_CASE("cnn-dcnn loss identities") {
  TinyWorld w(ModelKind::dualvae);
  Generator gen = w.make();
  LossOptions opt;
  opt.train_mode = false;

  // mu2 = 0, log sigma2 = 0 -> standard normal posterior, KL term 0
  gen.params().find("latent.ae.w_mu")->value().fill(0.0);
  gen.params().find("latent.ae.b_mu")->value().fill(0.0);
  gen.params().find("latent.ae.w_sig")->value().fill(0.0);
  gen.params().find("latent.ae.b_sig")->value().fill(0.0);
  std::vector<std::vector<std::size_t>> utts{w.data.train_pairs[0].ids};
  Rng rng(3);
  const double with_kl = loss_cnn_dcnn(gen, utts, 1.0, opt, rng, nullptr).scalar();
  Rng rng2(3);
  const double without_kl = loss_cnn_dcnn(gen, utts, 0.0, opt, rng2, nullptr).scalar();
  REQUIRE(with_kl == Approx(without_kl).epsilon(1e-12));
}

TEST_CASE("dualvae composition identities") {
  TinyWorld w(ModelKind::dualvae);
  Generator gen = w.make();
  auto batch = first_pairs(w.data, 1);
  LossOptions opt;
  opt.train_mode = false;

  // alpha = 0: exactly the vnlg loss, and no extra rng consumption
  Rng ra(21), rb(21);
  const double dual0 = loss_dualvae(gen, batch, 0.5, 0.0, opt, ra, nullptr).scalar();
  const double vnlg = loss_vnlg(gen, batch, 0.5, opt, rb, nullptr).scalar();
  REQUIRE(dual0 == Approx(vnlg).epsilon(1e-12));
  REQUIRE(ra.uniform() == rb.uniform());  // streams stayed aligned

  // alpha = 1: sum of the two losses under an aligned stream
  Rng rc(22), rd(22);
  const double dual1 = loss_dualvae(gen, batch, 0.5, 1.0, opt, rc, nullptr).scalar();
  const double v = loss_vnlg(gen, batch, 0.5, opt, rd, nullptr).scalar();
  std::vector<std::vector<std::size_t>> utts{batch[0].ids};
  const double ae = loss_cnn_dcnn(gen, utts, 0.5, opt, rd, nullptr).scalar();
  REQUIRE(dual1 == Approx(v + ae).epsilon(1e-12));
}

TEST_CASE("crossvae equals dualvae plus alpha times the da-dcnn term") {
  TinyWorld w(ModelKind::crossvae);
  Generator gen = w.make();
  auto batch = first_pairs(w.data, 1);
  LossOptions opt;
  opt.train_mode = false;
  const double alpha = 0.6;

  Rng ra(31);
  const double cross = loss_crossvae(gen, batch, 0.4, alpha, opt, ra, nullptr).scalar();
  Rng rb(31);
  const double dual = loss_dualvae(gen, batch, 0.4, alpha, opt, rb, nullptr).scalar();
  const double dadcnn = loss_da_dcnn(gen, batch, 0.4, opt, rb, nullptr).scalar();
  REQUIRE(cross == Approx(dual + alpha * dadcnn).epsilon(1e-9));

  // alpha = 0 collapses to the vnlg loss
  Rng rc(32), rdm(32);
  REQUIRE(loss_crossvae(gen, batch, 0.4, 0.0, opt, rc, nullptr).scalar() ==
          Approx(loss_vnlg(gen, batch, 0.4, opt, rdm, nullptr).scalar()).epsilon(1e-12));
}

TEST_CASE("da-dcnn loss agrees with cnn-dcnn when both reduce to N(0,I) posteriors") {
  TinyWorld w(ModelKind::crossvae);
  Generator gen = w.make();
  auto& store = gen.params();
  // posterior == N(0, I) regardless of input; prior == N(0, I) as well
  for (const char* name :
       {"latent.post.w_mu", "latent.post.b_mu", "latent.post.w_sig", "latent.post.b_sig",
        "latent.prior.w_mu", "latent.prior.b_mu", "latent.prior.w_sig",
        "latent.prior.b_sig", "latent.ae.w_mu", "latent.ae.b_mu", "latent.ae.w_sig",
        "latent.ae.b_sig"}) {
    store.find(name)->value().fill(0.0);
  }
  auto batch = first_pairs(w.data, 1);
  LossOptions opt;
  opt.train_mode = false;  // no denoising swap: identical inputs
  Rng ra(41), rb(41);
  const double a = loss_da_dcnn(gen, batch, 1.0, opt, ra, nullptr).scalar();
  std::vector<std::vector<std::size_t>> utts{batch[0].ids};
  const double b = loss_cnn_dcnn(gen, utts, 1.0, opt, rb, nullptr).scalar();
  REQUIRE(a == Approx(b).epsilon(1e-12));
}

TEST_CASE("gradient of the shared encoder is additive across loss paths") {
  TinyWorld w(ModelKind::dualvae);
  Generator gen = w.make();
  auto batch = first_pairs(w.data, 1);
  std::vector<std::vector<std::size_t>> utts{batch[0].ids};
  LossOptions opt;
  opt.train_mode = false;

  auto grads_of = [&](const char* name) {
    return gen.params().find(name)->grad().values;
  };
  const char* probe = "utt_enc.conv1.f";

  gen.params().zero_grads();
  Rng ra(51);
  ad::backward(loss_vnlg(gen, batch, 0.8, opt, ra, nullptr));
  const auto g_vnlg = grads_of(probe);

  gen.params().zero_grads();
  Rng rb(51);
  loss_vnlg(gen, batch, 0.8, opt, rb, nullptr);  // advance the stream identically
  ad::backward(ad::scale(loss_cnn_dcnn(gen, utts, 0.8, opt, rb, nullptr), 0.5));
  const auto g_ae = grads_of(probe);

  gen.params().zero_grads();
  Rng rc(51);
  ad::backward(loss_dualvae(gen, batch, 0.8, 0.5, opt, rc, nullptr));
  const auto g_dual = grads_of(probe);

  for (std::size_t i = 0; i < g_dual.size(); ++i)
    REQUIRE(g_dual[i] == Approx(g_vnlg[i] + g_ae[i]).margin(1e-10));
}

TEST_CASE("semi-supervised step identities and gradient reach") {
  TinyWorld w(ModelKind::crossvae);
  Generator gen = w.make();
  auto batch = first_pairs(w.data, 2);
  LossOptions opt;
  opt.train_mode = false;

  // empty unlabeled batch: exactly the supervised loss
  Rng ra(61), rb(61);
  REQUIRE(semi_supervised_step(gen, batch, {}, 0.5, 0.7, opt, ra, nullptr).scalar() ==
          Approx(loss_crossvae(gen, batch, 0.5, 0.7, opt, rb, nullptr).scalar())
              .epsilon(1e-12));

  // unlabeled gradients reach the shared encoder, ae heads, W_e and the
  // DCNN, but never the DA encoder
  gen.params().zero_grads();
  std::vector<std::vector<std::size_t>> unlabeled{w.data.train_pairs[1].ids,
                                                  w.data.train_pairs[2].ids};
  Rng rc(62);
  ad::backward(ad::scale(loss_cnn_dcnn(gen, unlabeled, 0.5, opt, rc, nullptr), 0.7));
  auto grad_mass = [&](const std::string& prefix) {
    double total = 0.0;
    for (std::size_t i = 0; i < gen.params().size(); ++i) {
      const auto& p = gen.params().at(i);
      if (p.name().rfind(prefix, 0) == 0)
        for (double g : p.grad().values) total += std::abs(g);
    }
    return total;
  };
  REQUIRE(grad_mass("da_enc.") == 0.0);
  REQUIRE(grad_mass("latent.post.") == 0.0);
  REQUIRE(grad_mass("latent.prior.") == 0.0);
  REQUIRE(grad_mass("dec.") == 0.0);
  REQUIRE(grad_mass("utt_enc.") > 0.0);
  REQUIRE(grad_mass("latent.ae.") > 0.0);
  REQUIRE(grad_mass("latent.w_e") > 0.0);
  REQUIRE(grad_mass("dcnn.") > 0.0);
}

TEST_CASE("objective gradients match finite differences on a tiny batch") {
  TinyWorld w(ModelKind::crossvae);
  Generator gen = w.make();
  auto batch = first_pairs(w.data, 2);
  LossOptions opt;
  opt.train_mode = false;  // the acceptance suite runs the full set per objective

  const double e1 = test::gradient_check(gen.params(), [&] {
    Rng rng(71);
    return loss_crossvae(gen, batch, 0.8, 0.6, opt, rng, nullptr);
  });
  REQUIRE(e1 < 1e-4);
}

TEST_CASE("decoder overfits a single pair to near-zero nll") {
  TinyWorld w(ModelKind::cvnlg);
  Generator gen = w.make();
  auto batch = first_pairs(w.data, 1);
  LossOptions opt;
  opt.train_mode = true;
  opt.dropout_keep = 1.0;
  Adam adam;
  Rng rng(81);
  double nll = 1e9;
  for (int step = 0; step < 400 && nll > 0.005; ++step) {
    LossBreakdown bd;
    ad::Var loss = loss_vnlg(gen, batch, 0.0, opt, rng, &bd);
    nll = bd.nll;
    ad::backward(loss);
    clip_global_norm(gen.params(), 5.0);
    adam.step(gen.params(), 3e-3);
  }
  REQUIRE(nll < 0.01);
}

TEST_CASE("dcnn overfits a single utterance reconstruction") {
  TinyWorld w(ModelKind::dualvae);
  Generator gen = w.make();
  std::vector<std::vector<std::size_t>> utts{w.data.train_pairs[0].ids};
  LossOptions opt;
  opt.train_mode = false;  // clean input: no denoising swaps
  Adam adam;
  Rng rng(91);
  double recon = 1e9;
  for (int step = 0; step < 500 && recon > 0.005; ++step) {
    LossBreakdown bd;
    ad::Var loss = loss_cnn_dcnn(gen, utts, 0.0, opt, rng, &bd);
    recon = bd.ae;
    ad::backward(loss);
    clip_global_norm(gen.params(), 5.0);
    adam.step(gen.params(), 3e-3);
  }
  REQUIRE(recon < 0.01);
}

TEST_CASE("train_run completes, validates, and is reproducible") {
  TinyWorld w(ModelKind::cvnlg, 5);
  Generator g1 = w.make();
  TrainOutcome o1 = train_run(g1, w.data, w.cfg);
  REQUIRE(!o1.diverged);
  REQUIRE(o1.epochs_run == w.cfg.max_epochs);
  REQUIRE(o1.best_epoch >= 1);
  REQUIRE(!o1.epoch_val_bleu.empty());
  // best epoch carries the maximum validation BLEU
  const double max_bleu =
      *std::max_element(o1.epoch_val_bleu.begin(), o1.epoch_val_bleu.end());
  REQUIRE(o1.best_bleu == Approx(max_bleu));

  Generator g2 = w.make();
  TrainOutcome o2 = train_run(g2, w.data, w.cfg);
  REQUIRE(o1.csv_rows == o2.csv_rows);  // bit-identical metrics log

  // the two generators ended with identical parameters
  for (std::size_t i = 0; i < g1.params().size(); ++i)
    REQUIRE(g1.params().at(i).value().values == g2.params().at(i).value().values);
}

TEST_CASE("ablation: alpha pinned at zero gives bit-identical trajectories") {
  std::vector<std::vector<std::string>> csvs;
  for (ModelKind kind : {ModelKind::cvnlg, ModelKind::dualvae, ModelKind::crossvae}) {
    TinyWorld w(kind, 13, 1.0, true, /*alpha_decay=*/0);
    Generator gen = w.make();
    TrainOutcome o = train_run(gen, w.data, w.cfg);
    REQUIRE(!o.diverged);
    csvs.push_back(o.csv_rows);
  }
  REQUIRE(csvs[0] == csvs[1]);
  REQUIRE(csvs[1] == csvs[2]);
}

TEST_CASE("ablation: latent injection off reduces everything to the baseline") {
  std::vector<std::vector<std::string>> csvs;
  {
    TinyWorld w(ModelKind::ralstm_baseline, 17);
    Generator gen = w.make();
    csvs.push_back(train_run(gen, w.data, w.cfg).csv_rows);
  }
  for (ModelKind kind : {ModelKind::cvnlg, ModelKind::dualvae, ModelKind::crossvae}) {
    TinyWorld w(kind, 17, 1.0, /*injection=*/false, /*alpha_decay=*/0);
    Generator gen = w.make();
    csvs.push_back(train_run(gen, w.data, w.cfg).csv_rows);
  }
  REQUIRE(csvs[0] == csvs[1]);
  REQUIRE(csvs[0] == csvs[2]);
  REQUIRE(csvs[0] == csvs[3]);
}

TEST_CASE("fine-tuning with zero epochs leaves the model untouched") {
  TinyWorld w(ModelKind::cvnlg, 23);
  Generator gen = w.make();
  TrainOutcome o = train_run(gen, w.data, w.cfg);
  REQUIRE(!o.diverged);
  EvalScores before = evaluate_split(gen, w.data.test, w.cfg.beam);

  TrainConfig ft_cfg = w.cfg;
  ft_cfg.max_epochs = 0;
  TrainOutcome ft = train_run(gen, w.data, ft_cfg);
  REQUIRE(ft.epochs_run == 0);
  EvalScores after = evaluate_split(gen, w.data.test, w.cfg.beam);
  REQUIRE(before.bleu_score == Approx(after.bleu_score));
  REQUIRE(before.err == Approx(after.err));
}

TEST_CASE("semi scenario trains and logs both loss components") {
  synth::SynthSpec spec;
  spec.domain = "venue_a";
  spec.n_das = 60;
  spec.seed = 19;
  std::map<std::string, DomainData> dataset;
  dataset["venue_a"] = synth::make_domain(spec);

  ScenarioSpec sc;
  sc.kind = ScenarioKind::semi;
  sc.train_fraction = 0.2;
  sc.unlabeled_fraction = 0.5;
  sc.target_domain = "venue_a";
  sc.seed = 3;
  PreparedData data = prepare_data(make_scenario(dataset, sc));
  REQUIRE(!data.unlabeled_ids.empty());

  TrainConfig cfg;
  cfg.kind = ModelKind::crossvae;
  cfg.dims = tiny_dims();
  cfg.batch_size = 4;
  cfg.max_epochs = 2;
  cfg.anneal.kl_warmup_steps = 10;
  cfg.anneal.alpha_decay_steps = 50;
  cfg.beam.width = 2;
  cfg.beam.max_len = 16;
  cfg.seed = 29;
  Generator gen(cfg.kind, cfg.dims, data.vocab, data.da_vocab, cfg.seed);
  TrainOutcome o = train_run(gen, data, cfg);
  REQUIRE(!o.diverged);
  // step rows carry a nonzero autoencoder component while alpha > 0
  bool saw_ae = false;
  for (const auto& row : o.csv_rows) {
    if (row.rfind("step", 0) == 0 || row.rfind("#", 0) == 0) continue;
    std::vector<std::string> cols;
    std::string cur;
    for (char c : row) {
      if (c == ',') {
        cols.push_back(cur);
        cur.clear();
      } else {
        cur += c;
      }
    }
    cols.push_back(cur);
    if (cols.size() >= 10 && !cols[8].empty() && cols[8] != "0") saw_ae = true;
  }
  REQUIRE(saw_ae);
}
