#pragma once

#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "vnlg/autodiff.hpp"
#include "vnlg/rng.hpp"

namespace vnlg {

enum class Init { zeros, xavier, lstm_bias };

// Owns every learned tensor of a model. Initialization is seeded per
// parameter name, so two models sharing a subset of names start from
// identical values for that subset regardless of what else they own.
class ParameterStore {
 public:
  explicit ParameterStore(std::uint64_t seed = 0) : seed_(seed) {}

  ad::Parameter& create(const std::string& name, std::vector<std::size_t> shape,
                        Init init = Init::xavier) {
    if (index_.count(name)) throw std::logic_error("parameter exists: " + name);
    Tensor t(shape);
    switch (init) {
      case Init::zeros:
        break;
      case Init::xavier: {
        Rng rng(seed_, name);
        const auto [fan_in, fan_out] = fans(shape);
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        for (auto& v : t.values) v = rng.uniform(-limit, limit);
        break;
      }
      case Init::lstm_bias: {
        // [i; f; g; o] blocks; forget-gate bias starts at +1
        if (shape.size() != 1 || shape[0] % 4 != 0)
          throw std::invalid_argument("lstm_bias init expects a [4H] vector");
        const std::size_t hidden = shape[0] / 4;
        for (std::size_t j = 0; j < hidden; ++j) t.values[hidden + j] = 1.0;
        break;
      }
    }
    params_.push_back(std::make_unique<ad::Parameter>(name, std::move(t)));
    index_[name] = params_.size() - 1;
    return *params_.back();
  }

  ad::Parameter* find(const std::string& name) {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : params_[it->second].get();
  }

  std::size_t size() const { return params_.size(); }
  ad::Parameter& at(std::size_t i) { return *params_[i]; }
  const ad::Parameter& at(std::size_t i) const { return *params_[i]; }

  void zero_grads() {
    for (auto& p : params_) p->zero_grad();
  }

  std::uint64_t seed() const { return seed_; }

 private:
  static std::pair<std::size_t, std::size_t> fans(const std::vector<std::size_t>& shape) {
    if (shape.size() == 1) return {shape[0], shape[0]};
    if (shape.size() == 2) return {shape[1], shape[0]};
    // conv filters [k x h x d]
    std::size_t receptive = 1;
    for (std::size_t i = 1; i < shape.size(); ++i) receptive *= shape[i];
    return {receptive, shape[0]};
  }

  std::uint64_t seed_;
  std::vector<std::unique_ptr<ad::Parameter>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Scales all gradients so their global L2 norm is at most max_norm.
inline double clip_global_norm(ParameterStore& store, double max_norm) {
  double sq = 0.0;
  for (std::size_t i = 0; i < store.size(); ++i)
    for (double g : store.at(i).grad().values) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (std::size_t i = 0; i < store.size(); ++i)
      for (double& g : store.at(i).grad().values) g *= s;
  }
  return norm;
}

// lr 0.001 for the first 5 epochs, then exponential decay at 0.95 per epoch
inline double lr_schedule(int epoch, double base_lr = 1e-3, double decay = 0.95,
                          int hold_epochs = 5) {
  if (epoch < 1) throw std::invalid_argument("lr_schedule: epoch must be >= 1");
  if (epoch <= hold_epochs) return base_lr;
  return base_lr * std::pow(decay, epoch - hold_epochs);
}

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam over a ParameterStore; zeroes gradients after the update.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  std::int64_t steps() const { return t_; }

  void step(ParameterStore& store, double lr) {
    if (slots_.size() != store.size()) {
      slots_.clear();
      for (std::size_t i = 0; i < store.size(); ++i)
        slots_.push_back({Tensor::zeros(store.at(i).value().shape),
                          Tensor::zeros(store.at(i).value().shape)});
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < store.size(); ++i) {
      ad::Parameter& p = store.at(i);
      Tensor& m = slots_[i].m;
      Tensor& v = slots_[i].v;
      for (std::size_t j = 0; j < p.value().size(); ++j) {
        const double g = p.grad().values[j];
        if (!std::isfinite(g))
          throw std::runtime_error("adam_step: non-finite gradient in parameter '" +
                                   p.name() + "'");
        m.values[j] = cfg_.beta1 * m.values[j] + (1.0 - cfg_.beta1) * g;
        v.values[j] = cfg_.beta2 * v.values[j] + (1.0 - cfg_.beta2) * g * g;
        const double mhat = m.values[j] / bc1;
        const double vhat = v.values[j] / bc2;
        p.value().values[j] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
      }
      p.zero_grad();
    }
  }

  void reset() {
    slots_.clear();
    t_ = 0;
  }

 private:
  struct Slot {
    Tensor m, v;
  };
  AdamConfig cfg_;
  std::vector<Slot> slots_;
  std::int64_t t_ = 0;
};

}  // namespace vnlg
