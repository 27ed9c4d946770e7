#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "vnlg/rng.hpp"
#include "vnlg/tensor.hpp"

// Reverse-mode autodiff over Tensor, define-by-run. The operator set is
// exactly what the generator needs; dense kernels go through Eigen maps.
namespace vnlg::ad {

using EMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EMap = Eigen::Map<EMatrix>;
using ECMap = Eigen::Map<const EMatrix>;
using EVec = Eigen::Map<Eigen::VectorXd>;
using ECVec = Eigen::Map<const Eigen::VectorXd>;

struct Node;
using NodePtr = std::shared_ptr<Node>;

struct Node {
  Tensor value;
  Tensor grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::vector<NodePtr> inputs;
  std::function<void(Node&)> backprop;

  void ensure_grad() {
    if (grad.values.size() != value.values.size()) grad = Tensor::zeros(value.shape);
  }
};

inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

// Disables graph recording in scope (generation / evaluation).
struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(grad_mode()) { grad_mode() = false; }
  ~NoGradGuard() { grad_mode() = prev; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

class Var {
 public:
  Var() = default;
  explicit Var(NodePtr n) : node_(std::move(n)) {}

  const Tensor& value() const { return node_->value; }
  const NodePtr& node() const { return node_; }
  bool defined() const { return node_ != nullptr; }
  std::size_t size() const { return node_->value.size(); }
  double scalar() const {
    if (size() != 1) throw std::logic_error("Var::scalar on non-scalar");
    return node_->value.values[0];
  }

 private:
  NodePtr node_;
};

inline void accumulate(Node& n, const Tensor& g) {
  if (!n.requires_grad) return;
  n.ensure_grad();
  for (std::size_t i = 0; i < g.values.size(); ++i) n.grad.values[i] += g.values[i];
}

inline Var constant(Tensor t) {
  auto n = std::make_shared<Node>();
  n->value = std::move(t);
  return Var(n);
}

inline Var constant_scalar(double v) { return constant(Tensor::scalar(v)); }

// Leaf with persistent gradient storage; the unit the optimizer updates.
class Parameter {
 public:
  Parameter() = default;
  Parameter(std::string name, Tensor init) : name_(std::move(name)) {
    node_ = std::make_shared<Node>();
    node_->value = std::move(init);
    node_->requires_grad = true;
    node_->ensure_grad();
  }

  const std::string& name() const { return name_; }
  Tensor& value() { return node_->value; }
  const Tensor& value() const { return node_->value; }
  Tensor& grad() { return node_->grad; }
  const Tensor& grad() const { return node_->grad; }
  Var var() const { return Var(node_); }
  void zero_grad() { node_->grad.fill(0.0); }

 private:
  std::string name_;
  NodePtr node_;
};

namespace detail {

inline NodePtr make_node(Tensor value, std::vector<NodePtr> inputs,
                         std::function<void(Node&)> bp) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  if (grad_mode() && bp) {
    bool any = false;
    for (const auto& in : inputs) any = any || in->requires_grad;
    if (any) {
      n->requires_grad = true;
      n->inputs = std::move(inputs);
      n->backprop = std::move(bp);
    }
  }
  return n;
}

inline void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (!a.value().same_shape(b.value()))
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                a.value().shape_str() + " vs " + b.value().shape_str());
}

}  // namespace detail

// ---- elementwise ----

inline Var add(const Var& a, const Var& b) {
  detail::check_same_shape(a, b, "add");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.values[i] += b.value().values[i];
  return Var(detail::make_node(std::move(out), {a.node(), b.node()}, [](Node& self) {
    accumulate(*self.inputs[0], self.grad);
    accumulate(*self.inputs[1], self.grad);
  }));
}

inline Var sub(const Var& a, const Var& b) {
  detail::check_same_shape(a, b, "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.values[i] -= b.value().values[i];
  return Var(detail::make_node(std::move(out), {a.node(), b.node()}, [](Node& self) {
    accumulate(*self.inputs[0], self.grad);
    Node& b_in = *self.inputs[1];
    if (b_in.requires_grad) {
      b_in.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        b_in.grad.values[i] -= self.grad.values[i];
    }
  }));
}

inline Var mul(const Var& a, const Var& b) {
  detail::check_same_shape(a, b, "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.values[i] *= b.value().values[i];
  return Var(detail::make_node(std::move(out), {a.node(), b.node()}, [](Node& self) {
    Node& a_in = *self.inputs[0];
    Node& b_in = *self.inputs[1];
    if (a_in.requires_grad) {
      a_in.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        a_in.grad.values[i] += self.grad.values[i] * b_in.value.values[i];
    }
    if (b_in.requires_grad) {
      b_in.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        b_in.grad.values[i] += self.grad.values[i] * a_in.value.values[i];
    }
  }));
}

inline Var div(const Var& a, const Var& b) {
  detail::check_same_shape(a, b, "div");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.values[i] /= b.value().values[i];
  return Var(detail::make_node(std::move(out), {a.node(), b.node()}, [](Node& self) {
    Node& a_in = *self.inputs[0];
    Node& b_in = *self.inputs[1];
    if (a_in.requires_grad) {
      a_in.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        a_in.grad.values[i] += self.grad.values[i] / b_in.value.values[i];
    }
    if (b_in.requires_grad) {
      b_in.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        const double bv = b_in.value.values[i];
        b_in.grad.values[i] -= self.grad.values[i] * self.value.values[i] / bv;
      }
    }
  }));
}

inline Var scale(const Var& a, double c) {
  Tensor out = a.value();
  for (auto& v : out.values) v *= c;
  return Var(detail::make_node(std::move(out), {a.node()}, [c](Node& self) {
    Node& in = *self.inputs[0];
    if (in.requires_grad) {
      in.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        in.grad.values[i] += c * self.grad.values[i];
    }
  }));
}

inline Var add_scalar(const Var& a, double c) {
  Tensor out = a.value();
  for (auto& v : out.values) v += c;
  return Var(detail::make_node(std::move(out), {a.node()},
                               [](Node& self) { accumulate(*self.inputs[0], self.grad); }));
}

inline Var neg(const Var& a) { return scale(a, -1.0); }

namespace detail {

template <class Fwd, class Bwd>
Var unary_op(const Var& a, Fwd fwd, Bwd dfun) {
  Tensor out = a.value();
  for (auto& v : out.values) v = fwd(v);
  return Var(make_node(std::move(out), {a.node()}, [dfun](Node& self) {
    Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    in.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      in.grad.values[i] += self.grad.values[i] * dfun(in.value.values[i], self.value.values[i]);
  }));
}

}  // namespace detail

// dfun receives (input value, output value)
inline Var exp(const Var& a) {
  return detail::unary_op(a, [](double x) { return std::exp(x); },
                          [](double, double y) { return y; });
}

inline Var log(const Var& a) {
  return detail::unary_op(a, [](double x) { return std::log(x); },
                          [](double x, double) { return 1.0 / x; });
}

inline Var tanh(const Var& a) {
  return detail::unary_op(a, [](double x) { return std::tanh(x); },
                          [](double, double y) { return 1.0 - y * y; });
}

inline Var sigmoid(const Var& a) {
  return detail::unary_op(a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
                          [](double, double y) { return y * (1.0 - y); });
}

inline Var relu(const Var& a) {
  return detail::unary_op(a, [](double x) { return x > 0.0 ? x : 0.0; },
                          [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

inline Var square(const Var& a) {
  return detail::unary_op(a, [](double x) { return x * x; },
                          [](double x, double) { return 2.0 * x; });
}

inline Var clamp(const Var& a, double lo, double hi) {
  return detail::unary_op(
      a, [lo, hi](double x) { return x < lo ? lo : (x > hi ? hi : x); },
      [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

// ---- reductions / indexing ----

inline Var sum(const Var& a) {
  double s = 0.0;
  for (double v : a.value().values) s += v;
  return Var(detail::make_node(Tensor::scalar(s), {a.node()}, [](Node& self) {
    Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    in.ensure_grad();
    const double g = self.grad.values[0];
    for (auto& gv : in.grad.values) gv += g;
  }));
}

inline Var mean(const Var& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

// sum of equally shaped tensors in one node
inline Var add_n(const std::vector<Var>& xs) {
  if (xs.empty()) throw std::invalid_argument("add_n: empty");
  Tensor out = xs[0].value();
  std::vector<NodePtr> ins{xs[0].node()};
  for (std::size_t k = 1; k < xs.size(); ++k) {
    detail::check_same_shape(xs[0], xs[k], "add_n");
    for (std::size_t i = 0; i < out.size(); ++i) out.values[i] += xs[k].value().values[i];
    ins.push_back(xs[k].node());
  }
  return Var(detail::make_node(std::move(out), std::move(ins), [](Node& self) {
    for (auto& in : self.inputs) accumulate(*in, self.grad);
  }));
}

inline Var pick(const Var& a, std::size_t i) {
  if (i >= a.size()) throw std::out_of_range("pick: index out of range");
  return Var(detail::make_node(Tensor::scalar(a.value().values[i]), {a.node()}, [i](Node& self) {
    Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    in.ensure_grad();
    in.grad.values[i] += self.grad.values[0];
  }));
}

inline Var slice(const Var& a, std::size_t offset, std::size_t len) {
  if (a.value().ndim() != 1) throw std::invalid_argument("slice: 1-D only");
  if (offset + len > a.size()) throw std::out_of_range("slice: out of range");
  Tensor out({len});
  for (std::size_t i = 0; i < len; ++i) out.values[i] = a.value().values[offset + i];
  return Var(detail::make_node(std::move(out), {a.node()}, [offset, len](Node& self) {
    Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    in.ensure_grad();
    for (std::size_t i = 0; i < len; ++i) in.grad.values[offset + i] += self.grad.values[i];
  }));
}

inline Var concat(const std::vector<Var>& xs) {
  if (xs.empty()) throw std::invalid_argument("concat: empty");
  std::size_t total = 0;
  std::vector<NodePtr> ins;
  for (const auto& x : xs) {
    if (x.value().ndim() != 1) throw std::invalid_argument("concat: 1-D only");
    total += x.size();
    ins.push_back(x.node());
  }
  Tensor out({total});
  std::size_t off = 0;
  for (const auto& x : xs) {
    for (std::size_t i = 0; i < x.size(); ++i) out.values[off + i] = x.value().values[i];
    off += x.size();
  }
  return Var(detail::make_node(std::move(out), std::move(ins), [](Node& self) {
    std::size_t off = 0;
    for (auto& inp : self.inputs) {
      Node& in = *inp;
      const std::size_t n = in.value.size();
      if (in.requires_grad) {
        in.ensure_grad();
        for (std::size_t i = 0; i < n; ++i) in.grad.values[i] += self.grad.values[off + i];
      }
      off += n;
    }
  }));
}

inline Var concat(const Var& a, const Var& b) { return concat(std::vector<Var>{a, b}); }

// single embedding row M[i,:]
inline Var row(const Var& m, std::size_t i) {
  if (m.value().ndim() != 2) throw std::invalid_argument("row: 2-D only");
  const std::size_t d = m.value().cols();
  if (i >= m.value().rows()) throw std::out_of_range("row: index out of range");
  Tensor out({d});
  for (std::size_t j = 0; j < d; ++j) out.values[j] = m.value().at(i, j);
  return Var(detail::make_node(std::move(out), {m.node()}, [i, d](Node& self) {
    Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    in.ensure_grad();
    for (std::size_t j = 0; j < d; ++j) in.grad.values[i * d + j] += self.grad.values[j];
  }));
}

// embedding lookup for a sequence: [T x d] from row ids
inline Var rows(const Var& m, std::vector<std::size_t> ids) {
  if (m.value().ndim() != 2) throw std::invalid_argument("rows: 2-D only");
  const std::size_t d = m.value().cols();
  Tensor out({ids.size(), d});
  for (std::size_t t = 0; t < ids.size(); ++t) {
    if (ids[t] >= m.value().rows()) throw std::out_of_range("rows: id out of range");
    for (std::size_t j = 0; j < d; ++j) out.at(t, j) = m.value().at(ids[t], j);
  }
  return Var(detail::make_node(std::move(out), {m.node()},
                               [ids = std::move(ids), d](Node& self) {
                                 Node& in = *self.inputs[0];
                                 if (!in.requires_grad) return;
                                 in.ensure_grad();
                                 for (std::size_t t = 0; t < ids.size(); ++t)
                                   for (std::size_t j = 0; j < d; ++j)
                                     in.grad.values[ids[t] * d + j] += self.grad.at(t, j);
                               }));
}

// ---- linear algebra ----

// W [m x n] * x [n] + b [m]
inline Var affine(const Var& w, const Var& x, const Var& b) {
  const Tensor& wt = w.value();
  if (wt.ndim() != 2 || x.value().ndim() != 1 || b.value().ndim() != 1)
    throw std::invalid_argument("affine: expects W[mxn], x[n], b[m]");
  const std::size_t m = wt.rows(), n = wt.cols();
  if (x.size() != n || b.size() != m)
    throw std::invalid_argument("affine: shape mismatch W" + wt.shape_str() + " x" +
                                x.value().shape_str() + " b" + b.value().shape_str());
  Tensor out({m});
  ECMap wm(wt.values.data(), m, n);
  ECVec xv(x.value().values.data(), n);
  EVec ov(out.values.data(), m);
  ov = wm * xv;
  ov += ECVec(b.value().values.data(), m);
  return Var(detail::make_node(std::move(out), {w.node(), x.node(), b.node()},
                               [m, n](Node& self) {
    Node& wn = *self.inputs[0];
    Node& xn = *self.inputs[1];
    Node& bn = *self.inputs[2];
    ECVec g(self.grad.values.data(), m);
    if (wn.requires_grad) {
      wn.ensure_grad();
      EMap wg(wn.grad.values.data(), m, n);
      ECVec xv(xn.value.values.data(), n);
      wg.noalias() += g * xv.transpose();
    }
    if (xn.requires_grad) {
      xn.ensure_grad();
      EVec xg(xn.grad.values.data(), n);
      ECMap wm(wn.value.values.data(), m, n);
      xg.noalias() += wm.transpose() * g;
    }
    if (bn.requires_grad) {
      bn.ensure_grad();
      EVec bg(bn.grad.values.data(), m);
      bg += g;
    }
  }));
}

// same data, new shape
inline Var reshape(const Var& a, std::vector<std::size_t> shape) {
  Tensor out(std::move(shape));
  if (out.size() != a.size()) throw std::invalid_argument("reshape: size mismatch");
  out.values = a.value().values;
  return Var(detail::make_node(std::move(out), {a.node()},
                               [](Node& self) { accumulate(*self.inputs[0], self.grad); }));
}

// M [T x k] + b [k] broadcast over rows
inline Var add_rowwise(const Var& m, const Var& b) {
  const Tensor& mt = m.value();
  if (mt.ndim() != 2 || b.value().ndim() != 1 || b.size() != mt.cols())
    throw std::invalid_argument("add_rowwise: expects M[Txk], b[k]");
  Tensor out = mt;
  const std::size_t t = mt.rows(), k = mt.cols();
  for (std::size_t i = 0; i < t; ++i)
    for (std::size_t j = 0; j < k; ++j) out.at(i, j) += b.value().values[j];
  return Var(detail::make_node(std::move(out), {m.node(), b.node()}, [t, k](Node& self) {
    accumulate(*self.inputs[0], self.grad);
    Node& bn = *self.inputs[1];
    if (bn.requires_grad) {
      bn.ensure_grad();
      for (std::size_t i = 0; i < t; ++i)
        for (std::size_t j = 0; j < k; ++j) bn.grad.values[j] += self.grad.at(i, j);
    }
  }));
}

// position-wise projection: X [T x n] -> X W^T + b, W [m x n], b [m]
inline Var affine_rows(const Var& w, const Var& x, const Var& b) {
  const Tensor& wt = w.value();
  const Tensor& xt = x.value();
  if (wt.ndim() != 2 || xt.ndim() != 2 || b.value().ndim() != 1)
    throw std::invalid_argument("affine_rows: expects W[mxn], X[Txn], b[m]");
  const std::size_t m = wt.rows(), n = wt.cols(), t = xt.rows();
  if (xt.cols() != n || b.size() != m) throw std::invalid_argument("affine_rows: shape mismatch");
  Tensor out({t, m});
  ECMap wm(wt.values.data(), m, n);
  ECMap xm(xt.values.data(), t, n);
  EMap om(out.values.data(), t, m);
  om.noalias() = xm * wm.transpose();
  for (std::size_t i = 0; i < t; ++i)
    for (std::size_t j = 0; j < m; ++j) out.at(i, j) += b.value().values[j];
  return Var(detail::make_node(std::move(out), {w.node(), x.node(), b.node()},
                               [m, n, t](Node& self) {
    Node& wn = *self.inputs[0];
    Node& xn = *self.inputs[1];
    Node& bn = *self.inputs[2];
    ECMap g(self.grad.values.data(), t, m);
    if (wn.requires_grad) {
      wn.ensure_grad();
      EMap wg(wn.grad.values.data(), m, n);
      ECMap xm(xn.value.values.data(), t, n);
      wg.noalias() += g.transpose() * xm;
    }
    if (xn.requires_grad) {
      xn.ensure_grad();
      EMap xg(xn.grad.values.data(), t, n);
      ECMap wm(wn.value.values.data(), m, n);
      xg.noalias() += g * wm;
    }
    if (bn.requires_grad) {
      bn.ensure_grad();
      for (std::size_t i = 0; i < t; ++i)
        for (std::size_t j = 0; j < m; ++j) bn.grad.values[j] += g(i, j);
    }
  }));
}

// W [m x n] * x [n]
inline Var linear(const Var& w, const Var& x) {
  const Tensor& wt = w.value();
  if (wt.ndim() != 2 || x.value().ndim() != 1)
    throw std::invalid_argument("linear: expects W[mxn], x[n]");
  const std::size_t m = wt.rows(), n = wt.cols();
  if (x.size() != n)
    throw std::invalid_argument("linear: shape mismatch W" + wt.shape_str() + " x" +
                                x.value().shape_str());
  Tensor out({m});
  ECMap wm(wt.values.data(), m, n);
  ECVec xv(x.value().values.data(), n);
  EVec(out.values.data(), m).noalias() = wm * xv;
  return Var(detail::make_node(std::move(out), {w.node(), x.node()}, [m, n](Node& self) {
    Node& wn = *self.inputs[0];
    Node& xn = *self.inputs[1];
    ECVec g(self.grad.values.data(), m);
    if (wn.requires_grad) {
      wn.ensure_grad();
      EMap wg(wn.grad.values.data(), m, n);
      ECVec xv(xn.value.values.data(), n);
      wg.noalias() += g * xv.transpose();
    }
    if (xn.requires_grad) {
      xn.ensure_grad();
      EVec xg(xn.grad.values.data(), n);
      ECMap wm(wn.value.values.data(), m, n);
      xg.noalias() += wm.transpose() * g;
    }
  }));
}

// numerically stable log-softmax over a vector; exact zero for single-entry input
inline Var log_softmax(const Var& x) {
  if (x.value().ndim() != 1) throw std::invalid_argument("log_softmax: 1-D only");
  const auto& v = x.value().values;
  double mx = v[0];
  for (double a : v) mx = std::max(mx, a);
  double z = 0.0;
  for (double a : v) z += std::exp(a - mx);
  const double lz = mx + std::log(z);
  Tensor out({v.size()});
  for (std::size_t i = 0; i < v.size(); ++i) out.values[i] = v[i] - lz;
  return Var(detail::make_node(std::move(out), {x.node()}, [](Node& self) {
    Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    in.ensure_grad();
    double gsum = 0.0;
    for (double g : self.grad.values) gsum += g;
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      in.grad.values[i] += self.grad.values[i] - std::exp(self.value.values[i]) * gsum;
  }));
}

// sum_t -log softmax(logits[t])[targets[t]] over a [T x V] grid
inline Var seq_cross_entropy(const Var& logits, std::vector<std::size_t> targets) {
  const Tensor& lt = logits.value();
  if (lt.ndim() != 2) throw std::invalid_argument("seq_cross_entropy: 2-D logits");
  const std::size_t tlen = lt.rows(), vsize = lt.cols();
  if (targets.size() != tlen)
    throw std::invalid_argument("seq_cross_entropy: target length mismatch");
  double total = 0.0;
  std::vector<double> lz(tlen);
  for (std::size_t t = 0; t < tlen; ++t) {
    if (targets[t] >= vsize) throw std::out_of_range("seq_cross_entropy: target id");
    double mx = lt.at(t, 0);
    for (std::size_t j = 1; j < vsize; ++j) mx = std::max(mx, lt.at(t, j));
    double z = 0.0;
    for (std::size_t j = 0; j < vsize; ++j) z += std::exp(lt.at(t, j) - mx);
    lz[t] = mx + std::log(z);
    total += lz[t] - lt.at(t, targets[t]);
  }
  return Var(detail::make_node(Tensor::scalar(total), {logits.node()},
                               [targets = std::move(targets), lz = std::move(lz), tlen,
                                vsize](Node& self) {
    Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    in.ensure_grad();
    const double g = self.grad.values[0];
    for (std::size_t t = 0; t < tlen; ++t) {
      for (std::size_t j = 0; j < vsize; ++j) {
        const double p = std::exp(in.value.at(t, j) - lz[t]);
        in.grad.at(t, j) += g * (p - (j == targets[t] ? 1.0 : 0.0));
      }
    }
  }));
}

// inverted dropout: scales kept entries by 1/keep_rate so eval is identity
inline Var dropout(const Var& x, double keep_rate, Rng& rng, bool train_mode) {
  if (!(keep_rate > 0.0 && keep_rate <= 1.0))
    throw std::invalid_argument("dropout: keep_rate must be in (0,1]");
  if (!train_mode || keep_rate == 1.0) return x;
  std::vector<double> mask(x.size());
  const double inv = 1.0 / keep_rate;
  for (auto& m : mask) m = rng.uniform() < keep_rate ? inv : 0.0;
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.values[i] *= mask[i];
  return Var(detail::make_node(std::move(out), {x.node()},
                               [mask = std::move(mask)](Node& self) {
    Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    in.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      in.grad.values[i] += self.grad.values[i] * mask[i];
  }));
}

// ---- backward pass ----

inline void backward(const Var& loss) {
  Node* root = loss.node().get();
  if (root->value.size() != 1)
    throw std::invalid_argument("backward: loss must be a scalar");
  if (!root->requires_grad) return;

  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  seen.insert(root);
  while (!stack.empty()) {
    auto& [n, idx] = stack.back();
    if (idx < n->inputs.size()) {
      Node* child = n->inputs[idx++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  root->ensure_grad();
  root->grad.values[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backprop && !n->grad.values.empty()) n->backprop(*n);
  }
}

}  // namespace vnlg::ad
