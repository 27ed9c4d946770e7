#pragma once

#include <stdexcept>

#include "vnlg/autodiff.hpp"

// Valid (no padding) 1-D convolution and its exact shape-adjoint, via
// im2col + GEMM. Filters are [k x h x d]: k maps, width h, input depth d.
namespace vnlg::ad {

inline std::size_t conv_out_len(std::size_t t, std::size_t h, std::size_t stride) {
  if (t < h) throw std::invalid_argument("conv_out_len: input shorter than filter");
  if (stride < 1) throw std::invalid_argument("conv_out_len: stride must be >= 1");
  return (t - h) / stride + 1;
}

inline std::size_t deconv_out_len(std::size_t tp, std::size_t h, std::size_t stride) {
  return (tp - 1) * stride + h;
}

namespace detail {

// patches [T' x (h*d)], row t' = input[t'*s .. t'*s+h-1, :] flattened
inline EMatrix im2col(const Tensor& x, std::size_t h, std::size_t stride) {
  const std::size_t t = x.rows(), d = x.cols();
  const std::size_t tp = conv_out_len(t, h, stride);
  EMatrix c(tp, h * d);
  for (std::size_t i = 0; i < tp; ++i)
    for (std::size_t j = 0; j < h; ++j)
      for (std::size_t cc = 0; cc < d; ++cc) c(i, j * d + cc) = x.at(i * stride + j, cc);
  return c;
}

// adjoint of im2col: scatter-add patches back onto the [T x d] grid
inline void col2im_add(const EMatrix& c, std::size_t h, std::size_t stride, std::size_t d,
                       Tensor& out) {
  const std::size_t tp = static_cast<std::size_t>(c.rows());
  for (std::size_t i = 0; i < tp; ++i)
    for (std::size_t j = 0; j < h; ++j)
      for (std::size_t cc = 0; cc < d; ++cc) out.at(i * stride + j, cc) += c(i, j * d + cc);
}

inline void check_filters(const Tensor& f) {
  if (f.ndim() != 3) throw std::invalid_argument("conv: filters must be [k x h x d]");
}

}  // namespace detail

// input [T x d], filters [k x h x d] -> [T' x k], T' = (T-h)/stride + 1
inline Var conv1d_valid(const Var& input, const Var& filters, std::size_t stride) {
  const Tensor& x = input.value();
  const Tensor& f = filters.value();
  detail::check_filters(f);
  if (x.ndim() != 2) throw std::invalid_argument("conv1d_valid: input must be [T x d]");
  const std::size_t k = f.shape[0], h = f.shape[1], d = f.shape[2];
  if (x.cols() != d)
    throw std::invalid_argument("conv1d_valid: input depth " + std::to_string(x.cols()) +
                                " != filter depth " + std::to_string(d));
  const std::size_t tp = conv_out_len(x.rows(), h, stride);

  EMatrix patches = detail::im2col(x, h, stride);
  ECMap fm(f.values.data(), k, h * d);
  Tensor out({tp, k});
  EMap om(out.values.data(), tp, k);
  om.noalias() = patches * fm.transpose();

  return Var(detail::make_node(
      std::move(out), {input.node(), filters.node()},
      [h, d, k, stride, tp](Node& self) {
        Node& xn = *self.inputs[0];
        Node& fn = *self.inputs[1];
        ECMap g(self.grad.values.data(), tp, k);
        ECMap fm(fn.value.values.data(), k, h * d);
        if (xn.requires_grad) {
          xn.ensure_grad();
          EMatrix dpatches = g * fm;  // [T' x (h*d)]
          detail::col2im_add(dpatches, h, stride, d, xn.grad);
        }
        if (fn.requires_grad) {
          fn.ensure_grad();
          EMatrix patches = detail::im2col(xn.value, h, stride);
          EMap fg(fn.grad.values.data(), k, h * d);
          fg.noalias() += g.transpose() * patches;
        }
      }));
}

// input [T' x k], filters [k x h x d] -> [T x d], T = (T'-1)*stride + h.
// For fixed filters this is the transpose of the conv1d_valid linear map.
inline Var conv1d_transposed(const Var& input, const Var& filters, std::size_t stride) {
  const Tensor& y = input.value();
  const Tensor& f = filters.value();
  detail::check_filters(f);
  if (y.ndim() != 2) throw std::invalid_argument("conv1d_transposed: input must be [T' x k]");
  const std::size_t k = f.shape[0], h = f.shape[1], d = f.shape[2];
  if (y.cols() != k)
    throw std::invalid_argument("conv1d_transposed: input width " + std::to_string(y.cols()) +
                                " != filter count " + std::to_string(k));
  if (stride < 1) throw std::invalid_argument("conv1d_transposed: stride must be >= 1");
  const std::size_t tp = y.rows();
  const std::size_t t = deconv_out_len(tp, h, stride);

  ECMap ym(y.values.data(), tp, k);
  ECMap fm(f.values.data(), k, h * d);
  EMatrix patches = ym * fm;  // [T' x (h*d)]
  Tensor out({t, d});
  detail::col2im_add(patches, h, stride, d, out);

  return Var(detail::make_node(
      std::move(out), {input.node(), filters.node()},
      [h, d, k, stride, tp](Node& self) {
        Node& yn = *self.inputs[0];
        Node& fn = *self.inputs[1];
        EMatrix gpatches = detail::im2col(self.grad, h, stride);  // [T' x (h*d)]
        if (yn.requires_grad) {
          yn.ensure_grad();
          ECMap fm(fn.value.values.data(), k, h * d);
          EMap yg(yn.grad.values.data(), tp, k);
          yg.noalias() += gpatches * fm.transpose();
        }
        if (fn.requires_grad) {
          fn.ensure_grad();
          ECMap ym(yn.value.values.data(), tp, k);
          EMap fg(fn.grad.values.data(), k, h * d);
          fg.noalias() += ym.transpose() * gpatches;
        }
      }));
}

}  // namespace vnlg::ad
