#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace vnlg {

// Dense n-dimensional array of doubles, row-major.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> values;

  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> shp)
      : shape(std::move(shp)), values(checked_size(shape), 0.0) {}

  Tensor(std::vector<std::size_t> shp, std::vector<double> vals)
      : shape(std::move(shp)), values(std::move(vals)) {
    if (values.size() != checked_size(shape))
      throw std::invalid_argument("Tensor: shape/value size mismatch");
  }

  static Tensor zeros(std::vector<std::size_t> shp) { return Tensor(std::move(shp)); }

  static Tensor full(std::vector<std::size_t> shp, double v) {
    Tensor t(std::move(shp));
    for (auto& x : t.values) x = v;
    return t;
  }

  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  static Tensor vector(std::vector<double> vals) {
    std::size_t n = vals.size();
    return Tensor({n}, std::move(vals));
  }

  std::size_t size() const { return values.size(); }
  std::size_t ndim() const { return shape.size(); }

  // 2-D accessors (most of the model lives in vectors and matrices)
  std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
  std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }

  double& at(std::size_t i) { return values[i]; }
  double at(std::size_t i) const { return values[i]; }
  double& at(std::size_t i, std::size_t j) { return values[i * cols() + j]; }
  double at(std::size_t i, std::size_t j) const { return values[i * cols() + j]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (double v : values)
      if (!std::isfinite(v)) return false;
    return true;
  }

  void fill(double v) {
    for (auto& x : values) x = v;
  }

  std::string shape_str() const {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
      if (i) os << 'x';
      os << shape[i];
    }
    os << ']';
    return os.str();
  }

 private:
  static std::size_t checked_size(const std::vector<std::size_t>& shp) {
    std::size_t n = 1;
    for (std::size_t d : shp) {
      if (d == 0) throw std::invalid_argument("Tensor: zero dimension");
      n *= d;
    }
    return shp.empty() ? 0 : n;
  }
};

inline double dot(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.values[i] * b.values[i];
  return s;
}

}  // namespace vnlg
