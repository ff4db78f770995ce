//
// SPDX-License-Identifier: Apache-2.0
//

#include "molgraph/tensor.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <sstream>

namespace molgraph {
namespace {

std::atomic<bool> g_checked_mode{true};

}  // namespace

std::string shape_string(const Shape &shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_size(const Shape &shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

ShapeMismatch::ShapeMismatch(const std::string &op, const Shape &a,
                             const Shape &b)
    : std::invalid_argument(op + ": shape mismatch " + shape_string(a) +
                            " vs " + shape_string(b)) { }

void set_checked_mode(bool enabled) { g_checked_mode = enabled; }
bool checked_mode() { return g_checked_mode; }

Tensor::Tensor(Shape shape)
    : shape_(std::move(shape)), data_(shape_size(shape_), 0.0) {
  if (shape_.size() > 2)
    throw ShapeMismatch("tensor rank above 2: " + shape_string(shape_));
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_.size() > 2)
    throw ShapeMismatch("tensor rank above 2: " + shape_string(shape_));
  if (shape_size(shape_) != data_.size()) {
    throw ShapeMismatch("shape " + shape_string(shape_) + " does not hold " +
                        std::to_string(data_.size()) + " values");
  }
  if (checked_mode()) check_finite();
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols,
                      std::initializer_list<double> values) {
  return Tensor({rows, cols}, std::vector<double>(values));
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
  return t;
}

std::size_t Tensor::rows() const {
  return shape_.size() == 2 ? shape_[0] : 1;
}

std::size_t Tensor::cols() const {
  if (shape_.size() == 2) return shape_[1];
  if (shape_.size() == 1) return shape_[0];
  return 1;
}

double Tensor::item() const {
  if (data_.size() != 1)
    throw ShapeMismatch("item() on tensor of shape " + shape_string(shape_));
  return data_[0];
}

bool Tensor::bit_equal(const Tensor &other) const {
  if (shape_ != other.shape_) return false;
  return data_.empty() ||
         std::memcmp(data_.data(), other.data_.data(),
                     data_.size() * sizeof(double)) == 0;
}

double Tensor::max_abs_diff(const Tensor &other) const {
  if (!same_shape(other)) throw ShapeMismatch("max_abs_diff", shape_, other.shape_);
  double m = 0.0;
  for (std::size_t i = 0; i < data_.size(); ++i)
    m = std::max(m, std::abs(data_[i] - other.data_[i]));
  return m;
}

void Tensor::check_finite() const {
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (!std::isfinite(data_[i])) {
      throw NonFiniteValue("non-finite value at flat index " +
                           std::to_string(i) + " of tensor " +
                           shape_string(shape_));
    }
  }
}

Tensor matmul(const Tensor &a, const Tensor &b) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (k != b.rows()) throw ShapeMismatch("matmul", a.shape(), b.shape());
  std::vector<double> out(m * n, 0.0);
  const auto ad = a.data();
  const auto bd = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    double *orow = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ad[i * k + p];
      const double *brow = bd.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  return Tensor({m, n}, std::move(out));
}

Tensor transpose(const Tensor &a) {
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * n);
  const auto ad = a.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = ad[i * n + j];
  return Tensor({n, m}, std::move(out));
}

Tensor row_softmax(const Tensor &a) {
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * n);
  const auto ad = a.data();
  for (std::size_t i = 0; i < m; ++i) {
    double mx = -INFINITY;
    for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, ad[i * n + j]);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      out[i * n + j] = std::exp(ad[i * n + j] - mx);
      total += out[i * n + j];
    }
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= total;
  }
  return Tensor(a.shape(), std::move(out));
}

}  // namespace molgraph
