//
// SPDX-License-Identifier: Apache-2.0
//

#ifndef MOLGRAPH_TENSOR_H_
#define MOLGRAPH_TENSOR_H_

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace molgraph {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape &shape);
std::size_t shape_size(const Shape &shape);

class ShapeMismatch : public std::invalid_argument {
 public:
  ShapeMismatch(const std::string &op, const Shape &a, const Shape &b);
  explicit ShapeMismatch(const std::string &what)
      : std::invalid_argument(what) { }
};

class NonFiniteValue : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// When enabled (the default), constructing a Tensor with NaN or Inf raises
// NonFiniteValue. The flag is process-wide.
void set_checked_mode(bool enabled);
bool checked_mode();

// Dense row-major tensor of rank 0, 1 or 2. Rank-1 tensors act as 1 x n rows
// in every rank-2 operation.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor scalar(double v) { return Tensor({}, {v}); }
  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::initializer_list<double> values);
  static Tensor identity(std::size_t n);

  const Shape &shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const { return data_; }
  std::span<double> mutable_data() { return data_; }
  std::vector<double> &storage() { return data_; }

  double &at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const {
    return data_[r * cols() + c];
  }
  double item() const;

  std::span<const double> row(std::size_t r) const {
    return std::span<const double>(data_).subspan(r * cols(), cols());
  }

  bool same_shape(const Tensor &other) const { return shape_ == other.shape_; }
  // Bitwise equality of shape and every value.
  bool bit_equal(const Tensor &other) const;
  double max_abs_diff(const Tensor &other) const;

  void check_finite() const;

 private:
  Shape shape_;
  std::vector<double> data_;
};

// Plain value operations shared by the autograd layer and the oracles.
Tensor matmul(const Tensor &a, const Tensor &b);
Tensor transpose(const Tensor &a);
Tensor row_softmax(const Tensor &a);

}  // namespace molgraph

#endif  // MOLGRAPH_TENSOR_H_
