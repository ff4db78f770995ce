//
// SPDX-License-Identifier: Apache-2.0
//

#ifndef MOLGRAPH_AUTOGRAD_H_
#define MOLGRAPH_AUTOGRAD_H_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "molgraph/tensor.h"

namespace molgraph {

// Named parameters with a trainable flag. Names are unique and a shape never
// changes once an entry exists. Iteration is in name order.
class ParameterStore {
 public:
  struct Entry {
    Tensor value;
    bool trainable = true;
  };

  void add(const std::string &name, Tensor value, bool trainable = true);
  void remove(const std::string &name);
  bool contains(const std::string &name) const {
    return entries_.count(name) != 0;
  }

  const Tensor &value(const std::string &name) const;
  // Replaces the values of an entry. The shape must match.
  void set_value(const std::string &name, Tensor value);
  bool trainable(const std::string &name) const;
  void set_trainable(const std::string &name, bool trainable);
  // Sets the flag on every entry whose name starts with prefix.
  std::size_t set_trainable_prefix(const std::string &prefix, bool trainable);

  std::vector<std::string> names() const;
  std::vector<std::string> names_with_prefix(const std::string &prefix) const;
  std::size_t trainable_count() const;
  std::size_t size() const { return entries_.size(); }
  const std::map<std::string, Entry> &entries() const { return entries_; }

  // Bitwise equality over every entry in this store matching prefix.
  bool bit_equal(const ParameterStore &other,
                 const std::string &prefix = "") const;

 private:
  std::map<std::string, Entry> entries_;
};

class NonScalarLoss : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class GraphCycle : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

namespace ag {

struct Node;

// Handle to a value in a reverse-mode computation graph. Values never change
// after construction.
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) { }

  static Var constant(Tensor value);

  const Tensor &value() const;
  const Shape &shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  bool requires_grad() const;
  bool valid() const { return node_ != nullptr; }
  const std::shared_ptr<Node> &node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this->grad and accumulates into parents that require grad.
  std::function<void(Node &)> backward;
  std::string param_name;

  Tensor &grad_buffer();
};

// Binds parameters from a store into one forward pass. Each parameter maps to
// a single leaf per tape, so gradients from every use accumulate there.
class Tape {
 public:
  explicit Tape(const ParameterStore &store) : store_(&store) { }

  Var param(const std::string &name);
  const ParameterStore &store() const { return *store_; }

  // Gradient of a scalar loss for every trainable entry in the store.
  // Frozen entries are absent from the result; trainable entries the loss
  // does not reach get zero tensors.
  std::map<std::string, Tensor> backward(const Var &loss) const;

 private:
  const ParameterStore *store_;
  std::map<std::string, Var> leaves_;
};

// The operation set. Every op checks shapes and throws ShapeMismatch.
Var matmul(const Var &a, const Var &b);
Var transpose(const Var &a);
Var add(const Var &a, const Var &b);
Var sub(const Var &a, const Var &b);
// a: m x n, bias: n (or 1 x n), added to every row.
Var add_row(const Var &a, const Var &bias);
Var scale(const Var &a, double factor);
// factor must hold exactly one value.
Var scale_by(const Var &a, const Var &factor);
Var silu(const Var &a);
// With causal set, entry (i, j) for j > i is masked out.
Var row_softmax(const Var &a, bool causal = false);
Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
Var slice_rows(const Var &a, std::size_t begin, std::size_t count);
Var gather_rows(const Var &table, std::span<const int> ids);
Var sum(const Var &a);
// Sum over the listed rows of -log softmax(logits[row])[target].
Var cross_entropy_sum(const Var &logits, std::span<const std::size_t> rows,
                      std::span<const int> targets);

// x W^T (+ b) with W stored as out x in.
Var linear(const Var &x, const Var &weight);
Var linear(const Var &x, const Var &weight, const Var &bias);

// Convenience for the common single-loss case.
inline std::map<std::string, Tensor> backward(const Var &loss,
                                              const Tape &tape) {
  return tape.backward(loss);
}

// Reverse topological order used by backward; exposed for tests.
std::vector<Node *> topological_order(const Var &root);

}  // namespace ag

struct GradientCheckEntry {
  std::string name;
  double max_relative_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t checked = 0;
  bool passed = true;
};

struct GradientCheckReport {
  std::vector<GradientCheckEntry> entries;
  double max_relative_error = 0.0;
  bool passed = true;
};

using LossFn = std::function<ag::Var(ag::Tape &)>;

// Compares analytic gradients of loss_fn against central differences
// (f(w+h) - f(w-h)) / 2h for every scalar of every trainable entry. Frozen
// entries are skipped. Relative error is |a - n| / max(|a|, |n|, floor), so
// components whose magnitude is below floor are compared absolutely.
// Failures are reported, never thrown.
GradientCheckReport finite_difference_check(const LossFn &loss_fn,
                                            const ParameterStore &store,
                                            double step, double tolerance,
                                            double floor = 1e-3);

}  // namespace molgraph

#endif  // MOLGRAPH_AUTOGRAD_H_
