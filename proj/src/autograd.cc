//
// SPDX-License-Identifier: Apache-2.0
//

#include "molgraph/autograd.h"

#include <algorithm>
#include <cmath>
#include <unordered_map>
#include <unordered_set>

namespace molgraph {

// ---------------------------------------------------------------------------
// ParameterStore

void ParameterStore::add(const std::string &name, Tensor value,
                         bool trainable) {
  if (entries_.count(name))
    throw std::invalid_argument("duplicate parameter name: " + name);
  entries_.emplace(name, Entry{std::move(value), trainable});
}

void ParameterStore::remove(const std::string &name) {
  if (!entries_.erase(name))
    throw std::out_of_range("unknown parameter: " + name);
}

const Tensor &ParameterStore::value(const std::string &name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::out_of_range("unknown parameter: " + name);
  return it->second.value;
}

void ParameterStore::set_value(const std::string &name, Tensor value) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::out_of_range("unknown parameter: " + name);
  if (!it->second.value.same_shape(value))
    throw ShapeMismatch("set_value(" + name + ")", it->second.value.shape(),
                        value.shape());
  it->second.value = std::move(value);
}

bool ParameterStore::trainable(const std::string &name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::out_of_range("unknown parameter: " + name);
  return it->second.trainable;
}

void ParameterStore::set_trainable(const std::string &name, bool trainable) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::out_of_range("unknown parameter: " + name);
  it->second.trainable = trainable;
}

std::size_t ParameterStore::set_trainable_prefix(const std::string &prefix,
                                                 bool trainable) {
  std::size_t n = 0;
  for (auto &[name, entry] : entries_) {
    if (name.compare(0, prefix.size(), prefix) == 0) {
      entry.trainable = trainable;
      ++n;
    }
  }
  return n;
}

std::vector<std::string> ParameterStore::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto &kv : entries_) out.push_back(kv.first);
  return out;
}

std::vector<std::string> ParameterStore::names_with_prefix(
    const std::string &prefix) const {
  std::vector<std::string> out;
  for (const auto &kv : entries_)
    if (kv.first.compare(0, prefix.size(), prefix) == 0) out.push_back(kv.first);
  return out;
}

std::size_t ParameterStore::trainable_count() const {
  return std::count_if(entries_.begin(), entries_.end(),
                       [](const auto &kv) { return kv.second.trainable; });
}

bool ParameterStore::bit_equal(const ParameterStore &other,
                               const std::string &prefix) const {
  for (const auto &[name, entry] : entries_) {
    if (name.compare(0, prefix.size(), prefix) != 0) continue;
    auto it = other.entries_.find(name);
    if (it == other.entries_.end()) return false;
    if (!entry.value.bit_equal(it->second.value)) return false;
  }
  return true;
}

namespace ag {
namespace {

Var make(Tensor value, std::vector<Var> inputs,
         std::function<void(Node &)> backward) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  for (const auto &in : inputs) {
    if (in.requires_grad()) node->requires_grad = true;
  }
  if (node->requires_grad) {
    node->parents.reserve(inputs.size());
    for (const auto &in : inputs) node->parents.push_back(in.node());
    node->backward = std::move(backward);
  }
  return Var(std::move(node));
}

void require_same(const char *op, const Tensor &a, const Tensor &b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeMismatch(op, a.shape(), b.shape());
}

}  // namespace

Tensor &Node::grad_buffer() {
  if (grad.size() != value.size()) grad = Tensor(value.shape());
  return grad;
}

Var Var::constant(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Var(std::move(node));
}

const Tensor &Var::value() const {
  if (!node_) throw std::logic_error("use of an empty Var");
  return node_->value;
}

bool Var::requires_grad() const { return node_ && node_->requires_grad; }

Var Tape::param(const std::string &name) {
  auto it = leaves_.find(name);
  if (it != leaves_.end()) return it->second;
  auto node = std::make_shared<Node>();
  node->value = store_->value(name);
  node->requires_grad = store_->trainable(name);
  node->param_name = name;
  Var v(std::move(node));
  leaves_.emplace(name, v);
  return v;
}

std::vector<Node *> topological_order(const Var &root) {
  // Iterative post-order DFS over grad-requiring nodes. Parents are visited in
  // insertion order, so the order is fixed for a given graph.
  std::vector<Node *> order;
  if (!root.requires_grad()) return order;
  enum class Mark : std::uint8_t { kOpen, kDone };
  std::unordered_map<Node *, Mark> marks;
  std::vector<std::pair<Node *, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  marks[root.node().get()] = Mark::kOpen;
  while (!stack.empty()) {
    auto &[node, next] = stack.back();
    if (next < node->parents.size()) {
      Node *parent = node->parents[next++].get();
      if (!parent->requires_grad) continue;
      auto it = marks.find(parent);
      if (it == marks.end()) {
        marks[parent] = Mark::kOpen;
        stack.emplace_back(parent, 0);
      } else if (it->second == Mark::kOpen) {
        throw GraphCycle("autograd graph contains a cycle");
      }
      continue;
    }
    marks[node] = Mark::kDone;
    order.push_back(node);
    stack.pop_back();
  }
  std::reverse(order.begin(), order.end());
  return order;
}

std::map<std::string, Tensor> Tape::backward(const Var &loss) const {
  if (loss.value().size() != 1)
    throw NonScalarLoss("backward needs a scalar loss, got shape " +
                        shape_string(loss.shape()));
  const auto order = topological_order(loss);
  for (Node *n : order) n->grad = Tensor();
  if (!order.empty()) {
    order.front()->grad_buffer().mutable_data()[0] = 1.0;
    for (Node *n : order) {
      if (n->backward && n->grad.size() == n->value.size()) n->backward(*n);
    }
  }
  std::unordered_set<const Node *> reached(order.begin(), order.end());
  std::map<std::string, Tensor> grads;
  for (const auto &[name, entry] : store_->entries()) {
    if (!entry.trainable) continue;
    auto it = leaves_.find(name);
    if (it != leaves_.end() && reached.count(it->second.node().get()) &&
        it->second.node()->grad.size() == entry.value.size()) {
      Tensor g = it->second.node()->grad;
      grads.emplace(name, std::move(g));
    } else {
      grads.emplace(name, Tensor(entry.value.shape()));
    }
  }
  return grads;
}

// ---------------------------------------------------------------------------
// Operations

Var matmul(const Var &a, const Var &b) {
  const Tensor &av = a.value(), &bv = b.value();
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  Tensor out = molgraph::matmul(av, bv);
  return make(std::move(out), {a, b}, [m, k, n](Node &self) {
    const auto g = self.grad.data();
    Node &pa = *self.parents[0], &pb = *self.parents[1];
    if (pa.requires_grad) {
      auto ga = pa.grad_buffer().mutable_data();
      const auto bd = pb.value.data();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * bd[p * n + j];
          ga[i * k + p] += acc;
        }
    }
    if (pb.requires_grad) {
      auto gb = pb.grad_buffer().mutable_data();
      const auto ad = pa.value.data();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double a_ip = ad[i * k + p];
          for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += a_ip * g[i * n + j];
        }
    }
  });
}

Var linear(const Var &x, const Var &weight) {
  const Tensor &xv = x.value(), &wv = weight.value();
  const std::size_t m = xv.rows(), k = xv.cols(), n = wv.rows();
  if (wv.cols() != k) throw ShapeMismatch("linear", xv.shape(), wv.shape());
  std::vector<double> out(m * n, 0.0);
  const auto xd = xv.data(), wd = wv.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t o = 0; o < n; ++o) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += xd[i * k + p] * wd[o * k + p];
      out[i * n + o] = acc;
    }
  return make(Tensor({m, n}, std::move(out)), {x, weight},
              [m, k, n](Node &self) {
                const auto g = self.grad.data();
                Node &px = *self.parents[0], &pw = *self.parents[1];
                if (px.requires_grad) {
                  auto gx = px.grad_buffer().mutable_data();
                  const auto wd = pw.value.data();
                  for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t o = 0; o < n; ++o) {
                      const double go = g[i * n + o];
                      for (std::size_t p = 0; p < k; ++p)
                        gx[i * k + p] += go * wd[o * k + p];
                    }
                }
                if (pw.requires_grad) {
                  auto gw = pw.grad_buffer().mutable_data();
                  const auto xd = px.value.data();
                  for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t o = 0; o < n; ++o) {
                      const double go = g[i * n + o];
                      for (std::size_t p = 0; p < k; ++p)
                        gw[o * k + p] += go * xd[i * k + p];
                    }
                }
              });
}

Var linear(const Var &x, const Var &weight, const Var &bias) {
  return add_row(linear(x, weight), bias);
}

Var transpose(const Var &a) {
  const std::size_t m = a.rows(), n = a.cols();
  return make(molgraph::transpose(a.value()), {a}, [m, n](Node &self) {
    const auto g = self.grad.data();
    auto ga = self.parents[0]->grad_buffer().mutable_data();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j * m + i];
  });
}

Var add(const Var &a, const Var &b) {
  require_same("add", a.value(), b.value());
  Tensor out = a.value();
  auto od = out.mutable_data();
  const auto bd = b.value().data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] += bd[i];
  return make(std::move(out), {a, b}, [](Node &self) {
    const auto g = self.grad.data();
    for (auto &p : self.parents) {
      if (!p->requires_grad) continue;
      auto gp = p->grad_buffer().mutable_data();
      for (std::size_t i = 0; i < g.size(); ++i) gp[i] += g[i];
    }
  });
}

Var sub(const Var &a, const Var &b) { return add(a, scale(b, -1.0)); }

Var add_row(const Var &a, const Var &bias) {
  const std::size_t m = a.rows(), n = a.cols();
  if (bias.value().size() != n)
    throw ShapeMismatch("add_row", a.shape(), bias.shape());
  Tensor out = a.value();
  auto od = out.mutable_data();
  const auto bd = bias.value().data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) od[i * n + j] += bd[j];
  return make(std::move(out), {a, bias}, [m, n](Node &self) {
    const auto g = self.grad.data();
    Node &pa = *self.parents[0], &pb = *self.parents[1];
    if (pa.requires_grad) {
      auto ga = pa.grad_buffer().mutable_data();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (pb.requires_grad) {
      auto gb = pb.grad_buffer().mutable_data();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
    }
  });
}

Var scale(const Var &a, double factor) {
  Tensor out = a.value();
  for (auto &v : out.mutable_data()) v *= factor;
  return make(std::move(out), {a}, [factor](Node &self) {
    const auto g = self.grad.data();
    auto ga = self.parents[0]->grad_buffer().mutable_data();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += factor * g[i];
  });
}

Var scale_by(const Var &a, const Var &factor) {
  const double s = factor.value().item();
  Tensor out = a.value();
  for (auto &v : out.mutable_data()) v *= s;
  return make(std::move(out), {a, factor}, [s](Node &self) {
    const auto g = self.grad.data();
    Node &pa = *self.parents[0], &ps = *self.parents[1];
    if (pa.requires_grad) {
      auto ga = pa.grad_buffer().mutable_data();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
    }
    if (ps.requires_grad) {
      const auto ad = pa.value.data();
      double acc = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * ad[i];
      ps.grad_buffer().mutable_data()[0] += acc;
    }
  });
}

Var silu(const Var &a) {
  Tensor out = a.value();
  for (auto &v : out.mutable_data()) v = v / (1.0 + std::exp(-v));
  return make(std::move(out), {a}, [](Node &self) {
    const auto g = self.grad.data();
    const auto x = self.parents[0]->value.data();
    auto ga = self.parents[0]->grad_buffer().mutable_data();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double s = 1.0 / (1.0 + std::exp(-x[i]));
      ga[i] += g[i] * s * (1.0 + x[i] * (1.0 - s));
    }
  });
}

Var row_softmax(const Var &a, bool causal) {
  const std::size_t m = a.rows(), n = a.cols();
  const auto ad = a.value().data();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t limit = causal ? std::min(n, i + 1) : n;
    double mx = -INFINITY;
    for (std::size_t j = 0; j < limit; ++j) mx = std::max(mx, ad[i * n + j]);
    double total = 0.0;
    for (std::size_t j = 0; j < limit; ++j) {
      out[i * n + j] = std::exp(ad[i * n + j] - mx);
      total += out[i * n + j];
    }
    for (std::size_t j = 0; j < limit; ++j) out[i * n + j] /= total;
  }
  return make(Tensor(a.shape(), std::move(out)), {a}, [m, n](Node &self) {
    const auto g = self.grad.data();
    const auto y = self.value.data();
    auto ga = self.parents[0]->grad_buffer().mutable_data();
    for (std::size_t i = 0; i < m; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += g[i * n + j] * y[i * n + j];
      for (std::size_t j = 0; j < n; ++j)
        ga[i * n + j] += y[i * n + j] * (g[i * n + j] - dot);
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeMismatch("concat_rows of nothing");
  const std::size_t n = parts[0].cols();
  std::size_t total = 0;
  std::vector<double> out;
  for (const auto &p : parts) {
    if (p.cols() != n) throw ShapeMismatch("concat_rows", parts[0].shape(), p.shape());
    total += p.rows();
    const auto d = p.value().data();
    out.insert(out.end(), d.begin(), d.end());
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return make(Tensor({total, n}, std::move(out)), std::move(inputs),
              [](Node &self) {
                const auto g = self.grad.data();
                std::size_t offset = 0;
                for (auto &p : self.parents) {
                  const std::size_t len = p->value.size();
                  if (p->requires_grad) {
                    auto gp = p->grad_buffer().mutable_data();
                    for (std::size_t i = 0; i < len; ++i) gp[i] += g[offset + i];
                  }
                  offset += len;
                }
              });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeMismatch("concat_cols of nothing");
  const std::size_t m = parts[0].rows();
  std::size_t total = 0;
  for (const auto &p : parts) {
    if (p.rows() != m) throw ShapeMismatch("concat_cols", parts[0].shape(), p.shape());
    total += p.cols();
  }
  std::vector<double> out(m * total);
  std::size_t col = 0;
  for (const auto &p : parts) {
    const std::size_t w = p.cols();
    const auto d = p.value().data();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < w; ++j) out[i * total + col + j] = d[i * w + j];
    col += w;
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return make(Tensor({m, total}, std::move(out)), std::move(inputs),
              [m, total](Node &self) {
                const auto g = self.grad.data();
                std::size_t c0 = 0;
                for (auto &p : self.parents) {
                  const std::size_t w = p->value.cols();
                  if (p->requires_grad) {
                    auto gp = p->grad_buffer().mutable_data();
                    for (std::size_t i = 0; i < m; ++i)
                      for (std::size_t j = 0; j < w; ++j)
                        gp[i * w + j] += g[i * total + c0 + j];
                  }
                  c0 += w;
                }
              });
}

Var slice_rows(const Var &a, std::size_t begin, std::size_t count) {
  const std::size_t n = a.cols();
  if (begin + count > a.rows())
    throw ShapeMismatch("slice_rows [" + std::to_string(begin) + ", " +
                        std::to_string(begin + count) + ") of " +
                        shape_string(a.shape()));
  const auto d = a.value().data();
  std::vector<double> out(d.begin() + begin * n, d.begin() + (begin + count) * n);
  return make(Tensor({count, n}, std::move(out)), {a},
              [begin, n](Node &self) {
                const auto g = self.grad.data();
                auto ga = self.parents[0]->grad_buffer().mutable_data();
                for (std::size_t i = 0; i < g.size(); ++i) ga[begin * n + i] += g[i];
              });
}

Var gather_rows(const Var &table, std::span<const int> ids) {
  const std::size_t n = table.cols(), vocab = table.rows();
  std::vector<double> out;
  out.reserve(ids.size() * n);
  const auto d = table.value().data();
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab)
      throw ShapeMismatch("gather_rows: id " + std::to_string(id) +
                          " outside table of " + std::to_string(vocab) + " rows");
    out.insert(out.end(), d.begin() + id * n, d.begin() + (id + 1) * n);
  }
  std::vector<int> idx(ids.begin(), ids.end());
  return make(Tensor({ids.size(), n}, std::move(out)), {table},
              [n, idx = std::move(idx)](Node &self) {
                const auto g = self.grad.data();
                auto gt = self.parents[0]->grad_buffer().mutable_data();
                for (std::size_t r = 0; r < idx.size(); ++r)
                  for (std::size_t j = 0; j < n; ++j)
                    gt[idx[r] * n + j] += g[r * n + j];
              });
}

Var sum(const Var &a) {
  double total = 0.0;
  for (double v : a.value().data()) total += v;
  return make(Tensor::scalar(total), {a}, [](Node &self) {
    const double g = self.grad.data()[0];
    for (auto &v : self.parents[0]->grad_buffer().mutable_data()) v += g;
  });
}

Var cross_entropy_sum(const Var &logits, std::span<const std::size_t> rows,
                      std::span<const int> targets) {
  if (rows.size() != targets.size())
    throw ShapeMismatch("cross_entropy_sum: " + std::to_string(rows.size()) +
                        " rows vs " + std::to_string(targets.size()) + " targets");
  const std::size_t m = logits.rows(), n = logits.cols();
  const auto d = logits.value().data();
  // Softmax of each selected row, kept for the backward pass.
  std::vector<double> probs(rows.size() * n);
  double total = 0.0;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const std::size_t row = rows[r];
    const int t = targets[r];
    if (row >= m || t < 0 || static_cast<std::size_t>(t) >= n)
      throw ShapeMismatch("cross_entropy_sum: row/target outside " +
                          shape_string(logits.shape()));
    double mx = -INFINITY;
    for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, d[row * n + j]);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      probs[r * n + j] = std::exp(d[row * n + j] - mx);
      z += probs[r * n + j];
    }
    for (std::size_t j = 0; j < n; ++j) probs[r * n + j] /= z;
    total += -(d[row * n + t] - mx - std::log(z));
  }
  std::vector<std::size_t> rs(rows.begin(), rows.end());
  std::vector<int> ts(targets.begin(), targets.end());
  return make(Tensor::scalar(total), {logits},
              [n, rs = std::move(rs), ts = std::move(ts),
               probs = std::move(probs)](Node &self) {
                const double g = self.grad.data()[0];
                auto gl = self.parents[0]->grad_buffer().mutable_data();
                for (std::size_t r = 0; r < rs.size(); ++r) {
                  for (std::size_t j = 0; j < n; ++j)
                    gl[rs[r] * n + j] += g * probs[r * n + j];
                  gl[rs[r] * n + ts[r]] -= g;
                }
              });
}

}  // namespace ag

GradientCheckReport finite_difference_check(const LossFn &loss_fn,
                                            const ParameterStore &store,
                                            double step, double tolerance,
                                            double floor) {
  ag::Tape tape(store);
  const auto grads = tape.backward(loss_fn(tape));

  ParameterStore probe = store;
  auto eval = [&](const ParameterStore &s) {
    ag::Tape t(s);
    return loss_fn(t).value().item();
  };

  GradientCheckReport report;
  for (const auto &[name, analytic] : grads) {
    GradientCheckEntry entry;
    entry.name = name;
    Tensor base = store.value(name);
    for (std::size_t i = 0; i < base.size(); ++i) {
      Tensor plus = base, minus = base;
      plus.mutable_data()[i] += step;
      minus.mutable_data()[i] -= step;
      probe.set_value(name, plus);
      const double fp = eval(probe);
      probe.set_value(name, minus);
      const double fm = eval(probe);
      const double numeric = (fp - fm) / (2.0 * step);
      const double a = analytic.data()[i];
      const double abs_err = std::abs(a - numeric);
      const double denom = std::max({std::abs(a), std::abs(numeric), floor});
      entry.max_abs_error = std::max(entry.max_abs_error, abs_err);
      entry.max_relative_error = std::max(entry.max_relative_error, abs_err / denom);
      ++entry.checked;
    }
    probe.set_value(name, base);
    entry.passed = entry.max_relative_error < tolerance;
    report.max_relative_error =
        std::max(report.max_relative_error, entry.max_relative_error);
    report.passed = report.passed && entry.passed;
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace molgraph
