//
// SPDX-License-Identifier: Apache-2.0
//

#include "molgraph/encoder.h"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

namespace molgraph::encoder {
namespace {

Tensor adjacency_matrix(const chem::MolecularGraph &g) {
  const std::size_t n = g.size();
  Tensor a({n, n});
  for (const auto &b : g.bonds) {
    a.at(b.begin, b.end) = 1.0;
    a.at(b.end, b.begin) = 1.0;
  }
  return a;
}

// incidence(v, e) = 1 when v is an endpoint of bond e.
Tensor incidence_matrix(const chem::MolecularGraph &g) {
  Tensor inc({g.size(), g.bonds.size()});
  for (std::size_t e = 0; e < g.bonds.size(); ++e) {
    inc.at(g.bonds[e].begin, e) = 1.0;
    inc.at(g.bonds[e].end, e) = 1.0;
  }
  return inc;
}

}  // namespace

void GinConfig::validate() const {
  if (layers < 1) throw std::invalid_argument("GIN needs at least one layer");
  if (hidden_dim < 1 || input_dim < 1)
    throw std::invalid_argument("GIN dimensions must be positive");
}

std::string layer_prefix(std::size_t layer) {
  return "gnn.layer" + std::to_string(layer) + ".";
}

void init_params(ParameterStore &store, const GinConfig &config, Rng &rng) {
  config.validate();
  for (std::size_t l = 1; l <= config.layers; ++l) {
    const std::string p = layer_prefix(l);
    const std::size_t din = config.level_dim(l - 1), d = config.hidden_dim;
    store.add(p + "eps", Tensor({1}), config.learn_epsilon);
    store.add(p + "w1", rng.uniform_tensor({d, din}, 1.0 / std::sqrt(double(din))));
    store.add(p + "b1", Tensor({d}));
    store.add(p + "w2", rng.uniform_tensor({d, d}, 1.0 / std::sqrt(double(d))));
    store.add(p + "b2", Tensor({d}));
    if (config.use_edge_features) {
      store.add(p + "edge_w",
                rng.uniform_tensor({din, chem::kEdgeFeatureDim},
                                   1.0 / std::sqrt(double(chem::kEdgeFeatureDim))));
    }
  }
}

ag::Var aggregate(ag::Tape &tape, const ag::Var &prev,
                  const chem::MolecularGraph &graph, std::size_t layer,
                  const GinConfig &config) {
  if (prev.rows() != graph.size())
    throw ShapeMismatch("gin_layer: " + std::to_string(prev.rows()) +
                        " representation rows for " +
                        std::to_string(graph.size()) + " atoms");
  const std::string p = layer_prefix(layer);
  const auto eps = tape.param(p + "eps");
  auto neighbors = ag::matmul(ag::Var::constant(adjacency_matrix(graph)), prev);
  if (config.use_edge_features && !graph.bonds.empty()) {
    const auto per_node_edges = ag::Var::constant(
        matmul(incidence_matrix(graph), graph.edge_features));
    neighbors = ag::add(neighbors, ag::linear(per_node_edges, tape.param(p + "edge_w")));
  }
  auto self = ag::add(prev, ag::scale_by(prev, eps));
  return ag::add(self, neighbors);
}

ag::Var gin_layer(ag::Tape &tape, const ag::Var &prev,
                  const chem::MolecularGraph &graph, std::size_t layer,
                  const GinConfig &config) {
  const std::string p = layer_prefix(layer);
  auto h = aggregate(tape, prev, graph, layer, config);
  h = ag::silu(ag::linear(h, tape.param(p + "w1"), tape.param(p + "b1")));
  return ag::linear(h, tape.param(p + "w2"), tape.param(p + "b2"));
}

LayerStack encode(ag::Tape &tape, const chem::MolecularGraph &graph,
                  const GinConfig &config) {
  config.validate();
  if (graph.node_features.cols() != config.input_dim)
    throw ShapeMismatch("encode: node features " +
                        shape_string(graph.node_features.shape()) +
                        " for input_dim " + std::to_string(config.input_dim));
  LayerStack stack;
  stack.levels.push_back(ag::Var::constant(graph.node_features));
  for (std::size_t l = 1; l <= config.layers; ++l)
    stack.levels.push_back(gin_layer(tape, stack.levels.back(), graph, l, config));
  return stack;
}

double mean_pairwise_cosine_distance(const Tensor &rows) {
  const std::size_t n = rows.rows(), d = rows.cols();
  if (n < 2)
    throw SingleNodeGraph("over-smoothing statistic needs at least two nodes");
  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += rows.at(i, j) * rows.at(i, j);
    norms[i] = std::sqrt(s);
  }
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t u = 0; u < n; ++u) {
    for (std::size_t v = u + 1; v < n; ++v, ++pairs) {
      if (norms[u] == 0.0 && norms[v] == 0.0) continue;  // identical zero rows
      if (norms[u] == 0.0 || norms[v] == 0.0) {
        total += 1.0;
        continue;
      }
      // 1 - cos written as half the squared distance of the unit vectors, so
      // parallel rows give exactly zero.
      double sq = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double diff = rows.at(u, j) / norms[u] - rows.at(v, j) / norms[v];
        sq += diff * diff;
      }
      total += 0.5 * sq;
    }
  }
  return total / static_cast<double>(pairs);
}

std::vector<double> oversmoothing_stats(const LayerStack &stack) {
  std::vector<double> out;
  out.reserve(stack.levels.size());
  for (const auto &level : stack.levels)
    out.push_back(mean_pairwise_cosine_distance(level.value()));
  return out;
}

std::string level_csv(const Tensor &level) {
  std::ostringstream os;
  os << "node";
  for (std::size_t j = 0; j < level.cols(); ++j) os << ",f" << j;
  os << '\n' << std::setprecision(17);
  for (std::size_t i = 0; i < level.rows(); ++i) {
    os << i;
    for (std::size_t j = 0; j < level.cols(); ++j) os << ',' << level.at(i, j);
    os << '\n';
  }
  return os.str();
}

}  // namespace molgraph::encoder
