//
// SPDX-License-Identifier: Apache-2.0
//

#ifndef MOLGRAPH_ENCODER_H_
#define MOLGRAPH_ENCODER_H_

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "molgraph/autograd.h"
#include "molgraph/chem.h"
#include "molgraph/rng.h"

namespace molgraph::encoder {

struct GinConfig {
  std::size_t layers = 5;
  std::size_t hidden_dim = 64;
  std::size_t input_dim = chem::kNodeFeatureDim;
  // When false, epsilon is a frozen zero.
  bool learn_epsilon = true;
  // Adds a learned embedding of each bond's features to its neighbor message.
  bool use_edge_features = false;

  void validate() const;
  std::size_t level_dim(std::size_t level) const {
    return level == 0 ? input_dim : hidden_dim;
  }
};

class SingleNodeGraph : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// levels[0] is the node feature matrix; levels[l] the output of layer l.
struct LayerStack {
  std::vector<ag::Var> levels;

  std::size_t depth() const { return levels.empty() ? 0 : levels.size() - 1; }
  const Tensor &level(std::size_t l) const { return levels.at(l).value(); }
};

std::string layer_prefix(std::size_t layer);

// Adds gnn.layer{l}.* entries: eps [1], w1 [d x d_in], b1 [d], w2 [d x d],
// b2 [d], and edge_w [d_in x d_edge] when edge features are on.
void init_params(ParameterStore &store, const GinConfig &config, Rng &rng);

// (1 + eps) z_v + sum over neighbors u of z_u (plus edge messages when on),
// before the layer MLP.
ag::Var aggregate(ag::Tape &tape, const ag::Var &prev,
                  const chem::MolecularGraph &graph, std::size_t layer,
                  const GinConfig &config);

// One GIN update: MLP((1 + eps) z_v + sum_u z_u), layer counted from 1.
ag::Var gin_layer(ag::Tape &tape, const ag::Var &prev,
                  const chem::MolecularGraph &graph, std::size_t layer,
                  const GinConfig &config);

LayerStack encode(ag::Tape &tape, const chem::MolecularGraph &graph,
                  const GinConfig &config);

// Mean over unordered node pairs of 1 - cos(z_u, z_v), one value per level.
std::vector<double> oversmoothing_stats(const LayerStack &stack);
double mean_pairwise_cosine_distance(const Tensor &rows);

// node,f0,f1,... with one line per node.
std::string level_csv(const Tensor &level);

}  // namespace molgraph::encoder

#endif  // MOLGRAPH_ENCODER_H_
