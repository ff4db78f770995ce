//
// SPDX-License-Identifier: Apache-2.0
//

#include <gtest/gtest.h>

#include "molgraph/encoder.h"
#include "oracles.h"

namespace molgraph::encoder {
namespace {

struct Fixture {
  GinConfig config;
  ParameterStore store;

  explicit Fixture(std::size_t layers, std::uint64_t seed = 1, std::size_t hidden = 16) {
    config.layers = layers;
    config.hidden_dim = hidden;
    Rng rng(seed);
    init_params(store, config, rng);
    // Non-zero eps so the self term is exercised.
    for (std::size_t l = 1; l <= layers; ++l)
      store.set_value(layer_prefix(l) + "eps", Tensor({1}, {0.1 * double(l)}));
  }
};

// Aggregation with eps = 0, which is the layer with an identity MLP.
Tensor identity_layer(const chem::MolecularGraph &g) {
  Fixture f(1);
  f.store.set_value("gnn.layer1.eps", Tensor({1}));
  ag::Tape tape(f.store);
  return aggregate(tape, ag::Var::constant(g.node_features), g, 1, f.config).value();
}

TEST(Gin, IsolatedNodeKeepsItsRow) {
  const auto g = chem::parse_smiles("C");
  EXPECT_TRUE(identity_layer(g).bit_equal(g.node_features));
}

TEST(Gin, TwoNodesAddTheirNeighbour) {
  const auto g = chem::parse_smiles("CO");
  const auto out = identity_layer(g);
  for (std::size_t j = 0; j < out.cols(); ++j) {
    const double sum = g.node_features.at(0, j) + g.node_features.at(1, j);
    EXPECT_EQ(out.at(0, j), sum);
    EXPECT_EQ(out.at(1, j), sum);
  }
}

TEST(Gin, RowSumIdentityOnRegularGraph) {
  const auto g = chem::parse_smiles("C1CCCCC1");
  const auto out = identity_layer(g);
  const auto deg = g.degrees();
  for (std::size_t j = 0; j < out.cols(); ++j) {
    double lhs = 0.0, rhs = 0.0;
    for (std::size_t v = 0; v < g.size(); ++v) {
      lhs += out.at(v, j);
      rhs += (1.0 + deg[v]) * g.node_features.at(v, j);
    }
    EXPECT_NEAR(lhs, rhs, 1e-12);
  }
}

TEST(Gin, MatchesNaiveLoop) {
  Rng rng(23);
  Fixture f(2);
  for (int trial = 0; trial < 10; ++trial) {
    auto g = oracle::random_graph(rng, 6);
    ag::Tape tape(f.store);
    const auto stack = encode(tape, g, f.config);
    const auto l1 = oracle::naive_gin_layer(g.node_features, g, f.store, 1);
    const auto l2 = oracle::naive_gin_layer(l1, g, f.store, 2);
    EXPECT_LE(stack.level(1).max_abs_diff(l1), 1e-12);
    EXPECT_LE(stack.level(2).max_abs_diff(l2), 1e-12);
  }
}

TEST(Gin, SingleLayerOnMethane) {
  Fixture f(1);
  const auto g = chem::parse_smiles("C");
  ag::Tape tape(f.store);
  const auto stack = encode(tape, g, f.config);
  ASSERT_EQ(stack.depth(), 1u);
  ag::Tape t2(f.store);
  const auto direct = gin_layer(t2, ag::Var::constant(g.node_features), g, 1, f.config);
  EXPECT_TRUE(stack.level(1).bit_equal(direct.value()));
  EXPECT_TRUE(stack.level(0).bit_equal(g.node_features));
}

TEST(Gin, PermutationEquivariance) {
  Rng rng(31);
  Fixture f(3);
  for (const char *s : {"CC(=O)Nc1ccc(O)cc1", "OCC1OC(O)C(O)C(O)C1O", "C1CC1C#N"}) {
    const auto g = chem::parse_smiles(s);
    const auto perm = oracle::random_permutation(rng, g.size());
    const auto p = chem::permute_atoms(g, perm);
    ag::Tape ta(f.store), tb(f.store);
    const auto a = encode(ta, g, f.config), b = encode(tb, p, f.config);
    for (std::size_t l = 0; l <= 3; ++l)
      EXPECT_LE(oracle::permute_rows(a.level(l), perm).max_abs_diff(b.level(l)), 1e-10) << s;
  }
}

TEST(Gin, BondOrderIndependence) {
  Fixture f(2);
  auto g = chem::parse_smiles("CC(=O)OCC");
  auto h = g;
  std::reverse(h.bonds.begin(), h.bonds.end());
  for (auto &b : h.bonds) std::swap(b.begin, b.end);
  chem::featurize(h);
  ag::Tape ta(f.store), tb(f.store);
  EXPECT_LE(encode(ta, g, f.config).level(2).max_abs_diff(encode(tb, h, f.config).level(2)), 1e-12);
}

TEST(Gin, EdgeFeaturesChangeOutput) {
  GinConfig c;
  c.layers = 1;
  c.hidden_dim = 8;
  c.use_edge_features = true;
  ParameterStore s;
  Rng rng(2);
  init_params(s, c, rng);
  ASSERT_TRUE(s.contains("gnn.layer1.edge_w"));
  const auto g = chem::parse_smiles("CC"), h = chem::parse_smiles("C=C");
  ag::Tape ta(s), tb(s);
  // Same atoms and hydrogen counts differ, so compare only the edge term:
  // the aggregate minus the plain neighbour sum.
  const auto a = aggregate(ta, ag::Var::constant(g.node_features), g, 1, c).value();
  const auto b = aggregate(tb, ag::Var::constant(g.node_features), h, 1, c).value();
  EXPECT_GT(a.max_abs_diff(b), 0.0);
}

TEST(Gin, FrozenEpsilonWhenNotLearned) {
  GinConfig c;
  c.learn_epsilon = false;
  ParameterStore s;
  Rng rng(1);
  init_params(s, c, rng);
  EXPECT_FALSE(s.trainable("gnn.layer1.eps"));
}

TEST(Oversmoothing, CollapsedAndOrthogonal) {
  EXPECT_EQ(mean_pairwise_cosine_distance(Tensor::matrix(3, 2, {1, 2, 1, 2, 1, 2})), 0.0);
  EXPECT_NEAR(mean_pairwise_cosine_distance(Tensor::matrix(2, 2, {1, 0, 0, 1})), 1.0, 1e-15);
  EXPECT_THROW(mean_pairwise_cosine_distance(Tensor({1, 4})), SingleNodeGraph);
}

TEST(Oversmoothing, DeterministicOnTwentyAtoms) {
  const auto g = chem::parse_smiles("CC(C)CC1=CC=C(C=C1)C(C)C(=O)OCC(O)CN");
  ASSERT_GE(g.size(), 20u);
  auto run = [&] {
    Fixture f(5, 99, 32);
    ag::Tape tape(f.store);
    return oversmoothing_stats(encode(tape, g, f.config));
  };
  const auto a = run(), b = run();
  ASSERT_EQ(a.size(), 6u);
  for (std::size_t l = 0; l < a.size(); ++l) {
    EXPECT_TRUE(std::isfinite(a[l]));
    EXPECT_EQ(a[l], b[l]);
  }
}

TEST(Oversmoothing, CsvHasOneLinePerNode) {
  const auto csv = level_csv(Tensor::matrix(2, 2, {1, 2, 3, 4}));
  EXPECT_EQ(csv, "node,f0,f1\n0,1,2\n1,3,4\n");
}

}  // namespace
}  // namespace molgraph::encoder
