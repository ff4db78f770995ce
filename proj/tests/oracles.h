//
// SPDX-License-Identifier: Apache-2.0
//

// Independent reference implementations and fixtures shared by the unit
// tests and the acceptance binary. Nothing here calls the code it checks
// except to build inputs.

#ifndef MOLGRAPH_TESTS_ORACLES_H_
#define MOLGRAPH_TESTS_ORACLES_H_

#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <sys/wait.h>

#include "molgraph/chem.h"
#include "molgraph/encoder.h"
#include "molgraph/rng.h"

namespace molgraph::oracle {

struct CorpusRow {
  std::string name;
  std::string smiles;
  std::size_t atoms = 0;
  std::size_t bonds = 0;
  std::size_t rings = 0;
  std::size_t ring_atoms = 0;
  std::size_t ring_bonds = 0;
  int total_h = 0;
  std::size_t fragments = 0;
  int net_charge = 0;
};

inline std::string data_path(const std::string &file) {
  return std::string(MOLGRAPH_TEST_DATA_DIR) + "/" + file;
}

// Rows of the checked-in corpus, generated by an external toolkit.
inline std::vector<CorpusRow> load_corpus() {
  std::ifstream in(data_path("smiles_corpus.tsv"));
  if (!in) throw std::runtime_error("cannot open smiles_corpus.tsv");
  std::vector<CorpusRow> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream f(line);
    CorpusRow r;
    std::string field;
    std::vector<std::string> cols;
    while (std::getline(f, field, '\t')) cols.push_back(field);
    if (cols.size() != 10) throw std::runtime_error("bad corpus line: " + line);
    r.name = cols[0];
    r.smiles = cols[1];
    r.atoms = std::stoul(cols[2]);
    r.bonds = std::stoul(cols[3]);
    r.rings = std::stoul(cols[4]);
    r.ring_atoms = std::stoul(cols[5]);
    r.ring_bonds = std::stoul(cols[6]);
    r.total_h = std::stoi(cols[7]);
    r.fragments = std::stoul(cols[8]);
    r.net_charge = std::stoi(cols[9]);
    rows.push_back(std::move(r));
  }
  return rows;
}

inline std::vector<std::size_t> random_permutation(Rng &rng, std::size_t n) {
  std::vector<std::size_t> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = i;
  rng.shuffle(p);
  return p;
}

// Connected random graph of C/N/O/S atoms: a random tree plus a few extra
// edges. Built directly, not through the parser.
inline chem::MolecularGraph random_graph(Rng &rng, std::size_t max_nodes) {
  static const std::array<int, 4> elements{6, 7, 8, 16};
  chem::MolecularGraph g;
  const std::size_t n = 1 + rng.below(max_nodes);
  for (std::size_t i = 0; i < n; ++i) {
    chem::Atom a;
    a.atomic_number = elements[rng.below(elements.size())];
    a.hydrogen_count = static_cast<int>(rng.below(3));
    g.atoms.push_back(a);
  }
  auto linked = [&](std::size_t a, std::size_t b) { return g.find_bond(a, b).has_value(); };
  for (std::size_t i = 1; i < n; ++i) {
    chem::Bond b;
    b.begin = rng.below(i);
    b.end = i;
    b.order = static_cast<chem::BondOrder>(rng.below(3));
    g.bonds.push_back(b);
  }
  const std::size_t extra = n > 2 ? rng.below(n) : 0;
  for (std::size_t k = 0; k < extra; ++k) {
    const std::size_t a = rng.below(n), b = rng.below(n);
    if (a == b || linked(a, b)) continue;
    g.bonds.push_back({a, b, chem::BondOrder::kSingle, 0});
  }
  g.fragment_count = 1;
  chem::featurize(g);
  return g;
}

// out[perm[i]] = in[i], matching chem::permute_atoms.
inline Tensor permute_rows(const Tensor &in, const std::vector<std::size_t> &perm) {
  Tensor out(in.shape());
  for (std::size_t i = 0; i < in.rows(); ++i)
    for (std::size_t j = 0; j < in.cols(); ++j) out.at(perm[i], j) = in.at(i, j);
  return out;
}

inline double silu(double x) { return x / (1.0 + std::exp(-x)); }

// One GIN update written as explicit loops over nodes, bonds and weights:
// MLP((1 + eps) z_v + sum over bonds touching v of the other endpoint).
inline Tensor naive_gin_layer(const Tensor &prev, const chem::MolecularGraph &g,
                              const ParameterStore &store, std::size_t layer) {
  const std::string p = "gnn.layer" + std::to_string(layer) + ".";
  const double eps = store.value(p + "eps").data()[0];
  const Tensor &w1 = store.value(p + "w1"), &b1 = store.value(p + "b1");
  const Tensor &w2 = store.value(p + "w2"), &b2 = store.value(p + "b2");
  const std::size_t n = prev.rows(), din = prev.cols(), d = w1.rows();
  Tensor out({n, d});
  for (std::size_t v = 0; v < n; ++v) {
    std::vector<double> agg(din);
    for (std::size_t j = 0; j < din; ++j) agg[j] = (1.0 + eps) * prev.at(v, j);
    for (const auto &b : g.bonds) {
      std::size_t u;
      if (b.begin == v) u = b.end;
      else if (b.end == v) u = b.begin;
      else continue;
      for (std::size_t j = 0; j < din; ++j) agg[j] += prev.at(u, j);
    }
    std::vector<double> hidden(d);
    for (std::size_t i = 0; i < d; ++i) {
      double s = b1.data()[i];
      for (std::size_t j = 0; j < din; ++j) s += w1.at(i, j) * agg[j];
      hidden[i] = silu(s);
    }
    for (std::size_t i = 0; i < d; ++i) {
      double s = b2.data()[i];
      for (std::size_t j = 0; j < d; ++j) s += w2.at(i, j) * hidden[j];
      out.at(v, i) = s;
    }
  }
  return out;
}

enum class MetricKind { kBleu1, kBleu2, kBleu4, kBleu1Unclipped, kMeteor, kMae, kLevenshtein };

struct MetricCase {
  MetricKind kind;
  const char *candidate;
  const char *reference;
  double expected;
};

// Hand-evaluated values. MAE pairs hold space-separated number lists.
inline std::vector<MetricCase> metric_suite() {
  const double e_half = std::exp(-0.5);
  return {
      {MetricKind::kBleu4, "the cat sat on the mat", "the cat sat on the mat", 1.0},
      {MetricKind::kBleu2, "the cat", "the cat sat", e_half},
      {MetricKind::kBleu4, "a b c d", "w x y z", 0.0},
      // p1 = 4/5, p2 = 3/4, p3 = 2/3, p4 = 1/2, equal lengths.
      {MetricKind::kBleu4, "the quick brown fox jumps", "the quick brown fox jumped",
       std::pow(0.2, 0.25)},
      // Clipping keeps 2 of 4 "the"; BP = exp(1 - 6/4).
      {MetricKind::kBleu1, "the the the the", "the cat is on the mat", 0.5 * e_half},
      {MetricKind::kBleu1Unclipped, "the the the the", "the cat is on the mat", e_half},
      {MetricKind::kMeteor, "a molecule with rings", "a molecule with rings", 0.875},
      {MetricKind::kMeteor, "acid", "acid", 0.5},
      // P = 1, R = 1/2, F = 10/19, one chunk over three matches.
      {MetricKind::kMeteor, "the cat sat", "the cat sat on the mat", (10.0 / 19.0) * (5.0 / 6.0)},
      // Two single-token chunks: Penalty = 0.5.
      {MetricKind::kMeteor, "cat the", "the cat", 0.5},
      {MetricKind::kMae, "0.3 0.5", "0.1 0.5", 0.1},
      {MetricKind::kLevenshtein, "kitten", "sitting", 3.0},
  };
}

inline std::string run_command(const std::string &cmd, int *status = nullptr) {
  std::unique_ptr<FILE, int (*)(FILE *)> pipe(popen(cmd.c_str(), "r"), pclose);
  if (!pipe) throw std::runtime_error("popen failed: " + cmd);
  std::string out;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, pipe.get())) > 0) out.append(buf, n);
  const int rc = pclose(pipe.release());
  if (status) *status = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  return out;
}

inline std::string cli() { return MOLGRAPH_CLI_PATH; }

// A published polyene antibiotic example with a two-turn conversation.
inline constexpr const char *kPolyeneSmiles =
    "CCCCC(C)/C=C(\\C)/C=C/C(=O)NC1=C[C@]([C@@H](CC1=O)O)(/C=C/C=C/C=C/C(=O)NC2"
    "=C(CCC2=O)O)O";
inline constexpr const char *kPolyeneCaption =
    "The molecule is a polyene antibiotic that is TMC-1A in which the "
    "2,4-dimethyloct-2-enoyl group has been replaced by an "
    "(E,E)-4,6-dimethyldeca-2,4-dienoyl group. TMC-1C is an antitumour "
    "antibiotic isolated from Streptomyces sp. A-230...";
inline constexpr const char *kPolyeneIupac =
    "(2E,4E)-N-[(3S,4R)-3,4-dihydroxy-3-[(1E,3E,5E)-7-[(2-hydroxy-5-"
    "oxocyclopenten-1-yl)amino]-7-oxohepta-1,3,5-trienyl]-6-oxocyclohexen-1-"
    "yl]-4,6-dimethyldeca-2,4-dienamide";
inline constexpr const char *kPolyeneResponse =
    "Question:\n"
    "What is the IUPAC name of the molecule you are analyzing?\n"
    "===\n"
    "Answer:\n"
    "The IUPAC name of the molecule is (2E,4E)-N-[(3S,4R)-3,4-dihydroxy-3-"
    "[(1E,3E,5E)-7-[(2-hydroxy-5-oxocyclopenten-1-yl)amino]-7-oxohepta-1,3,5-"
    "trienyl]-6-oxocyclohexen-1-yl]-4,6-dimethyldeca-2,4-dienamide.\n"
    "===\n"
    "Question:\n"
    "Can you identify the type of acid or base this molecule can act as in a "
    "reaction?\n"
    "===\n"
    "Answer:\n"
    "This molecule can act as a weak acid due to the presence of the "
    "carboxylic acid group.\n";

}  // namespace molgraph::oracle

#endif  // MOLGRAPH_TESTS_ORACLES_H_
