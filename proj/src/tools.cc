//
// SPDX-License-Identifier: Apache-2.0
//

#include "molgraph/tools.h"

#include <cstdlib>
#include <iomanip>
#include <sstream>

#include "molgraph/encoder.h"

namespace molgraph::cli {
namespace {

std::string_view order_name(chem::BondOrder o) {
  switch (o) {
    case chem::BondOrder::kSingle: return "single";
    case chem::BondOrder::kDouble: return "double";
    case chem::BondOrder::kTriple: return "triple";
    case chem::BondOrder::kAromatic: return "aromatic";
  }
  return "single";
}

}  // namespace

json graph_to_json(const chem::MolecularGraph &g) {
  json atoms = json::array(), bonds = json::array();
  const auto in_ring = g.ring_bonds();
  for (std::size_t i = 0; i < g.atoms.size(); ++i) {
    const auto &a = g.atoms[i];
    json j{{"index", i},
           {"element", std::string(a.symbol())},
           {"charge", a.formal_charge},
           {"aromatic", a.is_aromatic},
           {"hydrogens", a.hydrogen_count}};
    if (a.isotope) j["isotope"] = *a.isotope;
    if (a.chirality_tag) j["chirality"] = *a.chirality_tag;
    atoms.push_back(std::move(j));
  }
  for (std::size_t e = 0; e < g.bonds.size(); ++e) {
    const auto &b = g.bonds[e];
    json j{{"begin", b.begin}, {"end", b.end}, {"order", std::string(order_name(b.order))},
           {"ring", static_cast<bool>(in_ring[e])}};
    if (b.stereo_mark) j["stereo"] = std::string(1, b.stereo_mark);
    bonds.push_back(std::move(j));
  }
  return {{"valid", true},
          {"smiles", g.source_smiles},
          {"atoms", atoms},
          {"bonds", bonds},
          {"fragments", g.fragment_count},
          {"rings", g.circuit_rank()}};
}

json parse_report(const std::string &smiles) {
  try {
    return graph_to_json(chem::parse_smiles(smiles));
  } catch (const chem::SmilesError &e) {
    return {{"valid", false},
            {"smiles", smiles},
            {"error",
             {{"kind", std::string(chem::to_string(e.kind()))},
              {"offset", e.offset()},
              {"message", e.what()}}}};
  }
}

json groups_to_json(const std::vector<motif::FunctionalGroup> &groups,
                    const chem::MolecularGraph &graph) {
  json out = json::array();
  for (const auto &g : groups) {
    json elements = json::array();
    for (auto i : g.atom_indices) elements.push_back(std::string(graph.atoms[i].symbol()));
    out.push_back({{"kind", std::string(motif::to_string(g.kind))},
                   {"atoms", g.atom_indices},
                   {"elements", elements},
                   {"ring", g.ring_flag}});
  }
  return out;
}

std::string default_alphabet() {
  std::string s = "\n";
  for (char c = 0x20; c < 0x7F; ++c) s.push_back(c);
  return s;
}

pipeline::ModelConfig default_model_config() {
  pipeline::ModelConfig c;
  c.alphabet = default_alphabet();
  c.reconcile();
  return c;
}

std::uint64_t env_seed(std::uint64_t fallback) {
  pipeline::TrainingConfig t;
  t.seed = fallback;
  pipeline::apply_seed_override(t);
  return t.seed;
}

pipeline::Model load_or_init(const std::optional<std::string> &ckpt, std::uint64_t seed) {
  if (ckpt) return pipeline::load_model(*ckpt);
  return pipeline::Model(default_model_config(), seed);
}

std::string oversmooth_csv(const chem::MolecularGraph &graph, const pipeline::Model &model,
                           const std::vector<std::size_t> &layers) {
  const auto &gin = model.config().gin;
  for (auto l : layers)
    if (l < 1 || l > gin.layers)
      throw std::invalid_argument("layer " + std::to_string(l) + " is outside 1.." +
                                  std::to_string(gin.layers));
  ag::Tape tape(model.params());
  const auto stack = encoder::encode(tape, graph, gin);
  std::ostringstream os;
  os << "layer,mean_cosine_distance\n" << std::setprecision(17);
  for (auto l : layers)
    os << l << ',' << encoder::mean_pairwise_cosine_distance(stack.level(l)) << '\n';
  return os.str();
}

std::vector<std::size_t> parse_index_list(const std::string &text) {
  std::vector<std::size_t> out;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item.empty() || item.find_first_not_of("0123456789") != std::string::npos)
      throw std::invalid_argument("expected a comma-separated list of integers, got '" + text + "'");
    out.push_back(std::stoul(item));
  }
  if (out.empty()) throw std::invalid_argument("empty list");
  return out;
}

std::string matrix_csv(const Tensor &t) {
  std::ostringstream os;
  os << std::setprecision(17);
  for (std::size_t i = 0; i < t.rows(); ++i) {
    for (std::size_t j = 0; j < t.cols(); ++j) os << (j ? "," : "") << t.at(i, j);
    os << '\n';
  }
  return os.str();
}

}  // namespace molgraph::cli
