//
// SPDX-License-Identifier: Apache-2.0
//

#include "molgraph/motif.h"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

namespace molgraph::motif {
namespace {

using chem::BondOrder;
using chem::MolecularGraph;

constexpr std::string_view kKindNames[kGroupKindCount] = {
    "carboxyl", "ester",   "amide",    "hydroxyl", "amine",     "ether",
    "ketone",   "aldehyde", "nitrile", "nitro",    "thiol",     "halogen",
    "phosphate", "sulfonyl", "aromatic_ring", "aliphatic_ring"};

constexpr int kC = 6, kN = 7, kO = 8, kP = 15, kS = 16;

struct Neighbor {
  std::size_t atom;
  BondOrder order;
};

class View {
 public:
  explicit View(const MolecularGraph &g) : g_(g), nbrs_(g.size()) {
    for (const auto &b : g.bonds) {
      nbrs_[b.begin].push_back({b.end, b.order});
      nbrs_[b.end].push_back({b.begin, b.order});
    }
    for (auto &n : nbrs_)
      std::sort(n.begin(), n.end(),
                [](const Neighbor &a, const Neighbor &b) { return a.atom < b.atom; });
  }

  int z(std::size_t i) const { return g_.atoms[i].atomic_number; }
  int h(std::size_t i) const { return g_.atoms[i].hydrogen_count; }
  bool aromatic(std::size_t i) const { return g_.atoms[i].is_aromatic; }
  std::size_t degree(std::size_t i) const { return nbrs_[i].size(); }
  const std::vector<Neighbor> &nbrs(std::size_t i) const { return nbrs_[i]; }

  // Terminal oxygens double-bonded to atom i.
  std::vector<std::size_t> oxo(std::size_t i) const {
    std::vector<std::size_t> out;
    for (const auto &n : nbrs_[i])
      if (z(n.atom) == kO && n.order == BondOrder::kDouble && degree(n.atom) == 1)
        out.push_back(n.atom);
    return out;
  }

  bool is_carbonyl_carbon(std::size_t i) const {
    return z(i) == kC && !oxo(i).empty();
  }

 private:
  const MolecularGraph &g_;
  std::vector<std::vector<Neighbor>> nbrs_;
};

using Match = std::vector<std::size_t>;

void carbonyl_rules(const View &v, std::size_t c, std::vector<Match> *out) {
  if (v.z(c) != kC) return;
  const auto oxo = v.oxo(c);
  if (oxo.empty()) return;
  const std::size_t o = oxo.front();
  Match carboxyl{c, o}, ester{c, o}, amide{c, o};
  std::size_t carbons = 0, hetero = 0;
  for (const auto &n : v.nbrs(c)) {
    if (n.atom == o) continue;
    const int z = v.z(n.atom);
    if (z == kC) {
      ++carbons;
      continue;
    }
    ++hetero;
    if (z == kO && n.order == BondOrder::kSingle) {
      if (v.degree(n.atom) == 1) {
        carboxyl.push_back(n.atom);
      } else if (v.degree(n.atom) == 2) {
        for (const auto &m : v.nbrs(n.atom))
          if (m.atom != c && v.z(m.atom) == kC) ester.push_back(n.atom);
      }
    } else if (z == kN &&
               (n.order == BondOrder::kSingle || n.order == BondOrder::kAromatic)) {
      amide.push_back(n.atom);
    }
  }
  if (carboxyl.size() > 2) out[static_cast<int>(GroupKind::kCarboxyl)].push_back(carboxyl);
  if (ester.size() > 2) out[static_cast<int>(GroupKind::kEster)].push_back(ester);
  if (amide.size() > 2) out[static_cast<int>(GroupKind::kAmide)].push_back(amide);
  if (hetero == 0 && carbons == 2)
    out[static_cast<int>(GroupKind::kKetone)].push_back({c, o});
  if (hetero == 0 && carbons <= 1 && v.h(c) >= 1)
    out[static_cast<int>(GroupKind::kAldehyde)].push_back({c, o});
}

bool single_bonds_only(const View &v, std::size_t i) {
  return std::all_of(v.nbrs(i).begin(), v.nbrs(i).end(),
                     [](const Neighbor &n) { return n.order == BondOrder::kSingle; });
}

// Union of overlapping matches, so the result does not depend on atom order.
std::vector<Match> merge_overlapping(std::vector<Match> matches) {
  for (auto &m : matches) {
    std::sort(m.begin(), m.end());
    m.erase(std::unique(m.begin(), m.end()), m.end());
  }
  bool merged = true;
  while (merged) {
    merged = false;
    for (std::size_t i = 0; i < matches.size() && !merged; ++i) {
      for (std::size_t j = i + 1; j < matches.size() && !merged; ++j) {
        Match both;
        std::set_intersection(matches[i].begin(), matches[i].end(),
                              matches[j].begin(), matches[j].end(),
                              std::back_inserter(both));
        if (both.empty()) continue;
        Match u;
        std::set_union(matches[i].begin(), matches[i].end(), matches[j].begin(),
                       matches[j].end(), std::back_inserter(u));
        matches[i] = std::move(u);
        matches.erase(matches.begin() + static_cast<std::ptrdiff_t>(j));
        merged = true;
      }
    }
  }
  std::sort(matches.begin(), matches.end());
  return matches;
}

std::vector<Match> ring_systems(const MolecularGraph &g, bool aromatic) {
  const auto in_ring = g.ring_bonds();
  std::vector<Match> out;
  for (std::size_t e = 0; e < g.bonds.size(); ++e) {
    if (!in_ring[e]) continue;
    if ((g.bonds[e].order == BondOrder::kAromatic) != aromatic) continue;
    out.push_back({g.bonds[e].begin, g.bonds[e].end});
  }
  return out;
}

}  // namespace

std::string_view to_string(GroupKind kind) {
  return kKindNames[static_cast<int>(kind)];
}

std::optional<GroupKind> group_kind_from_string(std::string_view name) {
  for (std::size_t i = 0; i < kGroupKindCount; ++i)
    if (kKindNames[i] == name) return static_cast<GroupKind>(i);
  return std::nullopt;
}

Catalog Catalog::from_json(std::string_view json_text) {
  const auto doc = nlohmann::json::parse(json_text);
  if (!doc.is_array())
    throw std::invalid_argument("motif catalog must be a JSON list of rules");
  Catalog cat;
  for (const auto &rule : doc) {
    const auto name = rule.at("kind").get<std::string>();
    const auto kind = group_kind_from_string(name);
    if (!kind) throw std::invalid_argument("unknown motif kind: " + name);
    cat.enabled[static_cast<int>(*kind)] = rule.value("enabled", true);
    if (rule.contains("elements")) {
      if (*kind != GroupKind::kHalogen)
        throw std::invalid_argument("'elements' applies to the halogen rule only");
      for (const auto &sym : rule["elements"]) {
        const int z = chem::atomic_number(sym.get<std::string>());
        if (z != 9 && z != 17 && z != 35 && z != 53)
          throw std::invalid_argument("not a halogen: " + sym.get<std::string>());
        cat.halogen_elements.push_back(z);
      }
    }
  }
  return cat;
}

std::vector<FunctionalGroup> detect_functional_groups(
    const chem::MolecularGraph &graph, const Catalog &catalog) {
  const View v(graph);
  std::vector<Match> found[kGroupKindCount];
  auto push = [&](GroupKind k, Match m) {
    found[static_cast<int>(k)].push_back(std::move(m));
  };
  std::vector<int> halogens = catalog.halogen_elements;
  if (halogens.empty()) halogens = {9, 17, 35, 53};

  for (std::size_t i = 0; i < graph.size(); ++i) {
    const int z = v.z(i);
    carbonyl_rules(v, i, found);
    if (z == kO && !v.aromatic(i)) {
      if (v.degree(i) == 1 && v.h(i) >= 1 && single_bonds_only(v, i)) {
        const std::size_t c = v.nbrs(i).front().atom;
        if (v.z(c) == kC && !v.is_carbonyl_carbon(c)) push(GroupKind::kHydroxyl, {i});
      }
      if (v.degree(i) == 2 && single_bonds_only(v, i) &&
          v.z(v.nbrs(i)[0].atom) == kC && v.z(v.nbrs(i)[1].atom) == kC)
        push(GroupKind::kEther, {i});
    }
    if (z == kN && !v.aromatic(i) && single_bonds_only(v, i)) {
      bool carbon = false, excluded = false;
      for (const auto &n : v.nbrs(i)) {
        if (v.z(n.atom) == kC) carbon = true;
        if (v.z(n.atom) == kO || v.is_carbonyl_carbon(n.atom) ||
            (v.z(n.atom) == kS && v.oxo(n.atom).size() >= 2))
          excluded = true;
      }
      if (carbon && !excluded) push(GroupKind::kAmine, {i});
    }
    if (z == kN) {
      Match nitro{i};
      for (const auto &n : v.nbrs(i))
        if (v.z(n.atom) == kO && v.degree(n.atom) == 1) nitro.push_back(n.atom);
      if (nitro.size() == 3) push(GroupKind::kNitro, nitro);
    }
    if (z == kC) {
      for (const auto &n : v.nbrs(i))
        if (n.order == BondOrder::kTriple && v.z(n.atom) == kN && v.degree(n.atom) == 1)
          push(GroupKind::kNitrile, {i, n.atom});
    }
    if (z == kS && v.degree(i) == 1 && v.h(i) >= 1 && single_bonds_only(v, i))
      push(GroupKind::kThiol, {i});
    if (std::find(halogens.begin(), halogens.end(), z) != halogens.end() &&
        v.degree(i) >= 1)
      push(GroupKind::kHalogen, {i});
    if (z == kP) {
      Match p{i};
      for (const auto &n : v.nbrs(i))
        if (v.z(n.atom) == kO) p.push_back(n.atom);
      if (p.size() >= 4) push(GroupKind::kPhosphate, p);
    }
    if (z == kS) {
      const auto oxo = v.oxo(i);
      if (oxo.size() >= 2) push(GroupKind::kSulfonyl, {i, oxo[0], oxo[1]});
    }
  }
  for (auto &m : ring_systems(graph, true)) push(GroupKind::kAromaticRing, m);
  for (auto &m : ring_systems(graph, false)) push(GroupKind::kAliphaticRing, m);

  const auto in_ring = graph.ring_atoms();
  std::vector<FunctionalGroup> groups;
  for (std::size_t k = 0; k < kGroupKindCount; ++k) {
    if (!catalog.enabled[k]) continue;
    const auto kind = static_cast<GroupKind>(k);
    const bool ring_kind =
        kind == GroupKind::kAromaticRing || kind == GroupKind::kAliphaticRing;
    for (auto &m : merge_overlapping(std::move(found[k]))) {
      FunctionalGroup g;
      g.kind = kind;
      g.ring_flag = ring_kind || std::any_of(m.begin(), m.end(),
                                             [&](std::size_t a) { return in_ring[a]; });
      g.atom_indices = std::move(m);
      groups.push_back(std::move(g));
    }
  }
  return groups;
}

std::vector<double> vectorize_group(const FunctionalGroup &group,
                                    const chem::MolecularGraph &graph) {
  std::vector<double> out(kMotifDim, 0.0);
  out[static_cast<int>(group.kind)] = 1.0;
  double count = 0.0;
  const auto &x = graph.node_features;
  for (std::size_t a : group.atom_indices) {
    if (a >= graph.size()) throw std::out_of_range("group atom outside graph");
    count += 1.0 + graph.atoms[a].hydrogen_count;
    for (std::size_t j = 0; j < chem::kNodeFeatureDim; ++j)
      out[kGroupKindCount + 2 + j] += x.at(a, j);
  }
  const double inv = 1.0 / static_cast<double>(group.atom_indices.size());
  for (std::size_t j = 0; j < chem::kNodeFeatureDim; ++j)
    out[kGroupKindCount + 2 + j] *= inv;
  out[kGroupKindCount] = count;
  out[kGroupKindCount + 1] = group.ring_flag ? 1.0 : 0.0;
  return out;
}

MotifMatrix motif_matrix(const chem::MolecularGraph &graph,
                         const Catalog &catalog) {
  MotifMatrix mm;
  mm.groups = detect_functional_groups(graph, catalog);
  std::vector<double> data;
  data.reserve(mm.groups.size() * kMotifDim);
  for (const auto &g : mm.groups) {
    const auto row = vectorize_group(g, graph);
    data.insert(data.end(), row.begin(), row.end());
  }
  mm.rows = Tensor({mm.groups.size(), kMotifDim}, std::move(data));
  return mm;
}

}  // namespace molgraph::motif
