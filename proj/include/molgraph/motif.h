//
// SPDX-License-Identifier: Apache-2.0
//

#ifndef MOLGRAPH_MOTIF_H_
#define MOLGRAPH_MOTIF_H_

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "molgraph/chem.h"
#include "molgraph/tensor.h"

namespace molgraph::motif {

// The compiled-in functional group catalog. Order here fixes both the one-hot
// layout of motif vectors and the output order of detection.
enum class GroupKind : int {
  kCarboxyl,
  kEster,
  kAmide,
  kHydroxyl,
  kAmine,
  kEther,
  kKetone,
  kAldehyde,
  kNitrile,
  kNitro,
  kThiol,
  kHalogen,
  kPhosphate,
  kSulfonyl,
  kAromaticRing,
  kAliphaticRing,
};

inline constexpr std::size_t kGroupKindCount = 16;

std::string_view to_string(GroupKind kind);
std::optional<GroupKind> group_kind_from_string(std::string_view name);

struct FunctionalGroup {
  GroupKind kind;
  std::vector<std::size_t> atom_indices;  // sorted, non-empty
  bool ring_flag = false;
};

// Per-rule switches. halogen_elements restricts which halogens count as
// substituents; empty means F, Cl, Br and I.
struct Catalog {
  std::array<bool, kGroupKindCount> enabled;
  std::vector<int> halogen_elements;

  Catalog() { enabled.fill(true); }
  static Catalog from_json(std::string_view json_text);
};

// Layout: kind one-hot | atom count (members plus their hydrogens) |
// ring flag | mean of member node features.
inline constexpr std::size_t kMotifDim = kGroupKindCount + 2 + chem::kNodeFeatureDim;

std::vector<FunctionalGroup> detect_functional_groups(
    const chem::MolecularGraph &graph, const Catalog &catalog = Catalog());

std::vector<double> vectorize_group(const FunctionalGroup &group,
                                    const chem::MolecularGraph &graph);

struct MotifMatrix {
  Tensor rows;  // M x kMotifDim; M may be zero
  std::vector<FunctionalGroup> groups;

  std::size_t count() const { return groups.size(); }
};

MotifMatrix motif_matrix(const chem::MolecularGraph &graph,
                         const Catalog &catalog = Catalog());

}  // namespace molgraph::motif

#endif  // MOLGRAPH_MOTIF_H_
