//
// SPDX-License-Identifier: Apache-2.0
//

#ifndef MOLGRAPH_CHEM_H_
#define MOLGRAPH_CHEM_H_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "molgraph/tensor.h"

namespace molgraph::chem {

// Elements accepted by the parser: H..Xe (periods 1-5). The organic subset is
// the only part usable outside brackets.
inline constexpr std::size_t kElementCount = 54;

std::string_view element_symbol(int atomic_number);
// Returns 0 when the symbol is not in the supported table.
int atomic_number(std::string_view symbol);

enum class BondOrder : std::uint8_t { kSingle, kDouble, kTriple, kAromatic };

// Bond-order units used for valence bookkeeping (aromatic counts as 1).
int valence_contribution(BondOrder order);

struct Atom {
  int atomic_number = 6;
  int formal_charge = 0;
  bool is_aromatic = false;
  int hydrogen_count = 0;
  std::optional<int> isotope;
  // "@" or "@@" exactly as written; never interpreted.
  std::optional<std::string> chirality_tag;
  bool bracket = false;

  std::string_view symbol() const { return element_symbol(atomic_number); }
};

struct Bond {
  std::size_t begin = 0;
  std::size_t end = 0;
  BondOrder order = BondOrder::kSingle;
  // '/' or '\\' when written with a directional bond symbol, 0 otherwise.
  char stereo_mark = 0;
};

class MolecularGraph {
 public:
  std::vector<Atom> atoms;
  std::vector<Bond> bonds;
  Tensor node_features;
  Tensor edge_features;
  std::string source_smiles;
  std::size_t fragment_count = 0;

  std::size_t size() const { return atoms.size(); }

  // Neighbor lists in ascending atom index order.
  std::vector<std::vector<std::size_t>> adjacency() const;
  std::vector<int> degrees() const;
  // Per bond: true when the bond lies on a cycle (is not a bridge).
  std::vector<bool> ring_bonds() const;
  std::vector<bool> ring_atoms() const;
  std::size_t circuit_rank() const {
    return bonds.size() + fragment_count - atoms.size();
  }
  bool is_multi_fragment() const { return fragment_count > 1; }
  std::optional<std::size_t> find_bond(std::size_t a, std::size_t b) const;
};

enum class SmilesErrorKind {
  kEmptyInput,
  kUnmatchedRingClosure,
  kUnbalancedParenthesis,
  kUnknownElement,
  kSyntax,
};

std::string_view to_string(SmilesErrorKind kind);

class SmilesError : public std::runtime_error {
 public:
  SmilesError(SmilesErrorKind kind, std::size_t offset, const std::string &what);

  SmilesErrorKind kind() const { return kind_; }
  std::size_t offset() const { return offset_; }

 private:
  SmilesErrorKind kind_;
  std::size_t offset_;
};

// Parses the supported SMILES subset. The returned graph is already featurized.
MolecularGraph parse_smiles(std::string_view text);

// Fills node_features and edge_features from atoms and bonds.
void featurize(MolecularGraph &graph);

// True iff parse_smiles succeeds. Never throws.
bool validate(std::string_view text) noexcept;

// Feature schema widths.
// node: element one-hot | degree | formal charge | hydrogen count | aromatic
// edge: single | double | triple | aromatic | in ring
inline constexpr std::size_t kNodeFeatureDim = kElementCount + 4;
inline constexpr std::size_t kEdgeFeatureDim = 5;

// Relabels atoms: atom i of the input becomes atom perm[i] of the output.
// Bonds are rewritten and features recomputed.
MolecularGraph permute_atoms(const MolecularGraph &graph,
                             std::span<const std::size_t> perm);

}  // namespace molgraph::chem

#endif  // MOLGRAPH_CHEM_H_
