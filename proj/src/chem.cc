//
// SPDX-License-Identifier: Apache-2.0
//

#include "molgraph/chem.h"

#include <algorithm>
#include <array>
#include <cctype>
#include <functional>
#include <map>
#include <numeric>

namespace molgraph::chem {
namespace {

constexpr std::array<std::string_view, kElementCount> kSymbols = {
    "H",  "He", "Li", "Be", "B",  "C",  "N",  "O",  "F",  "Ne", "Na",
    "Mg", "Al", "Si", "P",  "S",  "Cl", "Ar", "K",  "Ca", "Sc", "Ti",
    "V",  "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn", "Ga", "Ge", "As",
    "Se", "Br", "Kr", "Rb", "Sr", "Y",  "Zr", "Nb", "Mo", "Tc", "Ru",
    "Rh", "Pd", "Ag", "Cd", "In", "Sn", "Sb", "Te", "I",  "Xe"};

// Default valences of the organic subset, ascending.
std::span<const int> organic_valences(int z) {
  static constexpr int kB[] = {3}, kC[] = {4}, kN[] = {3, 5}, kO[] = {2},
                       kP[] = {3, 5}, kS[] = {2, 4, 6}, kHal[] = {1};
  switch (z) {
    case 5: return kB;
    case 6: return kC;
    case 7: return kN;
    case 8: return kO;
    case 15: return kP;
    case 16: return kS;
    case 9: case 17: case 35: case 53: return kHal;
    default: return {};
  }
}

bool aromatic_capable(int z) {
  switch (z) {
    case 5: case 6: case 7: case 8: case 15: case 16: case 33: case 34: case 52:
      return true;
    default:
      return false;
  }
}

struct RingOpening {
  std::size_t atom;
  std::optional<BondOrder> order;
  char stereo;
  std::size_t offset;
};

struct PendingBond {
  BondOrder order = BondOrder::kSingle;
  char stereo = 0;
  std::size_t offset = 0;
};

class Parser {
 public:
  explicit Parser(std::string_view text) : s_(text) { }

  MolecularGraph run() {
    if (s_.empty()) fail(SmilesErrorKind::kEmptyInput, 0, "empty SMILES");
    while (pos_ < s_.size()) step();
    finish();
    MolecularGraph g;
    g.atoms = std::move(atoms_);
    g.bonds = std::move(bonds_);
    g.source_smiles = std::string(s_);
    assign_implicit_hydrogens(g);
    g.fragment_count = count_fragments(g);
    featurize(g);
    return g;
  }

 private:
  [[noreturn]] void fail(SmilesErrorKind kind, std::size_t offset,
                         const std::string &msg) const {
    throw SmilesError(kind, offset, msg);
  }

  void step() {
    const unsigned char c = static_cast<unsigned char>(s_[pos_]);
    if (c >= 0x80)
      fail(SmilesErrorKind::kSyntax, pos_, "non-ASCII byte");
    if (std::isalpha(c) || c == '[' || c == '*') {
      attach(parse_atom());
      return;
    }
    switch (c) {
      case '-': case '=': case '#': case ':': case '/': case '\\':
        parse_bond();
        return;
      case '(':
        if (!prev_ || pending_)
          fail(SmilesErrorKind::kSyntax, pos_, "branch without a preceding atom");
        branches_.push_back({*prev_, pos_});
        ++pos_;
        return;
      case ')':
        if (branches_.empty())
          fail(SmilesErrorKind::kUnbalancedParenthesis, pos_, "unmatched ')'");
        if (pending_) fail(SmilesErrorKind::kSyntax, pos_, "bond before ')'");
        if (!prev_ || *prev_ == branches_.back().first)
          fail(SmilesErrorKind::kSyntax, pos_, "empty branch");
        prev_ = branches_.back().first;
        branches_.pop_back();
        ++pos_;
        return;
      case '.':
        if (!prev_ || pending_)
          fail(SmilesErrorKind::kSyntax, pos_, "misplaced '.'");
        prev_.reset();
        ++pos_;
        return;
      case '%':
        ring_closure(parse_ring_number());
        return;
      default:
        if (std::isdigit(c)) {
          ring_closure(parse_ring_number());
          return;
        }
        fail(SmilesErrorKind::kSyntax, pos_,
             std::string("unexpected character '") + static_cast<char>(c) + "'");
    }
  }

  void parse_bond() {
    if (pending_) fail(SmilesErrorKind::kSyntax, pos_, "two consecutive bonds");
    if (!prev_) fail(SmilesErrorKind::kSyntax, pos_, "bond without a preceding atom");
    PendingBond b;
    b.offset = pos_;
    switch (s_[pos_]) {
      case '=': b.order = BondOrder::kDouble; break;
      case '#': b.order = BondOrder::kTriple; break;
      case ':': b.order = BondOrder::kAromatic; break;
      case '/': case '\\': b.stereo = s_[pos_]; break;
      default: break;
    }
    pending_ = b;
    ++pos_;
  }

  std::pair<int, std::size_t> parse_ring_number() {
    const std::size_t at = pos_;
    if (!prev_) fail(SmilesErrorKind::kSyntax, at, "ring bond without an atom");
    if (s_[pos_] == '%') {
      if (pos_ + 2 >= s_.size() + 0 ||
          !std::isdigit(static_cast<unsigned char>(s_[pos_ + 1])) ||
          !std::isdigit(static_cast<unsigned char>(s_[pos_ + 2])))
        fail(SmilesErrorKind::kSyntax, at, "'%' must be followed by two digits");
      const int n = (s_[pos_ + 1] - '0') * 10 + (s_[pos_ + 2] - '0');
      pos_ += 3;
      return {n, at};
    }
    const int n = s_[pos_] - '0';
    ++pos_;
    return {n, at};
  }

  void ring_closure(std::pair<int, std::size_t> number) {
    const auto [n, at] = number;
    auto it = rings_.find(n);
    std::optional<BondOrder> here;
    char stereo = 0;
    if (pending_) {
      if (pending_->stereo) stereo = pending_->stereo;
      else here = pending_->order;
      pending_.reset();
    }
    if (it == rings_.end()) {
      rings_.emplace(n, RingOpening{*prev_, here, stereo, at});
      return;
    }
    const RingOpening open = it->second;
    rings_.erase(it);
    if (open.atom == *prev_)
      fail(SmilesErrorKind::kSyntax, at, "ring bond from an atom to itself");
    if (here && open.order && *here != *open.order)
      fail(SmilesErrorKind::kSyntax, at, "conflicting ring-bond orders");
    BondOrder order;
    if (here) order = *here;
    else if (open.order) order = *open.order;
    else order = default_order(open.atom, *prev_);
    add_bond(open.atom, *prev_, order, stereo ? stereo : open.stereo, at);
  }

  BondOrder default_order(std::size_t a, std::size_t b) const {
    return atoms_[a].is_aromatic && atoms_[b].is_aromatic ? BondOrder::kAromatic
                                                          : BondOrder::kSingle;
  }

  void add_bond(std::size_t a, std::size_t b, BondOrder order, char stereo,
                std::size_t at) {
    for (const auto &bond : bonds_) {
      if ((bond.begin == a && bond.end == b) || (bond.begin == b && bond.end == a))
        fail(SmilesErrorKind::kSyntax, at, "duplicate bond between two atoms");
    }
    bonds_.push_back(Bond{a, b, order, stereo});
  }

  void attach(std::size_t idx) {
    if (prev_) {
      BondOrder order = default_order(*prev_, idx);
      char stereo = 0;
      std::size_t at = pos_;
      if (pending_) {
        if (pending_->stereo) {
          stereo = pending_->stereo;
          order = BondOrder::kSingle;
        } else {
          order = pending_->order;
        }
        at = pending_->offset;
      }
      add_bond(*prev_, idx, order, stereo, at);
    } else if (pending_) {
      fail(SmilesErrorKind::kSyntax, pending_->offset, "bond without a preceding atom");
    }
    pending_.reset();
    prev_ = idx;
  }

  std::size_t parse_atom() {
    Atom atom;
    const std::size_t start = pos_;
    if (s_[pos_] == '[') {
      parse_bracket(atom);
    } else if (s_[pos_] == '*') {
      fail(SmilesErrorKind::kUnknownElement, pos_, "wildcard atom '*' is not supported");
    } else {
      parse_organic(atom, start);
    }
    atoms_.push_back(std::move(atom));
    return atoms_.size() - 1;
  }

  void parse_organic(Atom &atom, std::size_t start) {
    const char c = s_[pos_];
    const char next = pos_ + 1 < s_.size() ? s_[pos_ + 1] : '\0';
    std::string_view sym;
    if (c == 'C' && next == 'l') sym = "Cl";
    else if (c == 'B' && next == 'r') sym = "Br";
    else sym = s_.substr(pos_, 1);
    bool aromatic = false;
    int z = 0;
    if (sym.size() == 1 && std::islower(static_cast<unsigned char>(sym[0]))) {
      static constexpr std::string_view kAromatic = "bcnops";
      if (kAromatic.find(sym[0]) == std::string_view::npos)
        fail(SmilesErrorKind::kUnknownElement, start,
             "unknown organic-subset atom '" + std::string(sym) + "'");
      const char upper = static_cast<char>(std::toupper(sym[0]));
      z = atomic_number(std::string_view(&upper, 1));
      aromatic = true;
    } else {
      z = atomic_number(sym);
      if (z == 0 || organic_valences(z).empty())
        fail(SmilesErrorKind::kUnknownElement, start,
             "'" + std::string(sym) + "' is not in the organic subset");
    }
    atom.atomic_number = z;
    atom.is_aromatic = aromatic;
    atom.bracket = false;
    pos_ += sym.size();
  }

  int read_int() {
    int v = 0;
    while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) {
      v = v * 10 + (s_[pos_] - '0');
      if (v > 100000) fail(SmilesErrorKind::kSyntax, pos_, "number too large");
      ++pos_;
    }
    return v;
  }

  void parse_bracket(Atom &atom) {
    const std::size_t open = pos_;
    ++pos_;
    auto at_end = [&] {
      if (pos_ >= s_.size())
        fail(SmilesErrorKind::kSyntax, open, "unterminated bracket atom");
    };
    at_end();
    atom.bracket = true;
    if (std::isdigit(static_cast<unsigned char>(s_[pos_]))) {
      const int iso = read_int();
      if (iso <= 0) fail(SmilesErrorKind::kSyntax, open + 1, "isotope must be positive");
      atom.isotope = iso;
      at_end();
    }
    const std::size_t sym_at = pos_;
    const char c = s_[pos_];
    if (std::isupper(static_cast<unsigned char>(c))) {
      int z = 0;
      std::size_t len = 1;
      if (pos_ + 1 < s_.size() && std::islower(static_cast<unsigned char>(s_[pos_ + 1]))) {
        z = atomic_number(s_.substr(pos_, 2));
        if (z) len = 2;
      }
      if (!z) z = atomic_number(s_.substr(pos_, 1));
      if (!z)
        fail(SmilesErrorKind::kUnknownElement, sym_at, "unknown element symbol");
      atom.atomic_number = z;
      pos_ += len;
    } else if (std::islower(static_cast<unsigned char>(c))) {
      std::string two;
      if (pos_ + 1 < s_.size()) two = std::string(s_.substr(pos_, 2));
      std::string sym;
      if (two == "se" || two == "as" || two == "te") sym = two;
      else sym = std::string(1, c);
      sym[0] = static_cast<char>(std::toupper(sym[0]));
      const int z = atomic_number(sym);
      if (!z || !aromatic_capable(z))
        fail(SmilesErrorKind::kUnknownElement, sym_at, "unknown aromatic symbol");
      atom.atomic_number = z;
      atom.is_aromatic = true;
      pos_ += sym.size();
    } else {
      fail(SmilesErrorKind::kUnknownElement, sym_at, "missing element symbol");
    }
    at_end();
    if (s_[pos_] == '@') {
      std::size_t n = 0;
      while (pos_ < s_.size() && s_[pos_] == '@' && n < 2) { ++pos_; ++n; }
      atom.chirality_tag = std::string(n, '@');
      // Extended forms such as @TH1 or @OH12 are accepted and kept verbatim.
      while (pos_ < s_.size() && std::isupper(static_cast<unsigned char>(s_[pos_])) &&
             s_[pos_] != 'H') {
        atom.chirality_tag->push_back(s_[pos_++]);
      }
      while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_])) &&
             atom.chirality_tag->size() > n) {
        atom.chirality_tag->push_back(s_[pos_++]);
      }
      at_end();
    }
    if (s_[pos_] == 'H') {
      ++pos_;
      at_end();
      atom.hydrogen_count =
          std::isdigit(static_cast<unsigned char>(s_[pos_])) ? read_int() : 1;
      at_end();
    }
    if (s_[pos_] == '+' || s_[pos_] == '-') {
      const char sign = s_[pos_];
      ++pos_;
      at_end();
      int magnitude = 1;
      if (std::isdigit(static_cast<unsigned char>(s_[pos_]))) {
        magnitude = read_int();
      } else {
        while (pos_ < s_.size() && s_[pos_] == sign) { ++magnitude; ++pos_; }
      }
      at_end();
      if (magnitude > 4)
        fail(SmilesErrorKind::kSyntax, pos_, "formal charge magnitude above 4");
      atom.formal_charge = sign == '+' ? magnitude : -magnitude;
    }
    if (s_[pos_] == ':') {
      ++pos_;
      read_int();
      at_end();
    }
    if (s_[pos_] != ']')
      fail(SmilesErrorKind::kSyntax, pos_, "expected ']' to close bracket atom");
    ++pos_;
  }

  void finish() {
    if (!branches_.empty())
      fail(SmilesErrorKind::kUnbalancedParenthesis, branches_.back().second,
           "unclosed '('");
    if (!rings_.empty()) {
      std::size_t first = s_.size();
      for (const auto &kv : rings_) first = std::min(first, kv.second.offset);
      fail(SmilesErrorKind::kUnmatchedRingClosure, first, "unclosed ring bond");
    }
    if (pending_)
      fail(SmilesErrorKind::kSyntax, pending_->offset, "dangling bond at end of input");
    if (atoms_.empty()) fail(SmilesErrorKind::kEmptyInput, 0, "no atoms");
  }

  static void assign_implicit_hydrogens(MolecularGraph &g) {
    std::vector<int> order_sum(g.atoms.size(), 0);
    for (const auto &b : g.bonds) {
      order_sum[b.begin] += valence_contribution(b.order);
      order_sum[b.end] += valence_contribution(b.order);
    }
    for (std::size_t i = 0; i < g.atoms.size(); ++i) {
      Atom &a = g.atoms[i];
      if (a.bracket) continue;
      const auto valences = organic_valences(a.atomic_number);
      int h = 0;
      if (a.is_aromatic) {
        // One valence unit goes to the delocalised system; never escalate to a
        // higher valence state for aromatic atoms.
        h = std::max(0, valences.front() - order_sum[i] - 1);
      } else {
        for (int v : valences) {
          if (v >= order_sum[i]) {
            h = v - order_sum[i];
            break;
          }
        }
      }
      a.hydrogen_count = h;
    }
  }

  static std::size_t count_fragments(const MolecularGraph &g) {
    std::vector<std::size_t> parent(g.atoms.size());
    std::iota(parent.begin(), parent.end(), 0);
    std::function<std::size_t(std::size_t)> find = [&](std::size_t x) {
      while (parent[x] != x) x = parent[x] = parent[parent[x]];
      return x;
    };
    std::size_t comps = g.atoms.size();
    for (const auto &b : g.bonds) {
      auto ra = find(b.begin), rb = find(b.end);
      if (ra != rb) {
        parent[std::max(ra, rb)] = std::min(ra, rb);
        --comps;
      }
    }
    return comps;
  }

  std::string_view s_;
  std::size_t pos_ = 0;
  std::vector<Atom> atoms_;
  std::vector<Bond> bonds_;
  std::optional<std::size_t> prev_;
  std::optional<PendingBond> pending_;
  std::vector<std::pair<std::size_t, std::size_t>> branches_;
  std::map<int, RingOpening> rings_;
};

}  // namespace

std::string_view element_symbol(int z) {
  if (z < 1 || z > static_cast<int>(kElementCount)) return "?";
  return kSymbols[z - 1];
}

int atomic_number(std::string_view symbol) {
  for (std::size_t i = 0; i < kSymbols.size(); ++i)
    if (kSymbols[i] == symbol) return static_cast<int>(i) + 1;
  return 0;
}

int valence_contribution(BondOrder order) {
  switch (order) {
    case BondOrder::kDouble: return 2;
    case BondOrder::kTriple: return 3;
    default: return 1;
  }
}

std::string_view to_string(SmilesErrorKind kind) {
  switch (kind) {
    case SmilesErrorKind::kEmptyInput: return "EmptyInput";
    case SmilesErrorKind::kUnmatchedRingClosure: return "UnmatchedRingClosure";
    case SmilesErrorKind::kUnbalancedParenthesis: return "UnbalancedParenthesis";
    case SmilesErrorKind::kUnknownElement: return "UnknownElement";
    case SmilesErrorKind::kSyntax: return "SyntaxError";
  }
  return "SyntaxError";
}

SmilesError::SmilesError(SmilesErrorKind kind, std::size_t offset,
                         const std::string &what)
    : std::runtime_error(std::string(to_string(kind)) + " at offset " +
                         std::to_string(offset) + ": " + what),
      kind_(kind),
      offset_(offset) { }

std::vector<std::vector<std::size_t>> MolecularGraph::adjacency() const {
  std::vector<std::vector<std::size_t>> adj(atoms.size());
  for (const auto &b : bonds) {
    adj[b.begin].push_back(b.end);
    adj[b.end].push_back(b.begin);
  }
  for (auto &n : adj) std::sort(n.begin(), n.end());
  return adj;
}

std::vector<int> MolecularGraph::degrees() const {
  std::vector<int> deg(atoms.size(), 0);
  for (const auto &b : bonds) {
    ++deg[b.begin];
    ++deg[b.end];
  }
  return deg;
}

std::vector<bool> MolecularGraph::ring_bonds() const {
  // Bridges via DFS low-link; every non-bridge bond lies on a cycle.
  const std::size_t n = atoms.size();
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> inc(n);
  for (std::size_t e = 0; e < bonds.size(); ++e) {
    inc[bonds[e].begin].emplace_back(bonds[e].end, e);
    inc[bonds[e].end].emplace_back(bonds[e].begin, e);
  }
  std::vector<int> disc(n, -1), low(n, 0);
  std::vector<bool> in_ring(bonds.size(), true);
  int timer = 0;
  struct Frame {
    std::size_t v;
    std::size_t via;  // bond index used to enter v, or SIZE_MAX
    std::size_t next;
  };
  for (std::size_t root = 0; root < n; ++root) {
    if (disc[root] != -1) continue;
    std::vector<Frame> stack{{root, SIZE_MAX, 0}};
    disc[root] = low[root] = timer++;
    while (!stack.empty()) {
      Frame &f = stack.back();
      if (f.next < inc[f.v].size()) {
        const auto [u, e] = inc[f.v][f.next++];
        if (e == f.via) continue;
        if (disc[u] == -1) {
          disc[u] = low[u] = timer++;
          stack.push_back({u, e, 0});
        } else {
          low[f.v] = std::min(low[f.v], disc[u]);
        }
        continue;
      }
      const Frame done = f;
      stack.pop_back();
      if (!stack.empty()) {
        Frame &parent = stack.back();
        low[parent.v] = std::min(low[parent.v], low[done.v]);
        if (low[done.v] > disc[parent.v]) in_ring[done.via] = false;
      }
    }
  }
  return in_ring;
}

std::vector<bool> MolecularGraph::ring_atoms() const {
  std::vector<bool> out(atoms.size(), false);
  const auto rb = ring_bonds();
  for (std::size_t e = 0; e < bonds.size(); ++e) {
    if (rb[e]) out[bonds[e].begin] = out[bonds[e].end] = true;
  }
  return out;
}

std::optional<std::size_t> MolecularGraph::find_bond(std::size_t a,
                                                     std::size_t b) const {
  for (std::size_t e = 0; e < bonds.size(); ++e) {
    if ((bonds[e].begin == a && bonds[e].end == b) ||
        (bonds[e].begin == b && bonds[e].end == a))
      return e;
  }
  return std::nullopt;
}

MolecularGraph parse_smiles(std::string_view text) { return Parser(text).run(); }

void featurize(MolecularGraph &graph) {
  const std::size_t n = graph.atoms.size();
  const auto deg = graph.degrees();
  std::vector<double> nodes(n * kNodeFeatureDim, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const Atom &a = graph.atoms[i];
    double *row = nodes.data() + i * kNodeFeatureDim;
    row[a.atomic_number - 1] = 1.0;
    row[kElementCount + 0] = deg[i];
    row[kElementCount + 1] = a.formal_charge;
    row[kElementCount + 2] = a.hydrogen_count;
    row[kElementCount + 3] = a.is_aromatic ? 1.0 : 0.0;
  }
  graph.node_features = Tensor({n, kNodeFeatureDim}, std::move(nodes));

  const auto rb = graph.ring_bonds();
  const std::size_t m = graph.bonds.size();
  std::vector<double> edges(m * kEdgeFeatureDim, 0.0);
  for (std::size_t e = 0; e < m; ++e) {
    double *row = edges.data() + e * kEdgeFeatureDim;
    row[static_cast<int>(graph.bonds[e].order)] = 1.0;
    row[4] = rb[e] ? 1.0 : 0.0;
  }
  graph.edge_features = Tensor({m, kEdgeFeatureDim}, std::move(edges));
}

bool validate(std::string_view text) noexcept {
  try {
    parse_smiles(text);
    return true;
  } catch (...) {
    return false;
  }
}

MolecularGraph permute_atoms(const MolecularGraph &graph,
                             std::span<const std::size_t> perm) {
  const std::size_t n = graph.atoms.size();
  if (perm.size() != n)
    throw std::invalid_argument("permutation length does not match atom count");
  std::vector<bool> seen(n, false);
  for (auto p : perm) {
    if (p >= n || seen[p]) throw std::invalid_argument("not a permutation");
    seen[p] = true;
  }
  MolecularGraph out;
  out.atoms.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.atoms[perm[i]] = graph.atoms[i];
  out.bonds = graph.bonds;
  for (auto &b : out.bonds) {
    b.begin = perm[b.begin];
    b.end = perm[b.end];
  }
  out.source_smiles = graph.source_smiles;
  out.fragment_count = graph.fragment_count;
  featurize(out);
  return out;
}

}  // namespace molgraph::chem
