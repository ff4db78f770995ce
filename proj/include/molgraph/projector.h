//
// SPDX-License-Identifier: Apache-2.0
//

#ifndef MOLGRAPH_PROJECTOR_H_
#define MOLGRAPH_PROJECTOR_H_

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "molgraph/autograd.h"
#include "molgraph/encoder.h"
#include "molgraph/motif.h"
#include "molgraph/rng.h"

namespace molgraph::projector {

// kMultiLevel is the full projector; the rest are the ablation set.
enum class Variant {
  kMultiLevel,
  kNoMotif,
  kLow,
  kHigh,
  kConcat,
  kResampler,
};

class UnknownVariant : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class LevelCountMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class EmptyGraph : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

Variant parse_variant(std::string_view name);
std::string_view to_string(Variant v);

struct ProjectorConfig {
  std::size_t tokens = 8;   // b
  std::size_t width = 64;   // d
  std::size_t levels = 5;   // L; the stack holds L + 1 levels
  std::size_t input_dim = chem::kNodeFeatureDim;  // level 0 width
  std::size_t hidden_dim = 64;                    // width of levels 1..L
  std::size_t motif_dim = motif::kMotifDim;
  // Drops the learned Q/K/V/output maps and attends with raw projections.
  bool parameter_free_attention = false;
  Variant variant = Variant::kMultiLevel;

  void validate() const;
  std::size_t level_dim(std::size_t l) const {
    return l == 0 ? input_dim : hidden_dim;
  }
  // Rows of the graph token matrix for a graph with `nodes` atoms.
  std::size_t output_rows(std::size_t nodes) const;
};

// Parameter prefix of attention block `l` (0..L) or the motif block.
std::string block_prefix(std::size_t level);
inline constexpr std::string_view kMotifBlock = "proj.motif.";

// Adds the parameters the configured variant needs under "proj.".
void init_params(ParameterStore &store, const ProjectorConfig &config, Rng &rng);

struct Pooled {
  ag::Var tokens;    // b x d
  Tensor attention;  // b x keys, rows sum to one
};

// Cross-attention of the block's learnable tokens over `keys`:
// softmax(Q K^T / sqrt(d)) V W_o with Q = P W_q, K = X W_in W_k,
// V = X W_in W_v. Keys are accumulated in ascending row order.
Pooled attend(ag::Tape &tape, const std::string &prefix, const ag::Var &keys,
              const ProjectorConfig &config);

Pooled level_pool(ag::Tape &tape, std::size_t level, const ag::Var &z,
                  const ProjectorConfig &config);

// Attends over the motif rows, or over the learned null-motif row when the
// molecule has no functional groups.
Pooled motif_pool(ag::Tape &tape, const motif::MotifMatrix &motifs,
                  const ProjectorConfig &config);

struct GraphTokens {
  ag::Var matrix;
  std::string molecule_id;
  std::uint64_t config_hash = 0;
  // One matrix per attention block, in block order.
  std::vector<Tensor> attention;

  const Tensor &value() const { return matrix.value(); }
};

// Multi-level projection (and the no-motif ablation):
// H = MLP([P^(0); ...; P^(L); P^(motif)]) applied row-wise.
GraphTokens project(ag::Tape &tape, const encoder::LayerStack &stack,
                    const motif::MotifMatrix &motifs,
                    const ProjectorConfig &config);

// Single-source baselines: MLP on level 1 (low), on level L (high), on the
// column concatenation of all levels (concat), or attention over level L
// alone (resampler).
GraphTokens project_baseline(ag::Tape &tape, const encoder::LayerStack &stack,
                             const ProjectorConfig &config);

// Dispatches on config.variant.
GraphTokens project_any(ag::Tape &tape, const encoder::LayerStack &stack,
                        const motif::MotifMatrix &motifs,
                        const ProjectorConfig &config);

std::uint64_t config_hash(const ProjectorConfig &config);
std::uint64_t content_hash(const Tensor &t);

}  // namespace molgraph::projector

#endif  // MOLGRAPH_PROJECTOR_H_
