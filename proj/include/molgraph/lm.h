//
// SPDX-License-Identifier: Apache-2.0
//

#ifndef MOLGRAPH_LM_H_
#define MOLGRAPH_LM_H_

#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "molgraph/autograd.h"
#include "molgraph/projector.h"
#include "molgraph/rng.h"

namespace molgraph::lm {

// Character-level vocabulary over bytes seen in a corpus. Any other byte is
// spelled as kByte followed by two nibble tokens, so every input round-trips.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kGraphSlot = 3;
  static constexpr int kSep = 4;
  static constexpr int kByte = 5;
  static constexpr int kNibble0 = 6;
  static constexpr int kFirstChar = kNibble0 + 16;

  Vocabulary() = default;
  static Vocabulary build(std::span<const std::string> corpus);
  // chars: the byte alphabet, in id order.
  static Vocabulary from_chars(std::string chars);

  std::size_t size() const { return kFirstChar + chars_.size(); }
  const std::string &chars() const { return chars_; }
  bool is_reserved(int id) const { return id < kFirstChar; }

  std::vector<int> tokenize(std::string_view text) const;
  // Reserved tokens other than byte escapes are dropped.
  std::string detokenize(std::span<const int> ids) const;

 private:
  std::string chars_;
  int lookup_[256] = {};
};

inline std::vector<int> tokenize(std::string_view text, const Vocabulary &v) {
  return v.tokenize(text);
}
inline std::string detokenize(std::span<const int> ids, const Vocabulary &v) {
  return v.detokenize(ids);
}

enum class SegmentKind { kSmiles, kGraph, kText, kResponse };

struct Segment {
  SegmentKind kind;
  std::size_t begin;
  std::size_t length;
};

class WidthMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class EmptyResponse : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Token layout: BOS smiles SEP graph SEP text SEP response [SEP text SEP
// response ...]. Graph positions hold kGraphSlot and take their embedding
// from the graph token rows.
struct FusedSequence {
  std::vector<int> tokens;
  std::vector<bool> loss_mask;
  std::vector<Segment> segments;
  projector::GraphTokens graph;
  std::size_t graph_begin = 0;

  std::size_t size() const { return tokens.size(); }
  std::size_t graph_rows() const { return graph.matrix.rows(); }
  std::size_t masked_count() const;
  // Appends PAD positions (never in the loss) up to `length`.
  void pad_to(std::size_t length);
};

using Turn = std::pair<std::vector<int>, std::vector<int>>;

// Prompt without a response: BOS smiles SEP graph SEP text.
FusedSequence fuse_prompt(std::span<const int> smiles_ids,
                          projector::GraphTokens graph,
                          std::span<const int> text_ids, std::size_t model_width);

FusedSequence fuse(std::span<const int> smiles_ids, projector::GraphTokens graph,
                   std::span<const int> text_ids,
                   std::span<const int> response_ids, std::size_t model_width);

// Multi-turn form: loss on every response, none on the questions.
FusedSequence fuse_turns(std::span<const int> smiles_ids,
                         projector::GraphTokens graph,
                         std::span<const Turn> turns, std::size_t model_width);

struct LmConfig {
  std::size_t width = 64;
  std::size_t blocks = 2;
  std::size_t mlp_hidden = 128;
  std::size_t max_positions = 512;
  std::size_t vocab_size = 0;

  void validate() const;
};

std::string block_prefix(std::size_t block);

// lm.tok_emb, lm.pos_emb, lm.block{i}.{wq,wk,wv,wo,w1,b1,w2,b2}, lm.head.
void init_params(ParameterStore &store, const LmConfig &config, Rng &rng);

// x W^T through the named base map, plus (alpha / r) (x B^T) A^T when an
// adapter is attached to it.
ag::Var adapted_linear(ag::Tape &tape, const std::string &name, const ag::Var &x);

// Next-token logits for every position (T x vocab).
ag::Var logits(ag::Tape &tape, const FusedSequence &seq, const LmConfig &config);

struct NllSum {
  ag::Var total;
  std::size_t count = 0;
};

// Sum of -log p(y_i | prefix) over masked positions.
NllSum nll_sum(ag::Tape &tape, const FusedSequence &seq, const LmConfig &config);

// Mean negative log-likelihood over the response positions.
ag::Var forward_loss(ag::Tape &tape, const FusedSequence &seq,
                     const LmConfig &config);

// Called on each step's logits row before the argmax.
using LogitHook = std::function<void(std::size_t step, std::span<double> logits)>;

// Greedy decoding after the prompt: appends SEP, then takes the arg max
// (lowest id on ties) until EOS or max_len tokens. EOS is not returned.
std::vector<int> generate(const ParameterStore &store, const FusedSequence &prompt,
                          const LmConfig &config, std::size_t max_len,
                          const LogitHook &hook = nullptr);

class TargetNotFound : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class AlreadyAdapted : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// The attention maps of every block.
std::vector<std::string> default_lora_targets(const LmConfig &config);

// Freezes each target W and adds <W>.lora_a (d_out x r, zeros),
// <W>.lora_b (r x d_in, random) and a frozen <W>.lora_scale = alpha / r.
void lora_attach(ParameterStore &store, std::span<const std::string> targets,
                 std::size_t rank, double alpha, Rng &rng);

// Folds W <- W + (alpha / r) A B into every adapted map and removes the
// adapter entries. Returns the number of merged maps.
std::size_t lora_merge(ParameterStore &store);

bool has_adapters(const ParameterStore &store);

}  // namespace molgraph::lm

#endif  // MOLGRAPH_LM_H_
