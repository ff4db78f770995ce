//
// SPDX-License-Identifier: Apache-2.0
//

#include "molgraph/lm.h"

#include <algorithm>
#include <cmath>
#include <limits>

namespace molgraph::lm {
namespace {

using V = Vocabulary;

void append(FusedSequence &seq, SegmentKind kind, std::span<const int> ids,
            bool in_loss) {
  seq.segments.push_back({kind, seq.tokens.size(), ids.size()});
  for (int id : ids) {
    seq.tokens.push_back(id);
    seq.loss_mask.push_back(in_loss);
  }
}

void separator(FusedSequence &seq) {
  seq.tokens.push_back(V::kSep);
  seq.loss_mask.push_back(false);
}

void check_width(const projector::GraphTokens &graph, std::size_t width) {
  if (!graph.matrix.valid())
    throw std::invalid_argument("fuse: graph tokens are missing");
  if (graph.matrix.cols() != width)
    throw WidthMismatch("graph tokens have width " + std::to_string(graph.matrix.cols()) +
                        ", language model expects " + std::to_string(width));
}

ag::Var embed(ag::Tape &tape, const FusedSequence &seq, const LmConfig &config) {
  const auto table = tape.param("lm.tok_emb");
  const std::span<const int> ids(seq.tokens);
  const std::size_t g0 = seq.graph_begin, gn = seq.graph_rows();
  std::vector<ag::Var> parts;
  parts.push_back(ag::gather_rows(table, ids.subspan(0, g0)));
  parts.push_back(seq.graph.matrix);
  if (g0 + gn < ids.size()) parts.push_back(ag::gather_rows(table, ids.subspan(g0 + gn)));
  auto x = ag::concat_rows(parts);
  if (seq.size() > config.max_positions)
    throw std::length_error("sequence of " + std::to_string(seq.size()) +
                            " positions exceeds the limit of " +
                            std::to_string(config.max_positions));
  return ag::add(x, ag::slice_rows(tape.param("lm.pos_emb"), 0, seq.size()));
}

// Residual block without normalization: a frozen decoder must stay steerable
// by the magnitude of graph token rows, which a norm layer would discard.
ag::Var block(ag::Tape &tape, const std::string &p, const ag::Var &x,
              const LmConfig &config) {
  const auto q = adapted_linear(tape, p + "attn.wq", x);
  const auto k = adapted_linear(tape, p + "attn.wk", x);
  const auto v = adapted_linear(tape, p + "attn.wv", x);
  const auto scores = ag::scale(ag::linear(q, k), 1.0 / std::sqrt(double(config.width)));
  const auto attn = adapted_linear(tape, p + "attn.wo",
                                   ag::matmul(ag::row_softmax(scores, true), v));
  const auto h = ag::add(x, attn);
  const auto m = ag::silu(ag::linear(h, tape.param(p + "mlp.w1"), tape.param(p + "mlp.b1")));
  return ag::add(h, ag::linear(m, tape.param(p + "mlp.w2"), tape.param(p + "mlp.b2")));
}

}  // namespace

Vocabulary Vocabulary::build(std::span<const std::string> corpus) {
  bool seen[256] = {};
  for (const auto &s : corpus)
    for (unsigned char c : s) seen[c] = true;
  std::string chars;
  for (int c = 0; c < 256; ++c)
    if (seen[c]) chars.push_back(static_cast<char>(c));
  return from_chars(std::move(chars));
}

Vocabulary Vocabulary::from_chars(std::string chars) {
  Vocabulary v;
  std::fill(std::begin(v.lookup_), std::end(v.lookup_), -1);
  for (std::size_t i = 0; i < chars.size(); ++i) {
    const auto c = static_cast<unsigned char>(chars[i]);
    if (v.lookup_[c] >= 0)
      throw std::invalid_argument("vocabulary alphabet repeats a byte");
    v.lookup_[c] = kFirstChar + static_cast<int>(i);
  }
  v.chars_ = std::move(chars);
  return v;
}

std::vector<int> Vocabulary::tokenize(std::string_view text) const {
  std::vector<int> ids;
  ids.reserve(text.size());
  for (unsigned char c : text) {
    if (lookup_[c] >= 0) {
      ids.push_back(lookup_[c]);
    } else {
      ids.push_back(kByte);
      ids.push_back(kNibble0 + (c >> 4));
      ids.push_back(kNibble0 + (c & 0xF));
    }
  }
  return ids;
}

std::string Vocabulary::detokenize(std::span<const int> ids) const {
  std::string out;
  const auto is_nibble = [](int id) { return id >= kNibble0 && id < kFirstChar; };
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const int id = ids[i];
    if (id >= kFirstChar && static_cast<std::size_t>(id) < size()) {
      out.push_back(chars_[id - kFirstChar]);
    } else if (id == kByte && i + 2 < ids.size() && is_nibble(ids[i + 1]) &&
               is_nibble(ids[i + 2])) {
      out.push_back(static_cast<char>(((ids[i + 1] - kNibble0) << 4) | (ids[i + 2] - kNibble0)));
      i += 2;
    }
  }
  return out;
}

std::size_t FusedSequence::masked_count() const {
  return static_cast<std::size_t>(std::count(loss_mask.begin(), loss_mask.end(), true));
}

void FusedSequence::pad_to(std::size_t length) {
  while (tokens.size() < length) {
    tokens.push_back(V::kPad);
    loss_mask.push_back(false);
  }
}

FusedSequence fuse_prompt(std::span<const int> smiles_ids, projector::GraphTokens graph,
                          std::span<const int> text_ids, std::size_t model_width) {
  check_width(graph, model_width);
  FusedSequence seq;
  seq.tokens.push_back(V::kBos);
  seq.loss_mask.push_back(false);
  append(seq, SegmentKind::kSmiles, smiles_ids, false);
  separator(seq);
  seq.graph_begin = seq.tokens.size();
  const std::vector<int> slots(graph.matrix.rows(), V::kGraphSlot);
  append(seq, SegmentKind::kGraph, slots, false);
  separator(seq);
  append(seq, SegmentKind::kText, text_ids, false);
  seq.graph = std::move(graph);
  return seq;
}

FusedSequence fuse(std::span<const int> smiles_ids, projector::GraphTokens graph,
                   std::span<const int> text_ids, std::span<const int> response_ids,
                   std::size_t model_width) {
  auto seq = fuse_prompt(smiles_ids, std::move(graph), text_ids, model_width);
  separator(seq);
  append(seq, SegmentKind::kResponse, response_ids, true);
  return seq;
}

FusedSequence fuse_turns(std::span<const int> smiles_ids, projector::GraphTokens graph,
                         std::span<const Turn> turns, std::size_t model_width) {
  if (turns.empty()) throw EmptyResponse("fuse_turns: no turns");
  auto seq = fuse(smiles_ids, std::move(graph), turns[0].first, turns[0].second,
                  model_width);
  for (std::size_t t = 1; t < turns.size(); ++t) {
    separator(seq);
    append(seq, SegmentKind::kText, turns[t].first, false);
    separator(seq);
    append(seq, SegmentKind::kResponse, turns[t].second, true);
  }
  return seq;
}

void LmConfig::validate() const {
  if (width < 1 || blocks < 1 || mlp_hidden < 1 || max_positions < 1)
    throw std::invalid_argument("language model dimensions must be positive");
  if (vocab_size <= static_cast<std::size_t>(Vocabulary::kFirstChar) - 1)
    throw std::invalid_argument("language model vocabulary is smaller than the reserved set");
}

std::string block_prefix(std::size_t block) {
  return "lm.block" + std::to_string(block) + ".";
}

void init_params(ParameterStore &store, const LmConfig &config, Rng &rng) {
  config.validate();
  const std::size_t d = config.width, h = config.mlp_hidden;
  const double bd = 1.0 / std::sqrt(double(d)), bh = 1.0 / std::sqrt(double(h));
  store.add("lm.tok_emb", rng.uniform_tensor({config.vocab_size, d}, 1.0));
  store.add("lm.pos_emb", rng.uniform_tensor({config.max_positions, d}, 0.1));
  for (std::size_t i = 0; i < config.blocks; ++i) {
    const std::string p = block_prefix(i);
    for (const char *m : {"attn.wq", "attn.wk", "attn.wv", "attn.wo"})
      store.add(p + m, rng.uniform_tensor({d, d}, bd));
    store.add(p + "mlp.w1", rng.uniform_tensor({h, d}, bd));
    store.add(p + "mlp.b1", Tensor({h}));
    store.add(p + "mlp.w2", rng.uniform_tensor({d, h}, bh));
    store.add(p + "mlp.b2", Tensor({d}));
  }
  store.add("lm.head", rng.uniform_tensor({config.vocab_size, d}, bd));
}

ag::Var adapted_linear(ag::Tape &tape, const std::string &name, const ag::Var &x) {
  auto y = ag::linear(x, tape.param(name));
  const std::string a = name + ".lora_a";
  if (!tape.store().contains(a)) return y;
  const double s = tape.store().value(name + ".lora_scale").item();
  const auto low = ag::linear(ag::linear(x, tape.param(name + ".lora_b")), tape.param(a));
  return ag::add(y, ag::scale(low, s));
}

ag::Var logits(ag::Tape &tape, const FusedSequence &seq, const LmConfig &config) {
  auto x = embed(tape, seq, config);
  for (std::size_t i = 0; i < config.blocks; ++i) x = block(tape, block_prefix(i), x, config);
  return ag::linear(x, tape.param("lm.head"));
}

NllSum nll_sum(ag::Tape &tape, const FusedSequence &seq, const LmConfig &config) {
  std::vector<std::size_t> rows;
  std::vector<int> targets;
  for (std::size_t i = 1; i < seq.size(); ++i) {
    if (!seq.loss_mask[i]) continue;
    rows.push_back(i - 1);
    targets.push_back(seq.tokens[i]);
  }
  if (rows.empty()) throw EmptyResponse("sequence has no response positions");
  const auto z = logits(tape, seq, config);
  return {ag::cross_entropy_sum(z, rows, targets), rows.size()};
}

ag::Var forward_loss(ag::Tape &tape, const FusedSequence &seq, const LmConfig &config) {
  const auto r = nll_sum(tape, seq, config);
  return ag::scale(r.total, 1.0 / static_cast<double>(r.count));
}

std::vector<int> generate(const ParameterStore &store, const FusedSequence &prompt,
                          const LmConfig &config, std::size_t max_len,
                          const LogitHook &hook) {
  FusedSequence seq;
  seq.tokens = prompt.tokens;
  seq.loss_mask.assign(prompt.tokens.size(), false);
  seq.graph_begin = prompt.graph_begin;
  seq.graph.matrix = ag::Var::constant(prompt.graph.value());
  separator(seq);
  std::vector<int> out;
  std::vector<double> row;
  for (std::size_t step = 0; step < max_len && seq.size() < config.max_positions; ++step) {
    ag::Tape tape(store);
    const auto z = logits(tape, seq, config);
    const auto last = z.value().row(z.rows() - 1);
    row.assign(last.begin(), last.end());
    if (hook) hook(step, row);
    int best = 0;
    for (std::size_t j = 1; j < row.size(); ++j)
      if (row[j] > row[best]) best = static_cast<int>(j);
    if (best == V::kEos) break;
    out.push_back(best);
    seq.tokens.push_back(best);
    seq.loss_mask.push_back(false);
  }
  return out;
}

std::vector<std::string> default_lora_targets(const LmConfig &config) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < config.blocks; ++i)
    for (const char *m : {"attn.wq", "attn.wk", "attn.wv", "attn.wo"})
      out.push_back(block_prefix(i) + m);
  return out;
}

void lora_attach(ParameterStore &store, std::span<const std::string> targets,
                 std::size_t rank, double alpha, Rng &rng) {
  if (rank < 1) throw std::invalid_argument("adapter rank must be at least 1");
  for (const auto &t : targets) {
    if (!store.contains(t)) throw TargetNotFound("no parameter named '" + t + "'");
    if (store.value(t).rank() != 2)
      throw TargetNotFound("adapter target '" + t + "' is not a matrix");
    if (store.contains(t + ".lora_a")) throw AlreadyAdapted("'" + t + "' already has an adapter");
  }
  for (const auto &t : targets) {
    const auto &w = store.value(t);
    const std::size_t out = w.rows(), in = w.cols();
    store.set_trainable(t, false);
    store.add(t + ".lora_a", Tensor({out, rank}));
    store.add(t + ".lora_b", rng.uniform_tensor({rank, in}, 1.0 / std::sqrt(double(in))));
    store.add(t + ".lora_scale", Tensor::scalar(alpha / static_cast<double>(rank)), false);
  }
}

std::size_t lora_merge(ParameterStore &store) {
  constexpr std::string_view suffix = ".lora_a";
  std::vector<std::string> bases;
  for (const auto &name : store.names())
    if (name.size() > suffix.size() && name.ends_with(suffix))
      bases.push_back(name.substr(0, name.size() - suffix.size()));
  for (const auto &w : bases) {
    const double s = store.value(w + ".lora_scale").item();
    const auto delta = matmul(store.value(w + ".lora_a"), store.value(w + ".lora_b"));
    Tensor merged = store.value(w);
    auto m = merged.mutable_data();
    const auto dd = delta.data();
    for (std::size_t i = 0; i < m.size(); ++i) m[i] += s * dd[i];
    store.set_value(w, std::move(merged));
    for (const char *sfx : {".lora_a", ".lora_b", ".lora_scale"}) store.remove(w + sfx);
  }
  return bases.size();
}

bool has_adapters(const ParameterStore &store) {
  for (const auto &name : store.names())
    if (name.ends_with(".lora_a")) return true;
  return false;
}

}  // namespace molgraph::lm
