//
// SPDX-License-Identifier: Apache-2.0
//

#include "molgraph/projector.h"

#include <cmath>
#include <cstring>
#include <sstream>

namespace molgraph::projector {
namespace {

constexpr std::string_view kFuse = "proj.fuse.";
constexpr std::string_view kBase = "proj.base.";

struct VariantName {
  Variant v;
  std::string_view name;
};

constexpr VariantName kVariants[] = {
    {Variant::kMultiLevel, "mgproj"}, {Variant::kNoMotif, "no-motif"},
    {Variant::kLow, "low"},           {Variant::kHigh, "high"},
    {Variant::kConcat, "concat"},     {Variant::kResampler, "resampler"},
};

void add_attention_block(ParameterStore &store, const std::string &p,
                         std::size_t key_dim, const ProjectorConfig &c, Rng &rng) {
  const std::size_t b = c.tokens, d = c.width;
  const double bd = 1.0 / std::sqrt(double(d));
  store.add(p + "tokens", rng.uniform_tensor({b, d}, 1.0));
  store.add(p + "w_in", rng.uniform_tensor({d, key_dim}, 1.0 / std::sqrt(double(key_dim))));
  if (!c.parameter_free_attention) {
    store.add(p + "wq", rng.uniform_tensor({d, d}, bd));
    store.add(p + "wk", rng.uniform_tensor({d, d}, bd));
    store.add(p + "wv", rng.uniform_tensor({d, d}, bd));
    store.add(p + "wo", rng.uniform_tensor({d, d}, bd));
  }
}

void add_mlp(ParameterStore &store, std::string_view prefix, std::size_t in,
             std::size_t width, Rng &rng) {
  const std::string p(prefix);
  store.add(p + "w1", rng.uniform_tensor({width, in}, 1.0 / std::sqrt(double(in))));
  store.add(p + "b1", Tensor({width}));
  store.add(p + "w2", rng.uniform_tensor({width, width}, 1.0 / std::sqrt(double(width))));
  store.add(p + "b2", Tensor({width}));
}

ag::Var mlp(ag::Tape &tape, std::string_view prefix, const ag::Var &x) {
  const std::string p(prefix);
  auto h = ag::silu(ag::linear(x, tape.param(p + "w1"), tape.param(p + "b1")));
  return ag::linear(h, tape.param(p + "w2"), tape.param(p + "b2"));
}

void check_stack(const encoder::LayerStack &stack, const ProjectorConfig &c) {
  if (stack.levels.size() != c.levels + 1)
    throw LevelCountMismatch("projector configured for " +
                             std::to_string(c.levels + 1) + " levels, stack has " +
                             std::to_string(stack.levels.size()));
  if (stack.levels.front().rows() == 0)
    throw EmptyGraph("cannot project a graph without atoms");
}

GraphTokens finish(ag::Var matrix, const encoder::LayerStack &,
                   const ProjectorConfig &config, std::vector<Tensor> attention) {
  GraphTokens out;
  out.matrix = std::move(matrix);
  out.config_hash = config_hash(config);
  out.attention = std::move(attention);
  return out;
}

}  // namespace

Variant parse_variant(std::string_view name) {
  for (const auto &v : kVariants)
    if (v.name == name) return v.v;
  throw UnknownVariant("unknown projector variant '" + std::string(name) +
                       "' (expected mgproj, no-motif, low, high, concat or resampler)");
}

std::string_view to_string(Variant v) {
  for (const auto &e : kVariants)
    if (e.v == v) return e.name;
  return "mgproj";
}

void ProjectorConfig::validate() const {
  if (tokens < 1) throw std::invalid_argument("projector needs b >= 1 tokens");
  if (width < 1 || input_dim < 1 || hidden_dim < 1 || motif_dim < 1)
    throw std::invalid_argument("projector dimensions must be positive");
  if (levels < 1) throw std::invalid_argument("projector needs L >= 1");
}

std::size_t ProjectorConfig::output_rows(std::size_t nodes) const {
  switch (variant) {
    case Variant::kMultiLevel: return tokens * (levels + 2);
    case Variant::kNoMotif: return tokens * (levels + 1);
    case Variant::kResampler: return tokens;
    default: return nodes;
  }
}

std::string block_prefix(std::size_t level) {
  return "proj.level" + std::to_string(level) + ".";
}

void init_params(ParameterStore &store, const ProjectorConfig &config, Rng &rng) {
  config.validate();
  const std::size_t d = config.width;
  switch (config.variant) {
    case Variant::kMultiLevel:
    case Variant::kNoMotif:
      for (std::size_t l = 0; l <= config.levels; ++l)
        add_attention_block(store, block_prefix(l), config.level_dim(l), config, rng);
      if (config.variant == Variant::kMultiLevel) {
        const std::string p(kMotifBlock);
        add_attention_block(store, p, config.motif_dim, config, rng);
        store.add(p + "null", rng.uniform_tensor({1, config.motif_dim}, 1.0));
      }
      add_mlp(store, kFuse, d, d, rng);
      break;
    case Variant::kLow:
    case Variant::kHigh:
      add_mlp(store, kBase, config.hidden_dim, d, rng);
      break;
    case Variant::kConcat:
      add_mlp(store, kBase, config.input_dim + config.levels * config.hidden_dim, d, rng);
      break;
    case Variant::kResampler:
      add_attention_block(store, block_prefix(config.levels),
                          config.level_dim(config.levels), config, rng);
      break;
  }
}

Pooled attend(ag::Tape &tape, const std::string &prefix, const ag::Var &keys,
              const ProjectorConfig &config) {
  if (keys.rows() == 0) throw EmptyGraph("attention over zero keys");
  const auto x = ag::linear(keys, tape.param(prefix + "w_in"));
  auto q = tape.param(prefix + "tokens");
  ag::Var k = x, v = x;
  if (!config.parameter_free_attention) {
    q = ag::linear(q, tape.param(prefix + "wq"));
    k = ag::linear(x, tape.param(prefix + "wk"));
    v = ag::linear(x, tape.param(prefix + "wv"));
  }
  const auto scores = ag::scale(ag::linear(q, k), 1.0 / std::sqrt(double(config.width)));
  const auto weights = ag::row_softmax(scores);
  auto out = ag::matmul(weights, v);
  if (!config.parameter_free_attention) out = ag::linear(out, tape.param(prefix + "wo"));
  return {out, weights.value()};
}

Pooled level_pool(ag::Tape &tape, std::size_t level, const ag::Var &z,
                  const ProjectorConfig &config) {
  if (z.cols() != config.level_dim(level))
    throw ShapeMismatch("level_pool: level " + std::to_string(level) + " has width " +
                        std::to_string(z.cols()) + ", expected " +
                        std::to_string(config.level_dim(level)));
  return attend(tape, block_prefix(level), z, config);
}

Pooled motif_pool(ag::Tape &tape, const motif::MotifMatrix &motifs,
                  const ProjectorConfig &config) {
  const std::string p(kMotifBlock);
  if (motifs.count() == 0) return attend(tape, p, tape.param(p + "null"), config);
  if (motifs.rows.cols() != config.motif_dim)
    throw ShapeMismatch("motif_pool", motifs.rows.shape(), {0, config.motif_dim});
  return attend(tape, p, ag::Var::constant(motifs.rows), config);
}

GraphTokens project(ag::Tape &tape, const encoder::LayerStack &stack,
                    const motif::MotifMatrix &motifs,
                    const ProjectorConfig &config) {
  if (config.variant != Variant::kMultiLevel && config.variant != Variant::kNoMotif)
    throw UnknownVariant("project() handles mgproj and no-motif; got " +
                         std::string(to_string(config.variant)));
  check_stack(stack, config);
  std::vector<ag::Var> pooled;
  std::vector<Tensor> attention;
  for (std::size_t l = 0; l <= config.levels; ++l) {
    auto r = level_pool(tape, l, stack.levels[l], config);
    pooled.push_back(r.tokens);
    attention.push_back(std::move(r.attention));
  }
  if (config.variant == Variant::kMultiLevel) {
    auto r = motif_pool(tape, motifs, config);
    pooled.push_back(r.tokens);
    attention.push_back(std::move(r.attention));
  }
  auto h = mlp(tape, kFuse, ag::concat_rows(pooled));
  return finish(std::move(h), stack, config, std::move(attention));
}

GraphTokens project_baseline(ag::Tape &tape, const encoder::LayerStack &stack,
                             const ProjectorConfig &config) {
  check_stack(stack, config);
  switch (config.variant) {
    case Variant::kLow:
      return finish(mlp(tape, kBase, stack.levels[1]), stack, config, {});
    case Variant::kHigh:
      return finish(mlp(tape, kBase, stack.levels[config.levels]), stack, config, {});
    case Variant::kConcat:
      return finish(mlp(tape, kBase, ag::concat_cols(stack.levels)), stack, config, {});
    case Variant::kResampler: {
      auto r = level_pool(tape, config.levels, stack.levels[config.levels], config);
      std::vector<Tensor> attention{std::move(r.attention)};
      return finish(std::move(r.tokens), stack, config, std::move(attention));
    }
    default:
      throw UnknownVariant("project_baseline handles low, high, concat and resampler; got " +
                           std::string(to_string(config.variant)));
  }
}

GraphTokens project_any(ag::Tape &tape, const encoder::LayerStack &stack,
                        const motif::MotifMatrix &motifs,
                        const ProjectorConfig &config) {
  if (config.variant == Variant::kMultiLevel || config.variant == Variant::kNoMotif)
    return project(tape, stack, motifs, config);
  return project_baseline(tape, stack, config);
}

namespace {

std::uint64_t fnv1a(const void *data, std::size_t n, std::uint64_t h) {
  const auto *p = static_cast<const unsigned char *>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;

}  // namespace

std::uint64_t config_hash(const ProjectorConfig &c) {
  std::ostringstream os;
  os << "b=" << c.tokens << ";d=" << c.width << ";L=" << c.levels
     << ";in=" << c.input_dim << ";hidden=" << c.hidden_dim
     << ";motif=" << c.motif_dim << ";pfree=" << c.parameter_free_attention
     << ";variant=" << to_string(c.variant);
  const std::string s = os.str();
  return fnv1a(s.data(), s.size(), kFnvOffset);
}

std::uint64_t content_hash(const Tensor &t) {
  std::uint64_t h = kFnvOffset;
  for (auto dim : t.shape()) {
    const std::uint64_t d = dim;
    h = fnv1a(&d, sizeof d, h);
  }
  for (double v : t.data()) h = fnv1a(&v, sizeof v, h);
  return h;
}

}  // namespace molgraph::projector
