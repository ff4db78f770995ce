//
// SPDX-License-Identifier: Apache-2.0
//

#include "molgraph/model.h"

#include <cmath>

namespace molgraph::pipeline {

void ModelConfig::reconcile() {
  projector.levels = gin.layers;
  projector.input_dim = gin.input_dim;
  projector.hidden_dim = gin.hidden_dim;
  lm.vocab_size = lm::Vocabulary::kFirstChar + alphabet.size();
}

json ModelConfig::to_json() const {
  std::vector<int> bytes;
  for (unsigned char c : alphabet) bytes.push_back(c);
  return json{
      {"gin",
       {{"layers", gin.layers},
        {"hidden_dim", gin.hidden_dim},
        {"input_dim", gin.input_dim},
        {"learn_epsilon", gin.learn_epsilon},
        {"use_edge_features", gin.use_edge_features}}},
      {"projector",
       {{"tokens", projector.tokens},
        {"width", projector.width},
        {"levels", projector.levels},
        {"input_dim", projector.input_dim},
        {"hidden_dim", projector.hidden_dim},
        {"motif_dim", projector.motif_dim},
        {"parameter_free_attention", projector.parameter_free_attention},
        {"variant", std::string(projector::to_string(projector.variant))}}},
      {"lm",
       {{"width", lm.width},
        {"blocks", lm.blocks},
        {"mlp_hidden", lm.mlp_hidden},
        {"max_positions", lm.max_positions},
        {"vocab_size", lm.vocab_size}}},
      {"alphabet", bytes},
      {"trained_stage", trained_stage},
  };
}

ModelConfig ModelConfig::from_json(const json &j) {
  ModelConfig c;
  if (j.contains("gin")) {
    const auto &g = j.at("gin");
    c.gin.layers = g.value("layers", c.gin.layers);
    c.gin.hidden_dim = g.value("hidden_dim", c.gin.hidden_dim);
    c.gin.input_dim = g.value("input_dim", c.gin.input_dim);
    c.gin.learn_epsilon = g.value("learn_epsilon", c.gin.learn_epsilon);
    c.gin.use_edge_features = g.value("use_edge_features", c.gin.use_edge_features);
  }
  if (j.contains("projector")) {
    const auto &p = j.at("projector");
    c.projector.tokens = p.value("tokens", c.projector.tokens);
    c.projector.width = p.value("width", c.projector.width);
    c.projector.motif_dim = p.value("motif_dim", c.projector.motif_dim);
    c.projector.parameter_free_attention =
        p.value("parameter_free_attention", c.projector.parameter_free_attention);
    c.projector.variant = projector::parse_variant(p.value("variant", std::string("mgproj")));
  }
  if (j.contains("lm")) {
    const auto &l = j.at("lm");
    c.lm.width = l.value("width", c.lm.width);
    c.lm.blocks = l.value("blocks", c.lm.blocks);
    c.lm.mlp_hidden = l.value("mlp_hidden", c.lm.mlp_hidden);
    c.lm.max_positions = l.value("max_positions", c.lm.max_positions);
  }
  for (int b : j.value("alphabet", std::vector<int>{}))
    c.alphabet.push_back(static_cast<char>(static_cast<unsigned char>(b)));
  c.trained_stage = j.value("trained_stage", 0);
  c.reconcile();
  return c;
}

Model::Model(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.reconcile();
  vocab_ = lm::Vocabulary::from_chars(config_.alphabet);
  Rng rng(seed);
  encoder::init_params(params_, config_.gin, rng);
  projector::init_params(params_, config_.projector, rng);
  lm::init_params(params_, config_.lm, rng);
  if (config_.projector.width != config_.lm.width) {
    params_.add(kLmAdapter,
                rng.uniform_tensor({config_.lm.width, config_.projector.width},
                                   1.0 / std::sqrt(double(config_.projector.width))));
  }
}

Model::Model(ModelConfig config, ParameterStore params)
    : config_(std::move(config)), params_(std::move(params)) {
  config_.reconcile();
  vocab_ = lm::Vocabulary::from_chars(config_.alphabet);
}

projector::GraphTokens Model::graph_tokens(ag::Tape &tape,
                                           const chem::MolecularGraph &graph) const {
  const auto stack = encoder::encode(tape, graph, config_.gin);
  motif::MotifMatrix motifs;
  if (config_.projector.variant == projector::Variant::kMultiLevel)
    motifs = motif::motif_matrix(graph);
  auto tokens = projector::project_any(tape, stack, motifs, config_.projector);
  if (params_.contains(kLmAdapter))
    tokens.matrix = ag::linear(tokens.matrix, tape.param(kLmAdapter));
  tokens.molecule_id = graph.source_smiles;
  return tokens;
}

Example Model::make_example(const std::string &smiles,
                            const std::vector<std::pair<std::string, std::string>> &turns,
                            std::string id) const {
  Example ex;
  ex.id = std::move(id);
  ex.graph = chem::parse_smiles(smiles);
  ex.smiles_ids = vocab_.tokenize(smiles);
  for (const auto &[question, answer] : turns) {
    auto response = vocab_.tokenize(answer);
    response.push_back(lm::Vocabulary::kEos);
    ex.turns.emplace_back(vocab_.tokenize(question), std::move(response));
  }
  return ex;
}

lm::FusedSequence Model::sequence(ag::Tape &tape, const Example &example) const {
  return lm::fuse_turns(example.smiles_ids, graph_tokens(tape, example.graph), example.turns,
                        config_.lm.width);
}

lm::NllSum Model::nll(ag::Tape &tape, const Example &example) const {
  return lm::nll_sum(tape, sequence(tape, example), config_.lm);
}

ag::Var Model::loss(ag::Tape &tape, const Example &example) const {
  return lm::forward_loss(tape, sequence(tape, example), config_.lm);
}

std::string Model::generate(const std::string &smiles, const std::string &instruction,
                            std::size_t max_len, const lm::LogitHook &hook) const {
  const auto graph = chem::parse_smiles(smiles);
  ag::Tape tape(params_);
  const auto prompt = lm::fuse_prompt(vocab_.tokenize(smiles), graph_tokens(tape, graph),
                                      vocab_.tokenize(instruction), config_.lm.width);
  const auto ids = lm::generate(params_, prompt, config_.lm, max_len, hook);
  return vocab_.detokenize(ids);
}

}  // namespace molgraph::pipeline
