//
// SPDX-License-Identifier: Apache-2.0
//

#ifndef MOLGRAPH_MODEL_H_
#define MOLGRAPH_MODEL_H_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "molgraph/chem.h"
#include "molgraph/encoder.h"
#include "molgraph/lm.h"
#include "molgraph/motif.h"
#include "molgraph/projector.h"

namespace molgraph::pipeline {

using json = nlohmann::json;

struct ModelConfig {
  encoder::GinConfig gin;
  projector::ProjectorConfig projector;
  lm::LmConfig lm;
  // Byte alphabet of the tokenizer, in id order.
  std::string alphabet;
  // Highest completed training stage (0, 1 or 2).
  int trained_stage = 0;

  // Makes projector input widths agree with the encoder and sizes the
  // vocabulary from the alphabet.
  void reconcile();
  json to_json() const;
  static ModelConfig from_json(const json &j);
};

// A parsed training or inference example. Responses end with EOS.
struct Example {
  std::string id;
  chem::MolecularGraph graph;
  std::vector<int> smiles_ids;
  std::vector<lm::Turn> turns;
};

// GNN, projector and language model sharing one parameter store. A learned
// map "proj.lm_adapter" bridges the projector width to the model width when
// they differ.
class Model {
 public:
  Model(ModelConfig config, std::uint64_t seed);
  Model(ModelConfig config, ParameterStore params);

  const ModelConfig &config() const { return config_; }
  ModelConfig &mutable_config() { return config_; }
  ParameterStore &params() { return params_; }
  const ParameterStore &params() const { return params_; }
  const lm::Vocabulary &vocabulary() const { return vocab_; }

  projector::GraphTokens graph_tokens(ag::Tape &tape,
                                      const chem::MolecularGraph &graph) const;

  // Throws SmilesError for invalid SMILES.
  Example make_example(const std::string &smiles,
                       const std::vector<std::pair<std::string, std::string>> &turns,
                       std::string id = "") const;

  lm::FusedSequence sequence(ag::Tape &tape, const Example &example) const;
  lm::NllSum nll(ag::Tape &tape, const Example &example) const;
  ag::Var loss(ag::Tape &tape, const Example &example) const;

  std::string generate(const std::string &smiles, const std::string &instruction,
                       std::size_t max_len, const lm::LogitHook &hook = nullptr) const;

 private:
  ModelConfig config_;
  ParameterStore params_;
  lm::Vocabulary vocab_;
};

inline constexpr const char *kLmAdapter = "proj.lm_adapter";

}  // namespace molgraph::pipeline

#endif  // MOLGRAPH_MODEL_H_
