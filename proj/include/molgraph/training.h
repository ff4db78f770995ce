//
// SPDX-License-Identifier: Apache-2.0
//

#ifndef MOLGRAPH_TRAINING_H_
#define MOLGRAPH_TRAINING_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "molgraph/model.h"

namespace molgraph::pipeline {

class NoTrainableParams : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class MissingStage1Checkpoint : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

struct TrainingConfig {
  int stage = 1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 0.01;
  double adam_eps = 1e-8;
  double lr_init = 1e-4;
  double lr_min = 1e-5;
  double lr_warmup_start = 1e-6;
  std::size_t warmup_steps = 1000;
  // Optimizer steps in the schedule; 0 derives it from epochs and batch size.
  std::size_t total_steps = 0;
  std::size_t epochs = 1;
  std::size_t batch_size = 4;
  std::uint64_t seed = 0;
  std::size_t lora_rank = 8;
  double lora_alpha = 16.0;

  // Stage defaults: 1e-4 / 1e-5 / 1e-6 and 5e-5 / 5e-6 / 5e-7.
  static TrainingConfig defaults(int stage);
  // Missing keys keep the stage defaults.
  static TrainingConfig from_json(const nlohmann::json &j);
  nlohmann::json to_json() const;
  void validate() const;
};

// Reads MOLGRAPH_SEED when set.
void apply_seed_override(TrainingConfig &config);

// Linear warmup from lr_warmup_start to lr_init over warmup_steps, then a
// cosine from lr_init down to lr_min that lands exactly on lr_min at the last
// step (total_steps - 1) and stays there.
double lr_at(std::size_t step, const TrainingConfig &config);

// Decoupled weight decay Adam. Moments exist only for parameters that have
// received a gradient, so frozen entries never get state.
class AdamW {
 public:
  explicit AdamW(const TrainingConfig &config) : config_(config) { }

  void step(ParameterStore &params, const std::map<std::string, Tensor> &grads,
            double lr);
  bool has_state(const std::string &name) const { return m_.count(name) != 0; }
  std::size_t state_count() const { return m_.size(); }
  std::size_t steps() const { return t_; }

 private:
  TrainingConfig config_;
  std::map<std::string, std::vector<double>> m_, v_;
  std::size_t t_ = 0;
};

enum class Task { kCaption, kIupac, kProperty, kForwardReaction, kRetrosynthesis, kConversation };

std::string_view to_string(Task task);
std::optional<Task> task_from_string(std::string_view name);

struct SampleRecord {
  std::string smiles;
  Task task = Task::kCaption;
  // One pair for single-turn tasks; several for conversations.
  std::vector<std::pair<std::string, std::string>> turns;
};

struct Quarantined {
  std::size_t line = 0;
  std::string reason;
};

struct Dataset {
  std::vector<SampleRecord> records;
  std::vector<Quarantined> quarantined;
};

// One JSON object per line: {"smiles","instruction","response","task"} or
// {"smiles","caption","iupac","conversation":[{"question","answer"},...]}.
// Lines with an invalid SMILES or a malformed object are quarantined.
Dataset parse_dataset(const std::string &jsonl);
Dataset load_dataset(const std::filesystem::path &path);
std::string record_to_json(const SampleRecord &record);

// Deterministic caption corpus: every caption is a function of the molecule
// (atom counts, rings, groups), so graph information can lower the loss.
std::vector<SampleRecord> synthetic_caption_corpus(std::size_t count, std::uint64_t seed);
// Every text of the dataset, for building a tokenizer alphabet.
std::vector<std::string> corpus_texts(const std::vector<SampleRecord> &records);

struct StepLog {
  std::size_t step = 0;
  double lr = 0.0;
  double loss = 0.0;
};

struct TrainResult {
  std::vector<StepLog> log;
  std::size_t steps = 0;
};

using StepCallback = std::function<void(const StepLog &)>;

// Freezes lm.*, trains gnn.* and proj.* on the caption records.
TrainResult train_stage1(Model &model, const std::vector<SampleRecord> &data,
                         const TrainingConfig &config, const StepCallback &on_step = nullptr);

// Needs a completed stage 1. Freezes gnn.* and the base LM, attaches fresh
// adapters when none exist, and trains proj.* plus the adapters on every
// record.
TrainResult train_stage2(Model &model, const std::vector<SampleRecord> &data,
                         const TrainingConfig &config, const StepCallback &on_step = nullptr);

// Mean response NLL over the records, without training.
double evaluate_loss(const Model &model, const std::vector<SampleRecord> &data);

nlohmann::json checkpoint_config(const Model &model, const TrainingConfig *training = nullptr);
void save_model(const Model &model, const std::filesystem::path &path,
                const TrainingConfig *training = nullptr);
Model load_model(const std::filesystem::path &path);

}  // namespace molgraph::pipeline

#endif  // MOLGRAPH_TRAINING_H_
