//
// SPDX-License-Identifier: Apache-2.0
//

#include "molgraph/training.h"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "molgraph/checkpoint.h"

namespace molgraph::pipeline {
namespace {

constexpr std::string_view kTaskNames[] = {"caption",          "iupac",
                                           "property",         "forward_reaction",
                                           "retrosynthesis",   "conversation"};

TrainingConfig resolved(TrainingConfig c, std::size_t examples) {
  c.validate();
  if (examples == 0) throw std::invalid_argument("training data is empty");
  if (c.total_steps == 0) {
    const std::size_t per_epoch = (examples + c.batch_size - 1) / c.batch_size;
    c.total_steps = std::max<std::size_t>(1, c.epochs * per_epoch);
  }
  return c;
}

TrainResult run(Model &model, const std::vector<Example> &examples,
                const TrainingConfig &config, const StepCallback &on_step) {
  if (model.params().trainable_count() == 0)
    throw NoTrainableParams("every parameter is frozen; nothing to train");
  const TrainingConfig c = resolved(config, examples.size());
  Rng rng(c.seed * 2 + static_cast<std::uint64_t>(c.stage));
  std::vector<std::size_t> order(examples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::size_t cursor = order.size();

  AdamW opt(c);
  TrainResult result;
  for (std::size_t step = 0; step < c.total_steps; ++step) {
    ag::Tape tape(model.params());
    std::vector<ag::Var> totals;
    std::size_t count = 0;
    for (std::size_t k = 0; k < c.batch_size && k < examples.size(); ++k) {
      if (cursor == order.size()) {
        rng.shuffle(order);
        cursor = 0;
      }
      auto r = model.nll(tape, examples[order[cursor++]]);
      totals.push_back(r.total);
      count += r.count;
    }
    auto loss = totals.front();
    for (std::size_t k = 1; k < totals.size(); ++k) loss = ag::add(loss, totals[k]);
    loss = ag::scale(loss, 1.0 / static_cast<double>(count));
    const auto grads = tape.backward(loss);
    const double lr = lr_at(step, c);
    opt.step(model.params(), grads, lr);
    StepLog entry{step, lr, loss.value().item()};
    result.log.push_back(entry);
    if (on_step) on_step(entry);
  }
  result.steps = c.total_steps;
  return result;
}

std::vector<Example> prepare(const Model &model, const std::vector<SampleRecord> &data,
                             bool captions_only) {
  std::vector<Example> out;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (captions_only && data[i].task != Task::kCaption) continue;
    out.push_back(model.make_example(data[i].smiles, data[i].turns, std::to_string(i)));
  }
  if (out.empty())
    throw std::invalid_argument(captions_only ? "no caption records for stage 1"
                                              : "no records for stage 2");
  return out;
}

void freeze_epsilon_if_fixed(Model &model) {
  if (model.config().gin.learn_epsilon) return;
  for (std::size_t l = 1; l <= model.config().gin.layers; ++l)
    model.params().set_trainable(encoder::layer_prefix(l) + "eps", false);
}

double number(const nlohmann::json &j, const char *key, double fallback) {
  return j.contains(key) ? j.at(key).get<double>() : fallback;
}

}  // namespace

TrainingConfig TrainingConfig::defaults(int stage) {
  TrainingConfig c;
  c.stage = stage;
  if (stage == 2) {
    c.lr_init = 5e-5;
    c.lr_min = 5e-6;
    c.lr_warmup_start = 5e-7;
  }
  return c;
}

TrainingConfig TrainingConfig::from_json(const nlohmann::json &j) {
  TrainingConfig c = defaults(j.value("stage", 1));
  c.beta1 = number(j, "beta1", c.beta1);
  c.beta2 = number(j, "beta2", c.beta2);
  c.weight_decay = number(j, "weight_decay", c.weight_decay);
  c.adam_eps = number(j, "adam_eps", c.adam_eps);
  c.lr_init = number(j, "lr_init", c.lr_init);
  c.lr_min = number(j, "lr_min", c.lr_min);
  c.lr_warmup_start = number(j, "lr_warmup_start", c.lr_warmup_start);
  c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
  c.total_steps = j.value("total_steps", c.total_steps);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.seed = j.value("seed", c.seed);
  c.lora_rank = j.value("lora_rank", c.lora_rank);
  c.lora_alpha = number(j, "lora_alpha", c.lora_alpha);
  return c;
}

nlohmann::json TrainingConfig::to_json() const {
  return {{"stage", stage},
          {"beta1", beta1},
          {"beta2", beta2},
          {"weight_decay", weight_decay},
          {"adam_eps", adam_eps},
          {"lr_init", lr_init},
          {"lr_min", lr_min},
          {"lr_warmup_start", lr_warmup_start},
          {"warmup_steps", warmup_steps},
          {"total_steps", total_steps},
          {"epochs", epochs},
          {"batch_size", batch_size},
          {"seed", seed},
          {"lora_rank", lora_rank},
          {"lora_alpha", lora_alpha}};
}

void TrainingConfig::validate() const {
  if (stage != 1 && stage != 2) throw std::invalid_argument("stage must be 1 or 2");
  if (!(lr_warmup_start <= lr_min && lr_min <= lr_init))
    throw std::invalid_argument("learning rates must satisfy warmup start <= min <= init");
  if (batch_size < 1) throw std::invalid_argument("batch size must be at least 1");
  if (lora_rank < 1) throw std::invalid_argument("adapter rank must be at least 1");
  if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1))
    throw std::invalid_argument("Adam betas must lie in [0, 1)");
}

void apply_seed_override(TrainingConfig &config) {
  const char *env = std::getenv("MOLGRAPH_SEED");
  if (env == nullptr || *env == '\0') return;
  char *end = nullptr;
  const unsigned long long v = std::strtoull(env, &end, 10);
  if (*end != '\0') throw std::invalid_argument(std::string("MOLGRAPH_SEED is not an integer: ") + env);
  config.seed = v;
}

double lr_at(std::size_t step, const TrainingConfig &c) {
  if (c.total_steps == 0) throw std::invalid_argument("lr_at needs total_steps > 0");
  const std::size_t ws = c.warmup_steps, last = c.total_steps - 1;
  if (step < ws) {
    return c.lr_warmup_start +
           (c.lr_init - c.lr_warmup_start) * static_cast<double>(step) / static_cast<double>(ws);
  }
  if (step >= last) return c.lr_min;
  if (step == ws) return c.lr_init;
  const double progress = static_cast<double>(step - ws) / static_cast<double>(last - ws);
  return c.lr_min + 0.5 * (c.lr_init - c.lr_min) * (1.0 + std::cos(std::numbers::pi * progress));
}

void AdamW::step(ParameterStore &params, const std::map<std::string, Tensor> &grads,
                 double lr) {
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (const auto &[name, grad] : grads) {
    if (!params.trainable(name)) continue;
    Tensor w = params.value(name);
    auto wd = w.mutable_data();
    const auto g = grad.data();
    auto &m = m_[name];
    auto &v = v_[name];
    if (m.empty()) {
      m.assign(wd.size(), 0.0);
      v.assign(wd.size(), 0.0);
    }
    for (std::size_t i = 0; i < wd.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      const double mhat = m[i] / c1, vhat = v[i] / c2;
      wd[i] -= lr * (mhat / (std::sqrt(vhat) + config_.adam_eps) + config_.weight_decay * wd[i]);
    }
    params.set_value(name, std::move(w));
  }
}

std::string_view to_string(Task task) { return kTaskNames[static_cast<int>(task)]; }

std::optional<Task> task_from_string(std::string_view name) {
  for (std::size_t i = 0; i < std::size(kTaskNames); ++i)
    if (kTaskNames[i] == name) return static_cast<Task>(i);
  return std::nullopt;
}

Dataset parse_dataset(const std::string &jsonl) {
  Dataset ds;
  std::istringstream in(jsonl);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      ds.quarantined.push_back({number, "malformed json"});
      continue;
    }
    SampleRecord r;
    if (!j.contains("smiles") || !j["smiles"].is_string()) {
      ds.quarantined.push_back({number, "missing smiles"});
      continue;
    }
    r.smiles = j["smiles"].get<std::string>();
    if (j.contains("conversation")) {
      r.task = Task::kConversation;
      bool ok = j["conversation"].is_array() && !j["conversation"].empty();
      if (ok) {
        for (const auto &t : j["conversation"]) {
          if (!t.is_object() || !t.contains("question") || !t.contains("answer") ||
              !t["question"].is_string() || !t["answer"].is_string()) {
            ok = false;
            break;
          }
          r.turns.emplace_back(t["question"].get<std::string>(), t["answer"].get<std::string>());
        }
      }
      if (!ok) {
        ds.quarantined.push_back({number, "malformed conversation"});
        continue;
      }
    } else {
      if (!j.contains("instruction") || !j.contains("response") ||
          !j["instruction"].is_string() || !j["response"].is_string()) {
        ds.quarantined.push_back({number, "missing instruction or response"});
        continue;
      }
      const auto task = task_from_string(j.value("task", std::string("caption")));
      if (!task) {
        ds.quarantined.push_back({number, "unknown task"});
        continue;
      }
      r.task = *task;
      r.turns.emplace_back(j["instruction"].get<std::string>(), j["response"].get<std::string>());
    }
    if (!chem::validate(r.smiles)) {
      ds.quarantined.push_back({number, "invalid smiles"});
      continue;
    }
    ds.records.push_back(std::move(r));
  }
  return ds;
}

Dataset load_dataset(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open dataset " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_dataset(ss.str());
}

std::string record_to_json(const SampleRecord &r) {
  nlohmann::json j;
  j["smiles"] = r.smiles;
  if (r.task == Task::kConversation) {
    j["conversation"] = nlohmann::json::array();
    for (const auto &[q, a] : r.turns) j["conversation"].push_back({{"question", q}, {"answer", a}});
  } else {
    j["task"] = std::string(to_string(r.task));
    j["instruction"] = r.turns.empty() ? "" : r.turns[0].first;
    j["response"] = r.turns.empty() ? "" : r.turns[0].second;
  }
  return j.dump();
}

namespace {

std::string random_smiles(Rng &rng) {
  static const char *kHeads[] = {"C", "CC", "N", "O", "c1ccccc1", "C1CCCCC1", "c1ccncc1",
                                 "C1CCOC1", "CC(C)", "S", "OC", "c1ccoc1"};
  static const char *kMiddle[] = {"C", "CC", "C(=O)", "C(=O)O", "C(=O)N", "N", "O",
                                  "c1ccccc1", "C1CCNCC1", "C(Cl)", "C(F)(F)", "C=C", "S"};
  static const char *kTails[] = {"", "", "C#N", "F", "Cl", "Br", "C(=O)O", "N", "O", "C"};
  std::string s = kHeads[rng.below(std::size(kHeads))];
  const std::size_t middles = rng.below(4);
  for (std::size_t i = 0; i < middles; ++i) s += kMiddle[rng.below(std::size(kMiddle))];
  s += kTails[rng.below(std::size(kTails))];
  return s;
}

std::string plural(std::size_t n, const char *word) {
  return std::to_string(n) + " " + word + (n == 1 ? "" : "s");
}

std::string caption_for(const chem::MolecularGraph &g) {
  std::size_t carbons = 0, nitrogens = 0, oxygens = 0, halogens = 0, aromatic = 0;
  for (const auto &a : g.atoms) {
    carbons += a.atomic_number == 6;
    nitrogens += a.atomic_number == 7;
    oxygens += a.atomic_number == 8;
    halogens += a.atomic_number == 9 || a.atomic_number == 17 || a.atomic_number == 35;
    aromatic += a.is_aromatic;
  }
  std::string text = "The molecule has " + plural(carbons, "carbon") + ", " +
                     plural(nitrogens, "nitrogen") + " and " + plural(oxygens, "oxygen") + ".";
  const std::size_t rings = g.circuit_rank();
  text += rings == 0 ? " It is acyclic." : " It has " + plural(rings, "ring") + ".";
  if (aromatic > 0) text += " It is aromatic.";
  if (halogens > 0) text += " It is halogenated.";
  std::set<std::string> kinds;
  for (const auto &grp : motif::detect_functional_groups(g)) {
    std::string k(motif::to_string(grp.kind));
    std::replace(k.begin(), k.end(), '_', ' ');
    kinds.insert(k);
  }
  if (!kinds.empty()) {
    text += " Groups:";
    for (const auto &k : kinds) text += " " + k + ";";
  }
  return text;
}

}  // namespace

std::vector<SampleRecord> synthetic_caption_corpus(std::size_t count, std::uint64_t seed) {
  Rng rng(seed);
  std::set<std::string> seen;
  std::vector<SampleRecord> out;
  for (std::size_t attempt = 0; out.size() < count && attempt < 1000 * (count + 1); ++attempt) {
    const auto smiles = random_smiles(rng);
    if (seen.count(smiles) || !chem::validate(smiles)) continue;
    seen.insert(smiles);
    SampleRecord r;
    r.smiles = smiles;
    r.task = Task::kCaption;
    r.turns.emplace_back("Describe this molecule.", caption_for(chem::parse_smiles(smiles)));
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<std::string> corpus_texts(const std::vector<SampleRecord> &records) {
  std::vector<std::string> out;
  for (const auto &r : records) {
    out.push_back(r.smiles);
    for (const auto &[q, a] : r.turns) {
      out.push_back(q);
      out.push_back(a);
    }
  }
  return out;
}

TrainResult train_stage1(Model &model, const std::vector<SampleRecord> &data,
                         const TrainingConfig &config, const StepCallback &on_step) {
  auto &p = model.params();
  p.set_trainable_prefix("lm.", false);
  p.set_trainable_prefix("gnn.", true);
  p.set_trainable_prefix("proj.", true);
  freeze_epsilon_if_fixed(model);
  const auto examples = prepare(model, data, true);
  auto result = run(model, examples, config, on_step);
  model.mutable_config().trained_stage = std::max(model.config().trained_stage, 1);
  return result;
}

TrainResult train_stage2(Model &model, const std::vector<SampleRecord> &data,
                         const TrainingConfig &config, const StepCallback &on_step) {
  if (model.config().trained_stage < 1)
    throw MissingStage1Checkpoint("stage 2 needs a model that completed stage 1");
  config.validate();
  auto &p = model.params();
  if (!lm::has_adapters(p)) {
    Rng rng(config.seed * 2 + 1000003);
    const auto targets = lm::default_lora_targets(model.config().lm);
    lm::lora_attach(p, targets, config.lora_rank, config.lora_alpha, rng);
  }
  p.set_trainable_prefix("gnn.", false);
  p.set_trainable_prefix("lm.", false);
  p.set_trainable_prefix("proj.", true);
  for (const auto &name : p.names_with_prefix("lm."))
    if (name.ends_with(".lora_a") || name.ends_with(".lora_b")) p.set_trainable(name, true);
  const auto examples = prepare(model, data, false);
  auto result = run(model, examples, config, on_step);
  model.mutable_config().trained_stage = 2;
  return result;
}

double evaluate_loss(const Model &model, const std::vector<SampleRecord> &data) {
  double total = 0.0;
  std::size_t count = 0;
  for (const auto &r : data) {
    const auto ex = model.make_example(r.smiles, r.turns);
    ag::Tape tape(model.params());
    const auto n = model.nll(tape, ex);
    total += n.total.value().item();
    count += n.count;
  }
  if (count == 0) throw std::invalid_argument("evaluate_loss: no response tokens");
  return total / static_cast<double>(count);
}

nlohmann::json checkpoint_config(const Model &model, const TrainingConfig *training) {
  nlohmann::json j{{"model", model.config().to_json()}};
  if (training) j["training"] = training->to_json();
  return j;
}

void save_model(const Model &model, const std::filesystem::path &path,
                const TrainingConfig *training) {
  save_checkpoint(model.params(), checkpoint_config(model, training), path);
}

Model load_model(const std::filesystem::path &path) {
  auto ck = load_checkpoint(path);
  if (!ck.config.contains("model"))
    throw ManifestMismatch("checkpoint " + path.string() + " has no model configuration");
  return Model(ModelConfig::from_json(ck.config.at("model")), std::move(ck.params));
}

}  // namespace molgraph::pipeline
