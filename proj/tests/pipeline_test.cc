//
// SPDX-License-Identifier: Apache-2.0
//

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <unistd.h>

#include "molgraph/checkpoint.h"
#include "molgraph/instructgen.h"
#include "molgraph/training.h"
#include "oracles.h"

namespace molgraph::pipeline {
namespace {

namespace fs = std::filesystem;

std::string small_alphabet() {
  std::string s = "\n";
  for (char c = 0x20; c < 0x7F; ++c) s.push_back(c);
  return s;
}

ModelConfig small_config() {
  ModelConfig c;
  c.gin.layers = 2;
  c.gin.hidden_dim = 8;
  c.projector.tokens = 2;
  c.projector.width = 8;
  c.projector.levels = 2;
  c.lm.width = 8;
  c.lm.mlp_hidden = 16;
  c.lm.max_positions = 640;
  c.alphabet = small_alphabet();
  c.reconcile();
  return c;
}

TrainingConfig quick(int stage, std::size_t steps = 4) {
  auto c = TrainingConfig::defaults(stage);
  c.total_steps = steps;
  c.warmup_steps = 1;
  c.lr_init = 1e-2;
  c.lr_min = 1e-3;
  c.lr_warmup_start = 1e-3;
  c.batch_size = 2;
  c.seed = 4;
  c.lora_rank = 2;
  return c;
}

ParameterStore with_prefix(const ParameterStore &s, const std::string &prefix) {
  ParameterStore out;
  for (const auto &[name, e] : s.entries())
    if (name.starts_with(prefix)) out.add(name, e.value, e.trainable);
  return out;
}

fs::path temp_file(const std::string &name) {
  return fs::temp_directory_path() / ("molgraph_" + std::to_string(::getpid()) + "_" + name);
}

std::string read_file(const fs::path &p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

std::string raw_checkpoint(const nlohmann::json &manifest, std::size_t payload) {
  const std::string m = manifest.dump();
  std::string out = "LLAMO1";
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((m.size() >> (8 * i)) & 0xFF));
  return out + m + std::string(payload, '\0');
}

TEST(Schedule, StageOneConstants) {
  auto c = TrainingConfig::defaults(1);
  c.total_steps = 5000;
  EXPECT_EQ(lr_at(0, c), 1e-6);
  EXPECT_EQ(lr_at(1000, c), 1e-4);
  EXPECT_EQ(lr_at(4999, c), 1e-5);
  EXPECT_EQ(lr_at(10000, c), 1e-5);
}

TEST(Schedule, StageTwoConstants) {
  auto c = TrainingConfig::defaults(2);
  c.total_steps = 3000;
  EXPECT_EQ(lr_at(0, c), 5e-7);
  EXPECT_EQ(lr_at(1000, c), 5e-5);
  EXPECT_EQ(lr_at(2999, c), 5e-6);
}

TEST(Schedule, ContinuousAndMonotoneAfterWarmup) {
  auto c = TrainingConfig::defaults(1);
  c.total_steps = 2500;
  EXPECT_EQ(std::abs(lr_at(c.warmup_steps, c) - c.lr_init), 0.0);
  for (std::size_t s = 0; s + 1 < c.warmup_steps; ++s) EXPECT_LT(lr_at(s, c), lr_at(s + 1, c));
  for (std::size_t s = c.warmup_steps; s + 1 < 2600; ++s) EXPECT_GE(lr_at(s, c), lr_at(s + 1, c));
  c.total_steps = 0;
  EXPECT_THROW(lr_at(0, c), std::invalid_argument);
}

TEST(AdamW, FrozenEntriesNeverGetState) {
  ParameterStore p;
  p.add("a", Tensor({2}, {1, 2}));
  p.add("b", Tensor({2}, {3, 4}), false);
  const auto frozen = p.value("b");
  AdamW opt(TrainingConfig{});
  std::map<std::string, Tensor> grads{{"a", Tensor({2}, {1, 1})}, {"b", Tensor({2}, {1, 1})}};
  opt.step(p, grads, 0.1);
  EXPECT_TRUE(opt.has_state("a"));
  EXPECT_FALSE(opt.has_state("b"));
  EXPECT_EQ(opt.state_count(), 1u);
  EXPECT_TRUE(p.value("b").bit_equal(frozen));
  // First Adam step moves each weight by about lr in the gradient's direction.
  EXPECT_NEAR(p.value("a").data()[0], 1.0 - 0.1 * (1.0 + 0.01), 1e-6);
}

TEST(TrainingConfig, JsonRoundTripAndDefaults) {
  auto c = TrainingConfig::defaults(2);
  EXPECT_EQ(c.lr_init, 5e-5);
  c.seed = 99;
  c.batch_size = 3;
  const auto back = TrainingConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
  const auto partial = TrainingConfig::from_json({{"stage", 2}, {"batch_size", 7}});
  EXPECT_EQ(partial.lr_min, 5e-6);
  EXPECT_EQ(partial.batch_size, 7u);
}

TEST(TrainingConfig, SeedOverride) {
  TrainingConfig c;
  setenv("MOLGRAPH_SEED", "1234", 1);
  apply_seed_override(c);
  EXPECT_EQ(c.seed, 1234u);
  setenv("MOLGRAPH_SEED", "12x", 1);
  EXPECT_THROW(apply_seed_override(c), std::invalid_argument);
  unsetenv("MOLGRAPH_SEED");
  c.seed = 5;
  apply_seed_override(c);
  EXPECT_EQ(c.seed, 5u);
}

TEST(Dataset, QuarantinesBadLines) {
  const std::string jsonl =
      "{\"smiles\":\"CCO\",\"instruction\":\"Describe.\",\"response\":\"Ethanol.\"}\n"
      "not json\n"
      "{\"instruction\":\"x\",\"response\":\"y\"}\n"
      "{\"smiles\":\"C1CC\",\"instruction\":\"x\",\"response\":\"y\"}\n"
      "{\"smiles\":\"CC\",\"instruction\":\"x\",\"response\":\"y\",\"task\":\"poetry\"}\n"
      "{\"smiles\":\"CC\",\"conversation\":[{\"question\":\"q\"}]}\n"
      "{\"smiles\":\"CC\",\"instruction\":\"x\"}\n"
      "\n"
      "{\"smiles\":\"CC\",\"conversation\":[{\"question\":\"q\",\"answer\":\"a\"}]}\n";
  const auto ds = parse_dataset(jsonl);
  ASSERT_EQ(ds.records.size(), 2u);
  EXPECT_EQ(ds.records[1].task, Task::kConversation);
  std::vector<std::string> reasons;
  for (const auto &q : ds.quarantined) reasons.push_back(q.reason);
  EXPECT_EQ(reasons, (std::vector<std::string>{"malformed json", "missing smiles", "invalid smiles",
                                               "unknown task", "malformed conversation",
                                               "missing instruction or response"}));
  EXPECT_EQ(ds.quarantined[0].line, 2u);
  for (const auto &r : ds.records) EXPECT_EQ(parse_dataset(record_to_json(r)).records.size(), 1u);
}

TEST(Dataset, SyntheticCorpusIsSeededAndValid) {
  const auto a = synthetic_caption_corpus(30, 7), b = synthetic_caption_corpus(30, 7);
  ASSERT_EQ(a.size(), 30u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(record_to_json(a[i]), record_to_json(b[i]));
    EXPECT_TRUE(chem::validate(a[i].smiles)) << a[i].smiles;
    EXPECT_EQ(a[i].task, Task::kCaption);
  }
  EXPECT_NE(record_to_json(synthetic_caption_corpus(1, 8)[0]), record_to_json(a[0]));
}

TEST(Model, ConfigJsonRoundTrip) {
  auto c = small_config();
  c.trained_stage = 1;
  EXPECT_EQ(ModelConfig::from_json(c.to_json()).to_json(), c.to_json());
  EXPECT_EQ(c.lm.vocab_size, 22 + c.alphabet.size());
}

TEST(Model, AdapterBridgesWidths) {
  auto c = small_config();
  c.lm.width = 12;
  const Model m(c, 1);
  EXPECT_EQ(m.params().value(kLmAdapter).shape(), (Shape{12, 8}));
  const auto ex = m.make_example("CCO", {{"Describe.", "Ethanol."}});
  ag::Tape tape(m.params());
  EXPECT_TRUE(std::isfinite(m.loss(tape, ex).value().item()));
}

TEST(Model, MultiTurnMaskAudit) {
  const Model m(small_config(), 1);
  const auto conv = instructgen::parse_conversation(oracle::kPolyeneResponse);
  std::vector<std::pair<std::string, std::string>> turns;
  std::size_t answer_tokens = 0;
  for (const auto &t : conv.turns) {
    turns.emplace_back(t.question, t.answer);
    answer_tokens += m.vocabulary().tokenize(t.answer).size() + 1;  // plus EOS
  }
  ASSERT_EQ(turns.size(), 2u);
  const auto ex = m.make_example(oracle::kPolyeneSmiles, turns);
  ag::Tape tape(m.params());
  const auto seq = m.sequence(tape, ex);
  EXPECT_EQ(seq.masked_count(), answer_tokens);
  std::size_t responses = 0, questions = 0;
  for (const auto &seg : seq.segments) {
    const bool answer = seg.kind == lm::SegmentKind::kResponse;
    responses += answer;
    questions += seg.kind == lm::SegmentKind::kText;
    for (std::size_t i = seg.begin; i < seg.begin + seg.length; ++i)
      EXPECT_EQ(seq.loss_mask[i], answer);
  }
  EXPECT_EQ(responses, 2u);
  EXPECT_EQ(questions, 2u);
  EXPECT_EQ(m.nll(tape, ex).count, answer_tokens);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  Model m(small_config(), 3);
  const auto path = temp_file("rt.ckpt"), again = temp_file("rt2.ckpt");
  save_model(m, path);
  const Model back = load_model(path);
  EXPECT_TRUE(back.params().bit_equal(m.params()));
  EXPECT_TRUE(m.params().bit_equal(back.params()));
  for (const auto &[name, e] : m.params().entries())
    EXPECT_EQ(back.params().trainable(name), e.trainable);
  EXPECT_EQ(back.config().to_json(), m.config().to_json());
  save_model(back, again);
  EXPECT_EQ(read_file(path), read_file(again));
  fs::remove(path);
  fs::remove(again);
}

TEST(Checkpoint, SinglePrecisionOption) {
  ParameterStore p;
  p.add("w", Tensor({3}, {0.5, 1.0 / 3.0, -2.0}));
  const auto ck = parse_checkpoint(serialize_checkpoint(p, {}, Dtype::kF32));
  EXPECT_EQ(ck.params.value("w").data()[0], 0.5);
  EXPECT_NEAR(ck.params.value("w").data()[1], 1.0 / 3.0, 1e-7);
  EXPECT_LT(serialize_checkpoint(p, {}, Dtype::kF32).size(), serialize_checkpoint(p, {}).size());
}

TEST(Checkpoint, Errors) {
  ParameterStore p;
  p.add("w", Tensor({2}, {1, 2}));
  const auto good = serialize_checkpoint(p, {{"k", 1}});
  EXPECT_THROW(parse_checkpoint("NOTACKPT" + good), BadMagic);
  EXPECT_THROW(parse_checkpoint("LLAMO1\x05"), TruncatedPayload);
  EXPECT_THROW(parse_checkpoint(good.substr(0, good.size() - 3)), TruncatedPayload);
  EXPECT_THROW(parse_checkpoint(good + "x"), ManifestMismatch);
  const nlohmann::json tensor{{"name", "w"}, {"shape", {3}}, {"dtype", "f64"}, {"offset", 0},
                              {"trainable", true}};
  nlohmann::json manifest{{"config", {}}, {"tensors", {tensor}}, {"payload_bytes", 16}};
  EXPECT_THROW(parse_checkpoint(raw_checkpoint(manifest, 16)), ManifestMismatch);
  manifest["payload_bytes"] = 32;
  EXPECT_THROW(parse_checkpoint(raw_checkpoint(manifest, 32)), ManifestMismatch);
  manifest["payload_bytes"] = 24;
  EXPECT_NO_THROW(parse_checkpoint(raw_checkpoint(manifest, 24)));
  EXPECT_THROW(parse_checkpoint(raw_checkpoint(manifest, 20)), TruncatedPayload);
  EXPECT_THROW(load_model(temp_file("missing.ckpt")), std::exception);
}

TEST(Stage1, FreezesTheLanguageModel) {
  Model m(small_config(), 2);
  const auto data = synthetic_caption_corpus(6, 1);
  const auto lm_before = with_prefix(m.params(), "lm.");
  const auto gnn_before = with_prefix(m.params(), "gnn.");
  const auto r = train_stage1(m, data, quick(1));
  EXPECT_EQ(r.steps, 4u);
  EXPECT_EQ(r.log.size(), 4u);
  EXPECT_TRUE(lm_before.bit_equal(m.params()));
  EXPECT_FALSE(gnn_before.bit_equal(m.params(), "gnn.layer1.w1"));
  EXPECT_EQ(m.config().trained_stage, 1);
}

TEST(Stage1, FixedEpsilonStaysFrozen) {
  auto c = small_config();
  c.gin.learn_epsilon = false;
  Model m(c, 2);
  train_stage1(m, synthetic_caption_corpus(4, 1), quick(1, 2));
  EXPECT_EQ(m.params().value("gnn.layer1.eps").data()[0], 0.0);
}

TEST(Stage1, BitReproducible) {
  auto run = [] {
    Model m(small_config(), 2);
    const auto r = train_stage1(m, synthetic_caption_corpus(6, 1), quick(1, 5));
    return std::make_pair(m.params(), r.log.back().loss);
  };
  const auto [a, la] = run();
  const auto [b, lb] = run();
  EXPECT_TRUE(a.bit_equal(b));
  EXPECT_EQ(la, lb);
}

TEST(Stage2, NeedsStageOne) {
  Model m(small_config(), 2);
  EXPECT_THROW(train_stage2(m, synthetic_caption_corpus(2, 1), quick(2)), MissingStage1Checkpoint);
}

TEST(Stage2, FreezesEncoderAndBaseWeights) {
  Model m(small_config(), 2);
  train_stage1(m, synthetic_caption_corpus(4, 1), quick(1, 2));
  const auto path = temp_file("s1.ckpt");
  save_model(m, path);
  Model loaded = load_model(path);
  fs::remove(path);
  ASSERT_TRUE(loaded.params().bit_equal(m.params()));
  ASSERT_FALSE(lm::has_adapters(loaded.params()));

  auto data = synthetic_caption_corpus(4, 2);
  data.push_back({"CCO", Task::kConversation, {{"What is it?", "Ethanol."}, {"Acidic?", "No."}}});
  data.push_back({"CC(=O)O", Task::kProperty, {{"pKa?", "Output Value: 4.76"}}});
  const auto gnn_before = with_prefix(loaded.params(), "gnn.");
  const auto lm_before = with_prefix(loaded.params(), "lm.");
  const auto proj_before = with_prefix(loaded.params(), "proj.");
  train_stage2(loaded, data, quick(2, 3));
  EXPECT_TRUE(gnn_before.bit_equal(loaded.params()));
  EXPECT_TRUE(lm_before.bit_equal(loaded.params()));
  EXPECT_FALSE(proj_before.bit_equal(loaded.params()));
  EXPECT_TRUE(lm::has_adapters(loaded.params()));
  bool moved = false;
  for (const auto &t : lm::default_lora_targets(loaded.config().lm))
    moved |= loaded.params().value(t + ".lora_a").max_abs_diff(Tensor(
                 loaded.params().value(t + ".lora_a").shape())) > 0.0;
  EXPECT_TRUE(moved);
  EXPECT_EQ(loaded.config().trained_stage, 2);
}

TEST(Evaluate, LossIsTokenMean) {
  const Model m(small_config(), 2);
  const std::vector<SampleRecord> data{{"CCO", Task::kCaption, {{"x", "ab"}}}};
  const auto ex = m.make_example("CCO", {{"x", "ab"}});
  ag::Tape tape(m.params());
  EXPECT_DOUBLE_EQ(evaluate_loss(m, data), m.loss(tape, ex).value().item());
}

}  // namespace
}  // namespace molgraph::pipeline
