//
// SPDX-License-Identifier: Apache-2.0
//

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "molgraph/checkpoint.h"
#include "molgraph/instructgen.h"
#include "molgraph/metrics.h"
#include "molgraph/tools.h"
#include "molgraph/training.h"

namespace fs = std::filesystem;
using namespace molgraph;
using nlohmann::json;

namespace {

std::string read_file(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path &path, const std::string &text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

// One text per line: a JSON string, or an object with response, text or
// prediction.
std::vector<std::string> read_texts(const std::string &path) {
  std::vector<std::string> out;
  std::istringstream in(read_file(path));
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto j = json::parse(line);
    if (j.is_string()) {
      out.push_back(j.get<std::string>());
      continue;
    }
    bool found = false;
    for (const char *key : {"response", "text", "prediction"}) {
      if (j.contains(key)) {
        out.push_back(j[key].get<std::string>());
        found = true;
        break;
      }
    }
    if (!found) throw std::runtime_error(path + ": line without response/text/prediction");
  }
  return out;
}

std::optional<std::string> opt(const std::string &s) {
  return s.empty() ? std::nullopt : std::optional<std::string>(s);
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"Multi-level graph projection toolkit for molecule-language models"};
  app.require_subcommand(1);
  std::uint64_t seed = 0;

  // parse
  auto *parse = app.add_subcommand("parse", "Parse a SMILES string");
  std::string smiles;
  bool as_json = false;
  parse->add_option("smiles", smiles)->required();
  parse->add_flag("--json", as_json, "Emit the full JSON document");

  // motifs
  auto *motifs = app.add_subcommand("motifs", "Detect functional groups");
  std::string catalog_path;
  motifs->add_option("smiles", smiles)->required();
  motifs->add_option("--catalog", catalog_path, "JSON rule overrides");

  // encode
  auto *encode = app.add_subcommand("encode", "Run the GIN encoder");
  std::string ckpt, dump_dir;
  encode->add_option("smiles", smiles)->required();
  encode->add_option("--ckpt", ckpt, "Checkpoint (default: seeded initialization)");
  encode->add_option("--dump-stack", dump_dir, "Directory for level{l}.csv files");

  // oversmooth
  auto *oversmooth = app.add_subcommand("oversmooth", "Per-layer node collapse statistic");
  std::string layers_text = "1,2,4,5";
  oversmooth->add_option("smiles", smiles)->required();
  oversmooth->add_option("--layers", layers_text, "Comma-separated encoder depths");
  oversmooth->add_option("--ckpt", ckpt, "Checkpoint (default: seeded initialization)");
  oversmooth->add_option("--dump-dir", dump_dir, "Directory for per-node layer CSV files");

  // project
  auto *project = app.add_subcommand("project", "Compute graph tokens");
  std::string variant = "mgproj";
  project->add_option("smiles", smiles)->required();
  project->add_option("--ckpt", ckpt, "Checkpoint (default: seeded initialization)");
  project->add_option("--variant", variant, "mgproj, no-motif, low, high, concat or resampler");
  project->add_option("--dump-attn", dump_dir, "Directory for attention CSV files");

  // generate
  auto *generate = app.add_subcommand("generate", "Greedy response generation");
  std::string instruction;
  std::size_t max_len = 128;
  generate->add_option("--ckpt", ckpt)->required();
  generate->add_option("--smiles", smiles)->required();
  generate->add_option("--instruction", instruction)->required();
  generate->add_option("--max-len", max_len);

  // train
  auto *train = app.add_subcommand("train", "Two-stage training");
  int stage = 1;
  std::string data_path, config_path, ckpt_out, resume;
  train->add_option("--stage", stage)->required()->check(CLI::IsMember({1, 2}));
  train->add_option("--data", data_path)->required();
  train->add_option("--config", config_path, "TrainingConfig JSON; an optional \"model\" key configures a fresh model");
  train->add_option("--ckpt-out", ckpt_out)->required();
  train->add_option("--resume", resume, "Start from this checkpoint");

  // instructgen
  auto *igen = app.add_subcommand("instructgen", "Generate multi-turn instruction data");
  std::string contexts_path, backend_name = "stub", endpoint, template_name = "caption", out_path,
                             stats_path;
  instructgen::GenerationConfig gen;
  igen->add_option("--contexts", contexts_path)->required();
  igen->add_option("--backend", backend_name)->check(CLI::IsMember({"stub", "http"}));
  igen->add_option("--endpoint", endpoint);
  igen->add_option("--template", template_name);
  igen->add_option("--max-turns", gen.max_turns);
  igen->add_option("--exemplars", gen.exemplars_per_prompt);
  igen->add_option("--pool", gen.exemplar_pool);
  igen->add_option("--concurrency", gen.concurrency);
  igen->add_option("--out", out_path)->required();
  igen->add_option("--stats", stats_path, "Write the statistics report here");

  // eval
  auto *eval = app.add_subcommand("eval", "Score predictions");
  std::string pred_path, gold_path, metric_list = "bleu,meteor,exact,lev", report_path;
  eval->add_option("--pred", pred_path)->required();
  eval->add_option("--gold", gold_path)->required();
  eval->add_option("--metrics", metric_list);
  eval->add_option("--report", report_path);

  // Each model-building subcommand takes its own --seed.
  for (auto *sub : {encode, oversmooth, project, train, igen})
    sub->add_option("--seed", seed, "Seed (MOLGRAPH_SEED overrides)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*parse) {
      const auto report = cli::parse_report(smiles);
      if (as_json) {
        std::cout << report.dump(2) << '\n';
      } else if (report["valid"]) {
        std::cout << "valid: " << report["atoms"].size() << " atoms, " << report["bonds"].size()
                  << " bonds, " << report["rings"] << " rings\n";
      } else {
        std::cout << "invalid: " << report["error"]["message"].get<std::string>() << '\n';
      }
      return report["valid"] ? 0 : 1;
    }
    if (*motifs) {
      const auto graph = chem::parse_smiles(smiles);
      const auto catalog = catalog_path.empty() ? motif::Catalog()
                                                : motif::Catalog::from_json(read_file(catalog_path));
      const auto groups = motif::detect_functional_groups(graph, catalog);
      std::cout << json{{"smiles", smiles}, {"groups", cli::groups_to_json(groups, graph)}}.dump(2)
                << '\n';
      return 0;
    }
    const std::uint64_t s = cli::env_seed(seed);
    if (*encode) {
      const auto model = cli::load_or_init(opt(ckpt), s);
      const auto graph = chem::parse_smiles(smiles);
      ag::Tape tape(model.params());
      const auto stack = encoder::encode(tape, graph, model.config().gin);
      if (!dump_dir.empty()) fs::create_directories(dump_dir);
      for (std::size_t l = 0; l < stack.levels.size(); ++l) {
        std::cout << "level " << l << ": " << shape_string(stack.level(l).shape()) << '\n';
        if (!dump_dir.empty())
          write_file(fs::path(dump_dir) / ("level" + std::to_string(l) + ".csv"),
                     encoder::level_csv(stack.level(l)));
      }
      return 0;
    }
    if (*oversmooth) {
      const auto layers = cli::parse_index_list(layers_text);
      std::optional<pipeline::Model> model;
      if (!ckpt.empty()) {
        model.emplace(pipeline::load_model(ckpt));
      } else {
        auto config = cli::default_model_config();
        for (auto l : layers) config.gin.layers = std::max(config.gin.layers, l);
        model.emplace(std::move(config), s);
      }
      const auto graph = chem::parse_smiles(smiles);
      std::cout << cli::oversmooth_csv(graph, *model, layers);
      if (!dump_dir.empty()) {
        fs::create_directories(dump_dir);
        ag::Tape tape(model->params());
        const auto stack = encoder::encode(tape, graph, model->config().gin);
        for (auto l : layers)
          write_file(fs::path(dump_dir) / ("layer" + std::to_string(l) + ".csv"),
                     encoder::level_csv(stack.level(l)));
      }
      return 0;
    }
    if (*project) {
      auto base = cli::load_or_init(opt(ckpt), s);
      const auto v = projector::parse_variant(variant);
      std::optional<pipeline::Model> rebuilt;
      if (v != base.config().projector.variant) {
        // Fresh projector for the requested variant on top of the same encoder.
        auto config = base.config();
        config.projector.variant = v;
        rebuilt.emplace(config, s);
        for (const auto &name : base.params().names_with_prefix("gnn."))
          rebuilt->params().set_value(name, base.params().value(name));
      }
      const auto &model = rebuilt ? *rebuilt : base;
      const auto graph = chem::parse_smiles(smiles);
      ag::Tape tape(model.params());
      const auto tokens = model.graph_tokens(tape, graph);
      std::ostringstream hash;
      hash << std::hex << std::setw(16) << std::setfill('0')
           << projector::content_hash(tokens.value());
      std::cout << json{{"variant", variant},
                        {"rows", tokens.value().rows()},
                        {"cols", tokens.value().cols()},
                        {"hash", hash.str()}}
                       .dump()
                << '\n';
      if (!dump_dir.empty()) {
        fs::create_directories(dump_dir);
        for (std::size_t i = 0; i < tokens.attention.size(); ++i)
          write_file(fs::path(dump_dir) / ("attention" + std::to_string(i) + ".csv"),
                     cli::matrix_csv(tokens.attention[i]));
      }
      return 0;
    }
    if (*generate) {
      const auto model = pipeline::load_model(ckpt);
      std::cout << model.generate(smiles, instruction, max_len) << '\n';
      return 0;
    }
    if (*train) {
      json config_json = config_path.empty() ? json::object() : json::parse(read_file(config_path));
      config_json["stage"] = stage;
      auto config = pipeline::TrainingConfig::from_json(config_json);
      pipeline::apply_seed_override(config);
      const auto data = pipeline::load_dataset(data_path);
      for (const auto &q : data.quarantined)
        std::cerr << "quarantined line " << q.line << ": " << q.reason << '\n';
      std::optional<pipeline::Model> model;
      if (!resume.empty()) {
        model.emplace(pipeline::load_model(resume));
      } else {
        auto mc = cli::default_model_config();
        if (config_json.contains("model")) {
          mc = pipeline::ModelConfig::from_json(config_json["model"]);
          if (mc.alphabet.empty()) mc.alphabet = cli::default_alphabet();
          mc.reconcile();
        }
        model.emplace(std::move(mc), config.seed);
      }
      const auto log = [](const pipeline::StepLog &e) {
        std::cerr << "step " << e.step << " lr " << e.lr << " loss " << e.loss << '\n';
      };
      if (stage == 1) {
        pipeline::train_stage1(*model, data.records, config, log);
      } else {
        pipeline::train_stage2(*model, data.records, config, log);
      }
      pipeline::save_model(*model, ckpt_out, &config);
      return 0;
    }
    if (*igen) {
      gen.seed = s;
      gen.template_id = instructgen::parse_template(template_name);
      const auto contexts = instructgen::parse_contexts(read_file(contexts_path));
      std::unique_ptr<instructgen::GenerationBackend> backend;
      if (backend_name == "http") {
        if (endpoint.empty()) throw std::invalid_argument("--backend http needs --endpoint");
        backend = std::make_unique<instructgen::HttpBackend>(
            instructgen::HttpBackend::options_from_env(endpoint));
      } else {
        backend = instructgen::StubBackend::deterministic();
      }
      const auto result = instructgen::generate_dataset(contexts, *backend, gen);
      write_file(out_path, result.jsonl);
      const auto stats = result.stats.to_json().dump(2);
      if (!stats_path.empty()) write_file(stats_path, stats + "\n");
      std::cout << stats << '\n';
      return 0;
    }
    if (*eval) {
      std::vector<std::string> names;
      std::istringstream in(metric_list);
      for (std::string m; std::getline(in, m, ',');) names.push_back(m);
      const auto report =
          metrics::evaluate(read_texts(pred_path), read_texts(gold_path), names).to_json();
      if (!report_path.empty()) write_file(report_path, report.dump(2) + "\n");
      std::cout << report.dump(2) << '\n';
      return 0;
    }
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
