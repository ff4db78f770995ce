//
// SPDX-License-Identifier: Apache-2.0
//

#ifndef MOLGRAPH_TOOLS_H_
#define MOLGRAPH_TOOLS_H_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "molgraph/chem.h"
#include "molgraph/motif.h"
#include "molgraph/training.h"

// Building blocks of the molgraph command line, kept in the library so they
// can be tested without spawning processes.
namespace molgraph::cli {

using json = nlohmann::json;

// {"valid": true, "atoms": [...], "bonds": [...], ...} or
// {"valid": false, "error": {"kind", "offset", "message"}}.
json parse_report(const std::string &smiles);
json graph_to_json(const chem::MolecularGraph &graph);
json groups_to_json(const std::vector<motif::FunctionalGroup> &groups,
                    const chem::MolecularGraph &graph);

// Printable ASCII, enough for SMILES and English text without byte escapes.
std::string default_alphabet();
pipeline::ModelConfig default_model_config();

// Loads a checkpoint, or builds a seeded model with the default
// configuration when no path is given.
pipeline::Model load_or_init(const std::optional<std::string> &ckpt, std::uint64_t seed);

// Seed from MOLGRAPH_SEED when set, else the fallback.
std::uint64_t env_seed(std::uint64_t fallback);

// layer,mean_cosine_distance rows for the requested depths of the encoder.
std::string oversmooth_csv(const chem::MolecularGraph &graph, const pipeline::Model &model,
                           const std::vector<std::size_t> &layers);

// Comma-separated list of non-negative integers.
std::vector<std::size_t> parse_index_list(const std::string &text);

std::string matrix_csv(const Tensor &t);

}  // namespace molgraph::cli

#endif  // MOLGRAPH_TOOLS_H_
