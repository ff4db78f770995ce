//
// SPDX-License-Identifier: Apache-2.0
//

#ifndef MOLGRAPH_CHECKPOINT_H_
#define MOLGRAPH_CHECKPOINT_H_

#include <filesystem>
#include <stdexcept>
#include <string>

#include "json.hpp"
#include "molgraph/autograd.h"

namespace molgraph::pipeline {

class BadMagic : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ManifestMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TruncatedPayload : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Dtype { kF64, kF32 };

struct Checkpoint {
  ParameterStore params;
  nlohmann::json config;
};

// File layout:
//   "LLAMO1"
//   u64 little-endian manifest length
//   manifest: JSON {"config": ..., "tensors": [{name, shape, dtype, offset,
//             trainable}, ...]} with offsets relative to the payload start
//   payload: little-endian IEEE-754 values, tensors back to back
// f64 round-trips bit-exactly; f32 halves the file at a precision cost.
std::string serialize_checkpoint(const ParameterStore &params,
                                 const nlohmann::json &config,
                                 Dtype dtype = Dtype::kF64);
Checkpoint parse_checkpoint(const std::string &bytes);

void save_checkpoint(const ParameterStore &params, const nlohmann::json &config,
                     const std::filesystem::path &path, Dtype dtype = Dtype::kF64);
Checkpoint load_checkpoint(const std::filesystem::path &path);

}  // namespace molgraph::pipeline

#endif  // MOLGRAPH_CHECKPOINT_H_
