//
// SPDX-License-Identifier: Apache-2.0
//

#include "molgraph/checkpoint.h"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace molgraph::pipeline {
namespace {

using json = nlohmann::json;

constexpr std::string_view kMagic = "LLAMO1";
constexpr std::size_t kHeader = kMagic.size() + 8;

template <typename U>
void put_le(std::string &out, U bits) {
  for (std::size_t i = 0; i < sizeof(U); ++i)
    out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

template <typename U>
U get_le(const char *p) {
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i)
    bits |= static_cast<U>(static_cast<unsigned char>(p[i])) << (8 * i);
  return bits;
}

std::size_t width_of(Dtype d) { return d == Dtype::kF64 ? 8 : 4; }
std::string_view name_of(Dtype d) { return d == Dtype::kF64 ? "f64" : "f32"; }

Dtype dtype_from(const std::string &s, const std::string &tensor) {
  if (s == "f64") return Dtype::kF64;
  if (s == "f32") return Dtype::kF32;
  throw ManifestMismatch("tensor '" + tensor + "' has unsupported dtype '" + s + "'");
}

}  // namespace

std::string serialize_checkpoint(const ParameterStore &params, const json &config,
                                 Dtype dtype) {
  std::string payload;
  json tensors = json::array();
  for (const auto &[name, entry] : params.entries()) {
    tensors.push_back({{"name", name},
                       {"shape", entry.value.shape()},
                       {"dtype", name_of(dtype)},
                       {"offset", payload.size()},
                       {"trainable", entry.trainable}});
    for (double v : entry.value.data()) {
      if (dtype == Dtype::kF64)
        put_le(payload, std::bit_cast<std::uint64_t>(v));
      else
        put_le(payload, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
  }
  const json manifest{{"config", config},
                      {"tensors", tensors},
                      {"payload_bytes", payload.size()}};
  const std::string text = manifest.dump();
  std::string out(kMagic);
  put_le(out, static_cast<std::uint64_t>(text.size()));
  out += text;
  out += payload;
  return out;
}

Checkpoint parse_checkpoint(const std::string &bytes) {
  if (bytes.size() < kMagic.size() || std::string_view(bytes).substr(0, kMagic.size()) != kMagic)
    throw BadMagic("not a checkpoint: missing LLAMO1 header");
  if (bytes.size() < kHeader) throw TruncatedPayload("checkpoint ends inside its header");
  const auto manifest_len = get_le<std::uint64_t>(bytes.data() + kMagic.size());
  if (manifest_len > bytes.size() - kHeader)
    throw TruncatedPayload("checkpoint ends inside its manifest");
  json manifest;
  try {
    manifest = json::parse(bytes.substr(kHeader, manifest_len));
  } catch (const json::exception &e) {
    throw ManifestMismatch(std::string("unreadable manifest: ") + e.what());
  }
  const std::size_t start = kHeader + manifest_len;
  const std::size_t available = bytes.size() - start;

  Checkpoint ck;
  try {
    const std::size_t declared = manifest.at("payload_bytes").get<std::size_t>();
    std::size_t expected = 0;
    for (const auto &t : manifest.at("tensors")) {
      const auto name = t.at("name").get<std::string>();
      const auto shape = t.at("shape").get<Shape>();
      const Dtype dtype = dtype_from(t.at("dtype").get<std::string>(), name);
      const auto offset = t.at("offset").get<std::size_t>();
      if (offset != expected)
        throw ManifestMismatch("tensor '" + name + "' offset " + std::to_string(offset) +
                               " does not follow the previous tensor at " +
                               std::to_string(expected));
      const std::size_t count = shape_size(shape);
      expected += count * width_of(dtype);
      if (expected > declared)
        throw ManifestMismatch("tensor '" + name + "' with shape " + shape_string(shape) +
                               " overruns the declared payload of " +
                               std::to_string(declared) + " bytes");
      if (expected > available)
        throw TruncatedPayload("payload ends inside tensor '" + name + "'");
      std::vector<double> values(count);
      const char *p = bytes.data() + start + offset;
      for (std::size_t i = 0; i < count; ++i) {
        values[i] = dtype == Dtype::kF64
                        ? std::bit_cast<double>(get_le<std::uint64_t>(p + 8 * i))
                        : static_cast<double>(std::bit_cast<float>(get_le<std::uint32_t>(p + 4 * i)));
      }
      ck.params.add(name, Tensor(shape, std::move(values)), t.at("trainable").get<bool>());
    }
    if (expected != declared)
      throw ManifestMismatch("tensor shapes account for " + std::to_string(expected) +
                             " payload bytes, manifest declares " + std::to_string(declared));
    if (available < declared) throw TruncatedPayload("payload is shorter than declared");
    if (available > declared)
      throw ManifestMismatch("payload has " + std::to_string(available - declared) +
                             " bytes beyond the manifest");
  } catch (const json::exception &e) {
    throw ManifestMismatch(std::string("malformed manifest: ") + e.what());
  }
  ck.config = manifest.value("config", json::object());
  return ck;
}

void save_checkpoint(const ParameterStore &params, const json &config,
                     const std::filesystem::path &path, Dtype dtype) {
  const std::string bytes = serialize_checkpoint(params, config, dtype);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_checkpoint(ss.str());
}

}  // namespace molgraph::pipeline
