#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "json.hpp"
#include "lungdn/model.hpp"

namespace lungdn::model {

enum class Precision { f32, f64 };

std::string precision_name(Precision p);
Precision parse_precision(const std::string& s);

template <class Real>
constexpr Precision precision_of() {
  return sizeof(Real) == 4 ? Precision::f32 : Precision::f64;
}

/// Header of a checkpoint file: the model config, the precision it was
/// trained in, the tensor table and free-form metadata.
struct CheckpointInfo {
  ModelConfig config;
  Precision precision = Precision::f64;
  nlohmann::json tensors;  // [[name, [shape...], trainable], ...]
  std::uint64_t payload_bytes = 0;
  std::uint32_t crc32 = 0;
  std::uint64_t step = 0;
  nlohmann::json meta;
};

/// Writes "LUNGDN-CKPT 1\n", one line of canonical JSON, then every tensor as
/// raw little-endian 64-bit floats in store order. Written atomically.
template <class Real>
void save_checkpoint(const std::filesystem::path& path, const Uformer<Real>& model,
                     const nlohmann::json& meta = nlohmann::json::object());

/// Reads and verifies the header and checksum. Throws CorruptCheckpoint.
CheckpointInfo read_checkpoint_info(const std::filesystem::path& path);

/// Loads into either precision, whatever precision the file was saved in.
template <class Real>
Uformer<Real> load_checkpoint(const std::filesystem::path& path, CheckpointInfo* info = nullptr);

/// CRC-32 of a whole file; used to compare checkpoints by content.
std::uint32_t file_crc32(const std::filesystem::path& path);

}  // namespace lungdn::model
