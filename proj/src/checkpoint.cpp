#include "lungdn/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "lungdn/errors.hpp"

namespace lungdn::model {

namespace {
constexpr const char* kMagic = "LUNGDN-CKPT 1";

static_assert(std::endian::native == std::endian::little, "checkpoint payload assumes a little-endian host");

std::uint32_t crc_update(std::uint32_t crc, const void* data, std::size_t n) {
  const auto* p = static_cast<const Bytef*>(data);
  while (n > 0) {
    const uInt chunk = n > (1u << 30) ? (1u << 30) : uInt(n);
    crc = std::uint32_t(::crc32(crc, p, chunk));
    p += chunk;
    n -= chunk;
  }
  return crc;
}

struct RawCheckpoint {
  CheckpointInfo info;
  std::vector<double> payload;
};

RawCheckpoint read_raw(const std::filesystem::path& path, bool with_payload) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::string magic, header;
  if (!std::getline(in, magic) || magic != kMagic) throw CorruptCheckpoint(path.string() + ": bad magic line");
  if (!std::getline(in, header)) throw CorruptCheckpoint(path.string() + ": missing header");
  RawCheckpoint raw;
  auto& info = raw.info;
  try {
    auto j = nlohmann::json::parse(header);
    info.config = ModelConfig::from_json(j.at("config"));
    info.precision = parse_precision(j.at("precision").get<std::string>());
    info.tensors = j.at("tensors");
    info.payload_bytes = j.at("payload_bytes").get<std::uint64_t>();
    info.crc32 = j.at("crc32").get<std::uint32_t>();
    info.step = j.value("step", std::uint64_t{0});
    info.meta = j.value("meta", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw CorruptCheckpoint(path.string() + ": unreadable header: " + e.what());
  } catch (const ConfigError& e) {
    throw CorruptCheckpoint(path.string() + ": " + e.what());
  }
  if (info.payload_bytes % sizeof(double) != 0) throw CorruptCheckpoint(path.string() + ": ragged payload size");
  const auto start = in.tellg();
  in.seekg(0, std::ios::end);
  const auto remaining = std::uint64_t(in.tellg() - start);
  if (remaining != info.payload_bytes)
    throw CorruptCheckpoint(path.string() + ": payload is " + std::to_string(remaining) + " bytes, header says " +
                            std::to_string(info.payload_bytes));
  in.seekg(start);
  raw.payload.resize(info.payload_bytes / sizeof(double));
  in.read(reinterpret_cast<char*>(raw.payload.data()), std::streamsize(info.payload_bytes));
  if (!in) throw CorruptCheckpoint(path.string() + ": short read");
  const auto crc = crc_update(std::uint32_t(::crc32(0, nullptr, 0)), raw.payload.data(), info.payload_bytes);
  if (crc != info.crc32) throw CorruptCheckpoint(path.string() + ": checksum mismatch");
  if (!with_payload) raw.payload.clear();
  return raw;
}
}  // namespace

std::string precision_name(Precision p) { return p == Precision::f32 ? "f32" : "f64"; }

Precision parse_precision(const std::string& s) {
  if (s == "f32" || s == "32") return Precision::f32;
  if (s == "f64" || s == "64") return Precision::f64;
  throw ConfigError("unknown precision '" + s + "' (expected f32 or f64)");
}

template <class Real>
void save_checkpoint(const std::filesystem::path& path, const Uformer<Real>& model, const nlohmann::json& meta) {
  const auto& store = model.params();
  nlohmann::json tensors = nlohmann::json::array();
  std::vector<double> payload;
  payload.reserve(store.total_count());
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto& p = store[i];
    tensors.push_back({p.name, p.value.shape(), p.trainable});
    for (Real v : p.value.values()) payload.push_back(double(v));
  }
  const std::uint64_t bytes = payload.size() * sizeof(double);
  nlohmann::json header = {{"config", model.config().to_json()},
                           {"precision", precision_name(precision_of<Real>())},
                           {"tensors", tensors},
                           {"payload_bytes", bytes},
                           {"crc32", crc_update(std::uint32_t(::crc32(0, nullptr, 0)), payload.data(), bytes)},
                           {"step", store.step()},
                           {"meta", meta.is_null() ? nlohmann::json::object() : meta}};

  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + tmp.string());
    out << kMagic << '\n' << header.dump() << '\n';
    out.write(reinterpret_cast<const char*>(payload.data()), std::streamsize(bytes));
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

CheckpointInfo read_checkpoint_info(const std::filesystem::path& path) { return read_raw(path, false).info; }

template <class Real>
Uformer<Real> load_checkpoint(const std::filesystem::path& path, CheckpointInfo* info) {
  auto raw = read_raw(path, true);
  Uformer<Real> model(raw.info.config);
  auto& store = model.params();
  if (raw.info.tensors.size() != store.size())
    throw CorruptCheckpoint(path.string() + ": tensor table does not match the model config");
  std::size_t offset = 0;
  for (std::size_t i = 0; i < store.size(); ++i) {
    auto& p = store[i];
    const auto& entry = raw.info.tensors[i];
    if (entry.at(0).get<std::string>() != p.name || entry.at(1).get<nn::Shape>() != p.value.shape())
      throw CorruptCheckpoint(path.string() + ": unexpected tensor " + entry.dump() + " at position " +
                              std::to_string(i));
    if (offset + p.value.size() > raw.payload.size()) throw CorruptCheckpoint(path.string() + ": payload too short");
    for (auto& v : p.value.values()) v = Real(raw.payload[offset++]);
  }
  if (offset != raw.payload.size()) throw CorruptCheckpoint(path.string() + ": trailing payload");
  store.set_step(raw.info.step);
  if (info) *info = std::move(raw.info);
  return model;
}

std::uint32_t file_crc32(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::uint32_t crc = std::uint32_t(::crc32(0, nullptr, 0));
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), std::streamsize(buf.size()));
    crc = crc_update(crc, buf.data(), std::size_t(in.gcount()));
  }
  return crc;
}

template void save_checkpoint<float>(const std::filesystem::path&, const Uformer<float>&, const nlohmann::json&);
template void save_checkpoint<double>(const std::filesystem::path&, const Uformer<double>&, const nlohmann::json&);
template Uformer<float> load_checkpoint<float>(const std::filesystem::path&, CheckpointInfo*);
template Uformer<double> load_checkpoint<double>(const std::filesystem::path&, CheckpointInfo*);

}  // namespace lungdn::model
