#pragma once

// Model checkpoints. Little-endian:
//   "BP6C" | u32 version | u32 n_meta | (str key, str value)* |
//   u32 n_tensors | (str name, u32 rank, u32 dims[rank], f32 data[numel])* |
//   u32 CRC32 of every preceding byte.
// Strings are u32 length + bytes.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bp6/model.hpp"
#include "bp6/store.hpp"

namespace bp6 {

inline constexpr char kCheckpointMagic[4] = {'B', 'P', '6', 'C'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Raised when a checkpoint was produced for a different model configuration.
class ConfigMismatch : public ConfigError {
 public:
  ConfigMismatch(const std::string& key, const std::string& msg) : ConfigError(msg), key(key) {}
  std::string key;
};

struct Checkpoint {
  std::map<std::string, std::string> meta;
  std::map<std::string, ad::Tensor> tensors;  // float32 precision
};

inline std::vector<char> encode_checkpoint(const Checkpoint& ck) {
  data::detail::ByteWriter w;
  w.put_bytes(kCheckpointMagic, 4);
  w.put(kCheckpointVersion);
  w.put(static_cast<std::uint32_t>(ck.meta.size()));
  for (const auto& [k, v] : ck.meta) {
    w.put_string(k);
    w.put_string(v);
  }
  w.put(static_cast<std::uint32_t>(ck.tensors.size()));
  for (const auto& [name, t] : ck.tensors) {
    w.put_string(name);
    w.put(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape) w.put(static_cast<std::uint32_t>(d));
    for (double v : t.data) w.put(static_cast<float>(v));
  }
  w.put(data::detail::crc32_of(w.bytes.data(), w.bytes.size()));
  return std::move(w.bytes);
}

inline Checkpoint decode_checkpoint(const std::vector<char>& bytes, const std::string& what = "checkpoint") {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) {
    throw FormatError(what + ": not a BP6C checkpoint");
  }
  std::uint32_t version = 0;
  std::memcpy(&version, bytes.data() + 4, 4);
  if (version != kCheckpointVersion) throw FormatError(what + ": unsupported checkpoint version " + std::to_string(version));
  if (bytes.size() < 16) throw CorruptStoreError(what + ": truncated");
  std::uint32_t crc = 0;
  std::memcpy(&crc, bytes.data() + bytes.size() - 4, 4);
  if (data::detail::crc32_of(bytes.data(), bytes.size() - 4) != crc) throw CorruptStoreError(what + ": checksum mismatch");

  data::detail::ByteReader r(bytes.data() + 8, bytes.size() - 12, what);
  Checkpoint ck;
  const auto n_meta = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    std::string k = r.get_string();
    ck.meta[k] = r.get_string();
  }
  const auto n_tensors = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    std::string name = r.get_string();
    const auto rank = r.get<std::uint32_t>();
    if (rank > 8) throw CorruptStoreError(what + ": tensor " + name + " has rank " + std::to_string(rank));
    ad::Shape shape(rank);
    for (auto& d : shape) d = r.get<std::uint32_t>();
    const std::size_t n = ad::numel(shape);
    if (n * sizeof(float) > r.remaining()) throw CorruptStoreError(what + ": truncated tensor " + name);
    std::vector<float> raw(n);
    r.get_bytes(raw.data(), n * sizeof(float));
    ck.tensors.emplace(std::move(name), ad::Tensor(shape, std::vector<double>(raw.begin(), raw.end())));
  }
  if (r.remaining() != 0) throw CorruptStoreError(what + ": trailing bytes");
  return ck;
}

inline void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  data::detail::write_file(path, encode_checkpoint(ck));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(data::detail::read_file(path), path.string());
}

/// Parameters and buffers of a model, keyed by their stable names.
inline std::map<std::string, ad::Tensor> model_tensors(nn::BpModel& model) {
  std::map<std::string, ad::Tensor> out;
  for (const ad::Parameter* p : model.parameters()) out.emplace(p->name, p->value);
  for (const ad::Buffer& b : model.buffers()) out.emplace(b.name, *b.tensor);
  return out;
}

/// First model.* key whose value differs between two configurations.
inline std::optional<std::string> first_config_mismatch(const ModelConfig::KeyValues& a,
                                                        const ModelConfig::KeyValues& b) {
  for (const auto& [k, v] : a) {
    if (k.rfind("model.", 0) != 0) continue;
    auto it = b.find(k);
    if (it == b.end() || it->second != v) return k;
  }
  for (const auto& [k, v] : b)
    if (k.rfind("model.", 0) == 0 && !a.count(k)) return k;
  return std::nullopt;
}

inline Checkpoint make_checkpoint(nn::BpModel& model, std::map<std::string, std::string> meta = {}) {
  Checkpoint ck;
  ck.meta = std::move(meta);
  for (const auto& [k, v] : model.config().to_kv()) ck.meta[k] = v;
  ck.tensors = model_tensors(model);
  return ck;
}

/// Copies checkpoint tensors into a model built from `expected` config. Every
/// parameter and buffer must be present with a matching shape.
inline void apply_checkpoint(const Checkpoint& ck, nn::BpModel& model) {
  if (auto key = first_config_mismatch(model.config().to_kv(), ck.meta)) {
    auto it = ck.meta.find(*key);
    const auto want = model.config().to_kv();
    auto wit = want.find(*key);
    throw ConfigMismatch(*key, "checkpoint model configuration differs at " + *key + ": checkpoint has '" +
                                   (it == ck.meta.end() ? std::string("<absent>") : it->second) + "', config has '" +
                                   (wit == want.end() ? std::string("<absent>") : wit->second) + "'");
  }
  auto copy = [&](const std::string& name, ad::Tensor& dst) {
    auto it = ck.tensors.find(name);
    if (it == ck.tensors.end()) throw FormatError("checkpoint lacks tensor " + name);
    if (it->second.shape != dst.shape) {
      throw ShapeError("checkpoint tensor " + name + " has shape " + ad::to_string(it->second.shape) + ", model expects " +
                       ad::to_string(dst.shape));
    }
    dst.data = it->second.data;
  };
  for (ad::Parameter* p : model.parameters()) copy(p->name, p->value);
  for (ad::Buffer& b : model.buffers()) copy(b.name, *b.tensor);
}

/// Rebuilds a model from a checkpoint alone.
inline std::unique_ptr<nn::BpModel> model_from_checkpoint(const Checkpoint& ck) {
  ModelConfig::KeyValues kv;
  for (const auto& [k, v] : ck.meta)
    if (k.rfind("model.", 0) == 0) kv[k] = v;
  auto model = std::make_unique<nn::BpModel>(ModelConfig::from_kv(kv), 0);
  apply_checkpoint(ck, *model);
  return model;
}

}  // namespace bp6
