#pragma once

// Binary segment store. Little-endian:
//   "BP6S" | u32 version | u32 count |
//   per sample: u32 len + subject | u32 len + state | u32 window | f32 sbp | f32 dbp | six f32 blocks |
//   u32 CRC32 of every preceding byte.

#include <zlib.h>

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "bp6/dataset.hpp"

namespace bp6::data {

static_assert(std::endian::native == std::endian::little, "store I/O assumes a little-endian host");

inline constexpr char kStoreMagic[4] = {'B', 'P', '6', 'S'};
inline constexpr std::uint32_t kStoreVersion = 1;

namespace detail {

class ByteWriter {
 public:
  template <class T>
  void put(const T& v) {
    const auto* p = reinterpret_cast<const char*>(&v);
    bytes.insert(bytes.end(), p, p + sizeof(T));
  }
  void put_bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const char*>(p);
    bytes.insert(bytes.end(), c, c + n);
  }
  void put_string(const std::string& s) {
    put(static_cast<std::uint32_t>(s.size()));
    put_bytes(s.data(), s.size());
  }
  std::vector<char> bytes;
};

class ByteReader {
 public:
  ByteReader(const char* data, std::size_t size, std::string what) : p_(data), end_(data + size), what_(std::move(what)) {}

  template <class T>
  T get() {
    T v;
    get_bytes(&v, sizeof(T));
    return v;
  }
  void get_bytes(void* out, std::size_t n) {
    if (static_cast<std::size_t>(end_ - p_) < n) throw CorruptStoreError(what_ + ": truncated");
    std::memcpy(out, p_, n);
    p_ += n;
  }
  std::string get_string(std::size_t limit = 1 << 16) {
    const auto n = get<std::uint32_t>();
    if (n > limit) throw CorruptStoreError(what_ + ": implausible string length " + std::to_string(n));
    std::string s(n, '\0');
    get_bytes(s.data(), n);
    return s;
  }
  std::size_t remaining() const { return static_cast<std::size_t>(end_ - p_); }

 private:
  const char* p_;
  const char* end_;
  std::string what_;
};

inline std::uint32_t crc32_of(const char* data, std::size_t n) {
  return static_cast<std::uint32_t>(::crc32(0L, reinterpret_cast<const Bytef*>(data), static_cast<uInt>(n)));
}

inline std::vector<char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, const std::vector<char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("short write to " + path.string());
}

}  // namespace detail

inline std::vector<char> encode_store(const std::vector<SixModalSample>& samples) {
  detail::ByteWriter w;
  w.put_bytes(kStoreMagic, 4);
  w.put(kStoreVersion);
  w.put(static_cast<std::uint32_t>(samples.size()));
  for (const auto& s : samples) {
    check_sample(s);
    w.put_string(s.provenance.subject_id);
    w.put_string(s.provenance.motion_state);
    w.put(s.provenance.window_index);
    w.put(s.sbp);
    w.put(s.dbp);
    for (const auto& b : s.blocks) w.put_bytes(b.data(), b.size() * sizeof(float));
  }
  w.put(detail::crc32_of(w.bytes.data(), w.bytes.size()));
  return std::move(w.bytes);
}

inline std::vector<SixModalSample> decode_store(const std::vector<char>& bytes, const std::string& what = "store") {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kStoreMagic, 4) != 0) throw FormatError(what + ": not a BP6S store");
  std::uint32_t version = 0;
  std::memcpy(&version, bytes.data() + 4, 4);
  if (version != kStoreVersion) throw FormatError(what + ": unsupported store version " + std::to_string(version));
  if (bytes.size() < 16) throw CorruptStoreError(what + ": truncated");
  std::uint32_t stored_crc = 0;
  std::memcpy(&stored_crc, bytes.data() + bytes.size() - 4, 4);
  if (detail::crc32_of(bytes.data(), bytes.size() - 4) != stored_crc) {
    throw CorruptStoreError(what + ": checksum mismatch (truncated or altered)");
  }
  detail::ByteReader r(bytes.data() + 8, bytes.size() - 12, what);
  const auto count = r.get<std::uint32_t>();
  std::vector<SixModalSample> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    SixModalSample s = empty_sample();
    s.provenance.subject_id = r.get_string();
    s.provenance.motion_state = r.get_string();
    s.provenance.window_index = r.get<std::uint32_t>();
    s.sbp = r.get<float>();
    s.dbp = r.get<float>();
    for (auto& b : s.blocks) r.get_bytes(b.data(), b.size() * sizeof(float));
    out.push_back(std::move(s));
  }
  if (r.remaining() != 0) throw CorruptStoreError(what + ": trailing bytes after " + std::to_string(count) + " samples");
  return out;
}

inline void save_store(const std::vector<SixModalSample>& samples, const std::filesystem::path& path) {
  detail::write_file(path, encode_store(samples));
}

inline std::vector<SixModalSample> load_store(const std::filesystem::path& path) {
  return decode_store(detail::read_file(path), path.string());
}

/// Sidecar next to a store: seed, config hash and per-recording window counts.
inline nlohmann::json store_sidecar(const std::vector<SixModalSample>& samples, std::uint64_t seed,
                                    const std::string& config_hash) {
  std::map<std::string, std::size_t> counts;
  for (const auto& s : samples) ++counts[s.provenance.subject_id + "/" + s.provenance.motion_state];
  nlohmann::json j;
  j["format"] = "BP6S";
  j["version"] = kStoreVersion;
  j["seed"] = seed;
  j["config_hash"] = config_hash;
  j["count"] = samples.size();
  j["windows_per_recording"] = counts;
  return j;
}

inline std::filesystem::path sidecar_path(const std::filesystem::path& store) {
  return std::filesystem::path(store.string() + ".json");
}

inline void write_sidecar(const std::filesystem::path& store, const nlohmann::json& j) {
  std::ofstream out(sidecar_path(store));
  if (!out) throw Error("cannot write " + sidecar_path(store).string());
  out << j.dump(2) << '\n';
}

}  // namespace bp6::data
