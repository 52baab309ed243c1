#pragma once

#include <cstddef>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "bp6/error.hpp"

namespace bp6 {

struct TcnConfig {
  std::vector<std::size_t> channels{128, 64, 9};
  std::vector<std::size_t> dilations{1, 2, 4};
  std::size_t kernel = 3;
  std::vector<std::size_t> fc{4096, 2048, 512};
  double dropout = 0.2;
};

struct CacnnConfig {
  std::size_t channels = 27;
  std::vector<std::size_t> kernels{18, 9, 7};
  std::size_t pool_kernel = 3;
  std::size_t pool_stride = 3;
  std::size_t se_reduction = 9;
  std::vector<std::size_t> fc{512, 512, 256};
  double dropout = 0.3;
};

struct ModelConfig {
  std::size_t segment_length = 1000;
  std::size_t embed_dim = 128;
  TcnConfig tcn;
  CacnnConfig cacnn;
  std::size_t num_experts = 4;
  std::vector<std::size_t> expert_hidden{512, 512, 256};

  using KeyValues = std::map<std::string, std::string>;

  /// Flat "model.*" keys, the same spelling the config file uses.
  KeyValues to_kv() const;
  static ModelConfig from_kv(const KeyValues& kv);

  void validate() const;
};

inline std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

inline std::vector<std::size_t> parse_sizes(const std::string& key, const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b == std::string::npos) continue;
    item = item.substr(b, e - b + 1);
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size() || item[0] == '-') throw ConfigError(key + ": '" + text + "' is not a list of sizes");
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

/// Shortest of 15 or 17 significant digits that reads back exactly.
inline std::string format_double(double v) {
  for (int digits : {15, 17}) {
    std::ostringstream os;
    os.precision(digits);
    os << v;
    if (digits == 17 || std::stod(os.str()) == v) return os.str();
  }
  return {};
}

inline ModelConfig::KeyValues ModelConfig::to_kv() const {
  return {
      {"model.segment_length", std::to_string(segment_length)},
      {"model.embed_dim", std::to_string(embed_dim)},
      {"model.tcn_channels", join_sizes(tcn.channels)},
      {"model.tcn_dilations", join_sizes(tcn.dilations)},
      {"model.tcn_kernel", std::to_string(tcn.kernel)},
      {"model.tcn_fc", join_sizes(tcn.fc)},
      {"model.tcn_dropout", format_double(tcn.dropout)},
      {"model.cacnn_channels", std::to_string(cacnn.channels)},
      {"model.cacnn_kernels", join_sizes(cacnn.kernels)},
      {"model.cacnn_pool_kernel", std::to_string(cacnn.pool_kernel)},
      {"model.cacnn_pool_stride", std::to_string(cacnn.pool_stride)},
      {"model.se_reduction", std::to_string(cacnn.se_reduction)},
      {"model.cacnn_fc", join_sizes(cacnn.fc)},
      {"model.cacnn_dropout", format_double(cacnn.dropout)},
      {"model.num_experts", std::to_string(num_experts)},
      {"model.expert_hidden", join_sizes(expert_hidden)},
  };
}

inline ModelConfig ModelConfig::from_kv(const KeyValues& kv) {
  ModelConfig c;
  auto size = [&](const char* key, std::size_t& dst) {
    if (auto it = kv.find(key); it != kv.end()) {
      const auto v = parse_sizes(key, it->second);
      if (v.size() != 1) throw ConfigError(std::string(key) + ": expected one integer, got '" + it->second + "'");
      dst = v[0];
    }
  };
  auto sizes = [&](const char* key, std::vector<std::size_t>& dst) {
    if (auto it = kv.find(key); it != kv.end()) dst = parse_sizes(key, it->second);
  };
  auto real = [&](const char* key, double& dst) {
    if (auto it = kv.find(key); it != kv.end()) {
      try {
        std::size_t used = 0;
        dst = std::stod(it->second, &used);
        if (used != it->second.size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw ConfigError(std::string(key) + ": '" + it->second + "' is not a number");
      }
    }
  };
  size("model.segment_length", c.segment_length);
  size("model.embed_dim", c.embed_dim);
  sizes("model.tcn_channels", c.tcn.channels);
  sizes("model.tcn_dilations", c.tcn.dilations);
  size("model.tcn_kernel", c.tcn.kernel);
  sizes("model.tcn_fc", c.tcn.fc);
  real("model.tcn_dropout", c.tcn.dropout);
  size("model.cacnn_channels", c.cacnn.channels);
  sizes("model.cacnn_kernels", c.cacnn.kernels);
  size("model.cacnn_pool_kernel", c.cacnn.pool_kernel);
  size("model.cacnn_pool_stride", c.cacnn.pool_stride);
  size("model.se_reduction", c.cacnn.se_reduction);
  sizes("model.cacnn_fc", c.cacnn.fc);
  real("model.cacnn_dropout", c.cacnn.dropout);
  size("model.num_experts", c.num_experts);
  sizes("model.expert_hidden", c.expert_hidden);
  c.validate();
  return c;
}

inline void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError(m); };
  if (segment_length == 0) fail("model.segment_length must be positive");
  if (embed_dim == 0) fail("model.embed_dim must be positive");
  if (tcn.channels.empty() || tcn.channels.size() != tcn.dilations.size())
    fail("model.tcn_channels and model.tcn_dilations must be nonempty and equally long");
  for (auto d : tcn.dilations)
    if (d == 0) fail("model.tcn_dilations entries must be >= 1");
  if (tcn.kernel == 0) fail("model.tcn_kernel must be >= 1");
  if (cacnn.channels == 0 || cacnn.kernels.empty()) fail("model.cacnn_channels/model.cacnn_kernels must be nonempty");
  if (cacnn.pool_kernel == 0 || cacnn.pool_stride == 0) fail("model.cacnn_pool_kernel/stride must be >= 1");
  if (num_experts == 0) fail("model.num_experts must be >= 1");
  for (double p : {tcn.dropout, cacnn.dropout})
    if (!(p >= 0.0 && p < 1.0)) fail("dropout rates must lie in [0, 1)");
  for (const auto* v : {&tcn.channels, &tcn.fc, &cacnn.fc, &expert_hidden})
    for (auto w : *v)
      if (w == 0) fail("layer widths must be positive");
}

}  // namespace bp6
