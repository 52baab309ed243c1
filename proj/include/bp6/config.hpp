#pragma once

// Run configuration: an INI file whose [section] key = value pairs map onto
// "section.key". Every value defaults to the published setting.

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>

#include "bp6/dataset.hpp"
#include "bp6/losses.hpp"
#include "bp6/model_config.hpp"
#include "bp6/trainer.hpp"

namespace bp6 {

struct RunConfig {
  using KeyValues = std::map<std::string, std::string>;

  std::string input_dir;
  std::string annotations;
  std::string store;
  std::string out_dir = "out";
  std::uint64_t seed = 0;

  data::PreprocessConfig preprocess{};
  data::PlausibilityGate gate{};
  bool split_by_subject = false;
  ModelConfig model{};
  train::TrainConfig train{};
  loss::LossConfig loss{};

  KeyValues to_kv() const;
  static RunConfig from_kv(const KeyValues& kv);
  void validate() const;

  /// FNV-1a over the canonical key=value listing, paths and seed excluded.
  std::string hash() const;
};

namespace config_detail {

inline std::string fmt(double v) { return format_double(v); }

inline double to_real(const std::string& key, const std::string& text) {
  double v = 0.0;
  if (!data::detail::parse_double(text, v)) throw ConfigError(key + ": '" + text + "' is not a number");
  return v;
}

inline std::uint64_t to_uint(const std::string& key, const std::string& text) {
  const auto t = data::detail::trim(text);
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size()) {
    throw ConfigError(key + ": '" + text + "' is not a non-negative integer");
  }
  return v;
}

inline bool to_bool(const std::string& key, const std::string& text) {
  const auto t = data::detail::trim(text);
  if (t == "true" || t == "1" || t == "yes") return true;
  if (t == "false" || t == "0" || t == "no") return false;
  throw ConfigError(key + ": '" + text + "' is not a boolean");
}

}  // namespace config_detail

inline RunConfig::KeyValues RunConfig::to_kv() const {
  using config_detail::fmt;
  KeyValues kv = model.to_kv();
  const auto& p = preprocess;
  kv.insert({
      {"data.input_dir", input_dir},
      {"data.annotations", annotations},
      {"data.store", store},
      {"run.out_dir", out_dir},
      {"run.seed", std::to_string(seed)},
      {"preprocess.raw_rate_hz", fmt(p.raw_rate_hz)},
      {"preprocess.window_samples", std::to_string(p.window_samples)},
      {"preprocess.lowpass_order", std::to_string(p.lowpass_order)},
      {"preprocess.lowpass_cutoff_hz", fmt(p.lowpass_cutoff_hz)},
      {"preprocess.decimate", std::to_string(p.decimate_factor)},
      {"preprocess.ecg_prefilter_order", std::to_string(p.ecg.prefilter_order)},
      {"preprocess.ecg_prefilter_cutoff_hz", fmt(p.ecg.prefilter_cutoff_hz)},
      {"preprocess.vmd_modes", std::to_string(p.ecg.vmd.k_modes)},
      {"preprocess.vmd_alpha", fmt(p.ecg.vmd.alpha)},
      {"preprocess.vmd_tau", fmt(p.ecg.vmd.tau_dual)},
      {"preprocess.vmd_tol", fmt(p.ecg.vmd.tol)},
      {"preprocess.vmd_max_iter", std::to_string(p.ecg.vmd.max_iter)},
      {"preprocess.vmd_omega_init", p.ecg.vmd.omega_init == vmd::OmegaInit::uniform ? "uniform" : "zero"},
      {"preprocess.wavelet_levels", std::to_string(p.ecg.wavelet.levels)},
      {"preprocess.wavelet_rule",
       p.ecg.wavelet.threshold_rule == wavelet::ThresholdRule::universal_soft ? "universal_soft" : "level_universal_soft"},
      {"preprocess.ppg_order", std::to_string(p.ppg.order)},
      {"preprocess.ppg_cutoff_hz", fmt(p.ppg.cutoff_hz)},
      {"preprocess.dia_min", fmt(gate.dia_min)},
      {"preprocess.sys_max", fmt(gate.sys_max)},
      {"preprocess.split_by_subject", split_by_subject ? "true" : "false"},
      {"train.batch_size", std::to_string(train.batch_size)},
      {"train.epochs", std::to_string(train.epochs)},
      {"train.lr", fmt(train.adam.lr)},
      {"train.beta1", fmt(train.adam.beta1)},
      {"train.beta2", fmt(train.adam.beta2)},
      {"train.eps", fmt(train.adam.eps)},
      {"train.stop_train_mae", fmt(train.stop_train_mae)},
      {"loss.lambda", fmt(loss.lambda_contrastive)},
      {"loss.tau", fmt(loss.tau)},
      {"loss.k_negatives", std::to_string(loss.k_negatives)},
  });
  return kv;
}

inline RunConfig RunConfig::from_kv(const KeyValues& kv) {
  using namespace config_detail;
  RunConfig c;
  KeyValues model_kv;
  std::map<std::string, std::function<void(const std::string&, const std::string&)>> set{
      {"data.input_dir", [&](auto&, auto& v) { c.input_dir = v; }},
      {"data.annotations", [&](auto&, auto& v) { c.annotations = v; }},
      {"data.store", [&](auto&, auto& v) { c.store = v; }},
      {"run.out_dir", [&](auto&, auto& v) { c.out_dir = v; }},
      {"run.seed", [&](auto& k, auto& v) { c.seed = to_uint(k, v); }},
      {"preprocess.raw_rate_hz", [&](auto& k, auto& v) { c.preprocess.raw_rate_hz = to_real(k, v); }},
      {"preprocess.window_samples", [&](auto& k, auto& v) { c.preprocess.window_samples = to_uint(k, v); }},
      {"preprocess.lowpass_order", [&](auto& k, auto& v) { c.preprocess.lowpass_order = static_cast<int>(to_uint(k, v)); }},
      {"preprocess.lowpass_cutoff_hz", [&](auto& k, auto& v) { c.preprocess.lowpass_cutoff_hz = to_real(k, v); }},
      {"preprocess.decimate", [&](auto& k, auto& v) { c.preprocess.decimate_factor = static_cast<int>(to_uint(k, v)); }},
      {"preprocess.ecg_prefilter_order",
       [&](auto& k, auto& v) { c.preprocess.ecg.prefilter_order = static_cast<int>(to_uint(k, v)); }},
      {"preprocess.ecg_prefilter_cutoff_hz", [&](auto& k, auto& v) { c.preprocess.ecg.prefilter_cutoff_hz = to_real(k, v); }},
      {"preprocess.vmd_modes", [&](auto& k, auto& v) { c.preprocess.ecg.vmd.k_modes = static_cast<int>(to_uint(k, v)); }},
      {"preprocess.vmd_alpha", [&](auto& k, auto& v) { c.preprocess.ecg.vmd.alpha = to_real(k, v); }},
      {"preprocess.vmd_tau", [&](auto& k, auto& v) { c.preprocess.ecg.vmd.tau_dual = to_real(k, v); }},
      {"preprocess.vmd_tol", [&](auto& k, auto& v) { c.preprocess.ecg.vmd.tol = to_real(k, v); }},
      {"preprocess.vmd_max_iter", [&](auto& k, auto& v) { c.preprocess.ecg.vmd.max_iter = static_cast<int>(to_uint(k, v)); }},
      {"preprocess.vmd_omega_init",
       [&](auto& k, auto& v) {
         if (v == "uniform") c.preprocess.ecg.vmd.omega_init = vmd::OmegaInit::uniform;
         else if (v == "zero") c.preprocess.ecg.vmd.omega_init = vmd::OmegaInit::zero;
         else throw ConfigError(k + ": expected uniform or zero, got '" + v + "'");
       }},
      {"preprocess.wavelet_levels",
       [&](auto& k, auto& v) { c.preprocess.ecg.wavelet.levels = static_cast<int>(to_uint(k, v)); }},
      {"preprocess.wavelet_rule",
       [&](auto& k, auto& v) {
         if (v == "universal_soft") c.preprocess.ecg.wavelet.threshold_rule = wavelet::ThresholdRule::universal_soft;
         else if (v == "level_universal_soft")
           c.preprocess.ecg.wavelet.threshold_rule = wavelet::ThresholdRule::level_universal_soft;
         else throw ConfigError(k + ": expected universal_soft or level_universal_soft, got '" + v + "'");
       }},
      {"preprocess.ppg_order", [&](auto& k, auto& v) { c.preprocess.ppg.order = static_cast<int>(to_uint(k, v)); }},
      {"preprocess.ppg_cutoff_hz", [&](auto& k, auto& v) { c.preprocess.ppg.cutoff_hz = to_real(k, v); }},
      {"preprocess.dia_min", [&](auto& k, auto& v) { c.gate.dia_min = to_real(k, v); }},
      {"preprocess.sys_max", [&](auto& k, auto& v) { c.gate.sys_max = to_real(k, v); }},
      {"preprocess.split_by_subject", [&](auto& k, auto& v) { c.split_by_subject = to_bool(k, v); }},
      {"train.batch_size", [&](auto& k, auto& v) { c.train.batch_size = to_uint(k, v); }},
      {"train.epochs", [&](auto& k, auto& v) { c.train.epochs = to_uint(k, v); }},
      {"train.lr", [&](auto& k, auto& v) { c.train.adam.lr = to_real(k, v); }},
      {"train.beta1", [&](auto& k, auto& v) { c.train.adam.beta1 = to_real(k, v); }},
      {"train.beta2", [&](auto& k, auto& v) { c.train.adam.beta2 = to_real(k, v); }},
      {"train.eps", [&](auto& k, auto& v) { c.train.adam.eps = to_real(k, v); }},
      {"train.stop_train_mae", [&](auto& k, auto& v) { c.train.stop_train_mae = to_real(k, v); }},
      {"loss.lambda", [&](auto& k, auto& v) { c.loss.lambda_contrastive = to_real(k, v); }},
      {"loss.tau", [&](auto& k, auto& v) { c.loss.tau = to_real(k, v); }},
      {"loss.k_negatives", [&](auto& k, auto& v) { c.loss.k_negatives = to_uint(k, v); }},
  };
  const auto model_keys = ModelConfig{}.to_kv();
  for (const auto& [k, v] : kv) {
    if (model_keys.count(k)) {
      model_kv[k] = v;
    } else if (auto it = set.find(k); it != set.end()) {
      it->second(k, v);
    } else {
      throw ConfigError("unknown configuration key '" + k + "'");
    }
  }
  c.model = ModelConfig::from_kv(model_kv);
  c.train.seed = c.seed;
  c.validate();
  return c;
}

inline void RunConfig::validate() const {
  model.validate();
  loss.validate();
  train.validate(loss);
  if (preprocess.decimate_factor < 1) throw ConfigError("preprocess.decimate must be >= 1");
  if (preprocess.segment_samples() != data::kSegmentSamples || model.segment_length != data::kSegmentSamples) {
    throw ConfigError("preprocess.window_samples / preprocess.decimate and model.segment_length must give " +
                      std::to_string(data::kSegmentSamples) + " steps (the segment store layout)");
  }
  if (!(gate.dia_min < gate.sys_max)) throw ConfigError("preprocess.dia_min must be below preprocess.sys_max");
}

inline std::string RunConfig::hash() const {
  std::uint64_t h = 14695981039346656037ull;
  for (const auto& [k, v] : to_kv()) {
    if (k.rfind("data.", 0) == 0 || k.rfind("run.", 0) == 0) continue;
    for (char ch : k + "=" + v + "\n") {
      h ^= static_cast<unsigned char>(ch);
      h *= 1099511628211ull;
    }
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

/// Reads an INI file. Keys outside any section are rejected.
inline RunConfig load_run_config(const std::filesystem::path& path) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(path.string(), tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("cannot read config: ") + e.what());
  }
  RunConfig::KeyValues kv;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) throw ConfigError(path.string() + ": key '" + section + "' is outside any [section]");
    for (const auto& [key, value] : body) kv[section + "." + key] = value.get_value<std::string>();
  }
  return RunConfig::from_kv(kv);
}

/// Writes every key, grouped by section, in a form load_run_config reads back.
inline std::string format_run_config(const RunConfig& c) {
  std::map<std::string, std::map<std::string, std::string>> sections;
  for (const auto& [k, v] : c.to_kv()) {
    const auto dot = k.find('.');
    sections[k.substr(0, dot)][k.substr(dot + 1)] = v;
  }
  std::string out;
  for (const auto& [name, body] : sections) {
    out += "[" + name + "]\n";
    for (const auto& [k, v] : body) out += k + " = " + v + "\n";
    out += "\n";
  }
  return out;
}

/// An explicit --seed wins, then BP6_SEED, then the config file.
inline std::uint64_t resolve_seed(std::optional<std::uint64_t> flag, std::uint64_t from_config) {
  if (flag) return *flag;
  if (const char* env = std::getenv("BP6_SEED"); env && *env) return config_detail::to_uint("BP6_SEED", env);
  return from_config;
}

}  // namespace bp6
