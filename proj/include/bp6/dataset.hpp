#pragma once

// Recording ingestion, windowing, per-window preprocessing, labeling and splitting.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "bp6/denoise.hpp"
#include "bp6/dsp.hpp"
#include "bp6/error.hpp"
#include "bp6/modality.hpp"

namespace bp6::data {

inline constexpr double kRawRateHz = 500.0;
inline constexpr std::size_t kWindowSamples = 5000;
inline constexpr std::size_t kSegmentSamples = 1000;

struct Provenance {
  std::string subject_id;
  std::string motion_state;
  std::uint32_t window_index = 0;

  auto operator<=>(const Provenance&) const = default;
};

/// Six channel blocks (1,6,2,3,3,3) x 1000, stored row-major as float32 like the segment store.
struct SixModalSample {
  std::array<std::vector<float>, kNumModalities> blocks;
  float sbp = 0.0f;
  float dbp = 0.0f;
  Provenance provenance;

  bool operator==(const SixModalSample&) const = default;
};

inline SixModalSample empty_sample(std::size_t length = kSegmentSamples) {
  SixModalSample s;
  for (std::size_t m = 0; m < kNumModalities; ++m) s.blocks[m].assign(kModalities[m].channels * length, 0.0f);
  return s;
}

/// Throws unless every block has the canonical channel count, `length` steps and finite values.
inline void check_sample(const SixModalSample& s, std::size_t length = kSegmentSamples) {
  for (std::size_t m = 0; m < kNumModalities; ++m) {
    if (s.blocks[m].size() != kModalities[m].channels * length) {
      throw ShapeError("block " + std::string(kModalities[m].key) + " holds " + std::to_string(s.blocks[m].size()) +
                       " values, expected " + std::to_string(kModalities[m].channels) + "x" + std::to_string(length));
    }
    for (float v : s.blocks[m])
      if (!std::isfinite(v)) throw DataError("non-finite value in block " + std::string(kModalities[m].key));
  }
}

struct Recording {
  std::string subject_id;
  std::string motion_state;
  std::array<std::vector<double>, kNumChannels> channels;  // canonical channel order

  std::size_t length() const { return channels[0].size(); }
};

namespace detail {

inline std::vector<std::string_view> split_fields(std::string_view line, char delim = ',') {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(delim, start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '"')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '"'))
    s.remove_suffix(1);
  return s;
}

inline bool parse_double(std::string_view s, double& out) {
  s = trim(s);
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

inline int channel_index(std::string_view name) {
  for (std::size_t i = 0; i < kNumChannels; ++i)
    if (kChannelNames[i] == name) return static_cast<int>(i);
  return -1;
}

}  // namespace detail

/// Columns present in released recordings that carry no sensor data.
inline constexpr std::array<std::string_view, 2> kIgnoredColumns{"peaks", "time"};

/// "s3_walk.csv" -> ("s3", "walk").
inline std::pair<std::string, std::string> recording_key_from_path(const std::filesystem::path& path) {
  const std::string stem = path.stem().string();
  const auto cut = stem.rfind('_');
  if (cut == std::string::npos || cut == 0 || cut + 1 == stem.size()) {
    throw SchemaError("cannot derive subject and motion state from file name '" + path.filename().string() +
                      "' (expected <subject>_<state>.csv)");
  }
  return {stem.substr(0, cut), stem.substr(cut + 1)};
}

/// Reads one comma-delimited recording at 500 Hz. The peaks and time columns are
/// dropped; the 18 sensor channels must all be present and equally long.
inline Recording ingest_recording(const std::filesystem::path& path, std::string subject_id, std::string motion_state) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open recording " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw SchemaError(path.string() + ": missing header row");

  const auto header = detail::split_fields(line);
  std::vector<int> column_to_channel(header.size(), -1);
  std::array<bool, kNumChannels> seen{};
  for (std::size_t c = 0; c < header.size(); ++c) {
    const auto name = detail::trim(header[c]);
    if (std::find(kIgnoredColumns.begin(), kIgnoredColumns.end(), name) != kIgnoredColumns.end()) continue;
    const int ch = detail::channel_index(name);
    if (ch < 0) throw SchemaError(path.string() + ": unknown column '" + std::string(name) + "'");
    if (seen[static_cast<std::size_t>(ch)]) throw SchemaError(path.string() + ": duplicate column '" + std::string(name) + "'");
    seen[static_cast<std::size_t>(ch)] = true;
    column_to_channel[c] = ch;
  }
  std::string missing;
  for (std::size_t i = 0; i < kNumChannels; ++i)
    if (!seen[i]) missing += (missing.empty() ? "" : ", ") + std::string(kChannelNames[i]);
  if (!missing.empty()) throw SchemaError(path.string() + ": missing channel(s) " + missing);

  Recording rec{std::move(subject_id), std::move(motion_state), {}};
  // A channel may end early (empty trailing cells) only to be reported as a length mismatch.
  std::array<bool, kNumChannels> ended{};
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split_fields(line);
    if (fields.size() != header.size()) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                       " fields, found " + std::to_string(fields.size()));
    }
    for (std::size_t c = 0; c < fields.size(); ++c) {
      const int ch = column_to_channel[c];
      if (ch < 0) continue;
      const auto k = static_cast<std::size_t>(ch);
      if (detail::trim(fields[c]).empty()) {
        ended[k] = true;
        continue;
      }
      if (ended[k]) {
        throw ParseError(path.string() + ":" + std::to_string(line_no) + ": gap in column " +
                         std::string(kChannelNames[k]));
      }
      double v = 0.0;
      if (!detail::parse_double(fields[c], v)) {
        throw ParseError(path.string() + ":" + std::to_string(line_no) + ": cannot parse '" +
                         std::string(detail::trim(fields[c])) + "' in column " + std::string(kChannelNames[k]));
      }
      if (!std::isfinite(v)) {
        throw DataError(path.string() + ": non-finite value in row " + std::to_string(line_no - 1) + " column " +
                        std::string(kChannelNames[k]));
      }
      rec.channels[k].push_back(v);
    }
  }
  const std::size_t n = std::max_element(rec.channels.begin(), rec.channels.end(), [](const auto& a, const auto& b) {
                          return a.size() < b.size();
                        })->size();
  for (std::size_t k = 0; k < kNumChannels; ++k) {
    if (rec.channels[k].size() != n) {
      throw DataError(path.string() + ": length mismatch, channel " + std::string(kChannelNames[k]) + " has " +
                      std::to_string(rec.channels[k].size()) + " samples, expected " + std::to_string(n) +
                      " (only 500 Hz-aligned recordings are accepted)");
    }
  }
  return rec;
}

inline Recording ingest_recording(const std::filesystem::path& path) {
  auto [subject, state] = recording_key_from_path(path);
  return ingest_recording(path, std::move(subject), std::move(state));
}

/// One 18 x 5000 slice of a recording.
struct Window {
  Provenance provenance;
  std::array<std::vector<double>, kNumChannels> channels;
};

struct WindowingResult {
  std::vector<Window> windows;
  std::size_t discarded = 0;  // trailing samples dropped
  std::vector<std::string> warnings;
};

inline WindowingResult window_recording(const Recording& rec, std::size_t window = kWindowSamples) {
  WindowingResult out;
  const std::size_t n = rec.length();
  const std::size_t count = n / window;
  out.discarded = n - count * window;
  if (count == 0) {
    out.warnings.push_back(rec.subject_id + "/" + rec.motion_state + ": " + std::to_string(n) +
                           " samples is shorter than one window of " + std::to_string(window));
  }
  for (std::size_t w = 0; w < count; ++w) {
    Window win{{rec.subject_id, rec.motion_state, static_cast<std::uint32_t>(w)}, {}};
    for (std::size_t k = 0; k < kNumChannels; ++k) {
      const auto first = rec.channels[k].begin() + static_cast<std::ptrdiff_t>(w * window);
      win.channels[k].assign(first, first + static_cast<std::ptrdiff_t>(window));
    }
    out.windows.push_back(std::move(win));
  }
  return out;
}

struct PreprocessConfig {
  double raw_rate_hz = kRawRateHz;
  std::size_t window_samples = kWindowSamples;
  int lowpass_order = 4;
  double lowpass_cutoff_hz = 50.0;
  int decimate_factor = 5;
  denoise::EcgDenoiseConfig ecg{};
  denoise::PpgDenoiseConfig ppg{};

  std::size_t segment_samples() const { return window_samples / static_cast<std::size_t>(decimate_factor); }
};

/// Low-pass, decimate and standardize one raw channel.
inline dsp::Segment condition_channel(const std::vector<double>& raw, std::string_view name,
                                      const PreprocessConfig& cfg = {}) {
  const auto lpf = dsp::design_butterworth_lowpass(cfg.lowpass_order, cfg.lowpass_cutoff_hz, cfg.raw_rate_hz);
  const dsp::Segment seg{raw, cfg.raw_rate_hz, std::string(name)};
  return dsp::standardize_segment(dsp::decimate(dsp::apply_filter(lpf, seg, true), cfg.decimate_factor));
}

/// Full per-window chain; the result carries provenance but no label yet.
inline SixModalSample preprocess_window(const Window& win, const PreprocessConfig& cfg = {}) {
  const std::size_t length = cfg.segment_samples();
  SixModalSample s = empty_sample(length);
  s.provenance = win.provenance;
  try {
    for (std::size_t m = 0; m < kNumModalities; ++m) {
      const auto& spec = kModalities[m];
      for (std::size_t c = 0; c < spec.channels; ++c) {
        const std::size_t k = spec.first_channel + c;
        dsp::Segment seg = condition_channel(win.channels[k], kChannelNames[k], cfg);
        if (m == 0) seg = denoise::denoise_ecg(seg, cfg.ecg);
        if (m == 1) seg = denoise::denoise_ppg(seg, cfg.ppg);
        if (seg.size() != length) throw ShapeError("channel " + seg.channel_name + " produced wrong length");
        std::transform(seg.values.begin(), seg.values.end(), s.blocks[m].begin() + static_cast<std::ptrdiff_t>(c * length),
                       [](double v) { return static_cast<float>(v); });
      }
    }
  } catch (const NumericError& e) {
    throw NumericError(win.provenance.subject_id + "/" + win.provenance.motion_state + " window " +
                       std::to_string(win.provenance.window_index) + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError(win.provenance.subject_id + "/" + win.provenance.motion_state + " window " +
                    std::to_string(win.provenance.window_index) + ": " + e.what());
  }
  return s;
}

struct AnnotationRecord {
  std::string subject_id;
  std::string motion_state;
  double bp_sys_end = 0.0;
  double bp_dia_end = 0.0;
};

struct PlausibilityGate {
  double dia_min = 40.0;
  double sys_max = 250.0;

  void check(const AnnotationRecord& a) const {
    if (!std::isfinite(a.bp_sys_end) || !std::isfinite(a.bp_dia_end) || a.bp_dia_end < dia_min ||
        a.bp_dia_end >= a.bp_sys_end || a.bp_sys_end > sys_max) {
      throw DataError("implausible annotation for " + a.subject_id + "/" + a.motion_state + ": SBP " +
                      std::to_string(a.bp_sys_end) + ", DBP " + std::to_string(a.bp_dia_end) + " (need " +
                      std::to_string(dia_min) + " <= DBP < SBP <= " + std::to_string(sys_max) + ")");
    }
  }
};

/// Annotation table with at least subject_id, motion_state, bp_sys_end, bp_dia_end columns.
inline std::vector<AnnotationRecord> read_annotations(const std::filesystem::path& path,
                                                      const PlausibilityGate& gate = {}) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open annotations " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw SchemaError(path.string() + ": missing header row");
  const auto header = detail::split_fields(line);
  const std::array<std::string_view, 4> need{"subject_id", "motion_state", "bp_sys_end", "bp_dia_end"};
  std::array<std::size_t, 4> col{};
  for (std::size_t i = 0; i < need.size(); ++i) {
    auto it = std::find_if(header.begin(), header.end(), [&](std::string_view h) { return detail::trim(h) == need[i]; });
    if (it == header.end()) throw SchemaError(path.string() + ": missing column " + std::string(need[i]));
    col[i] = static_cast<std::size_t>(it - header.begin());
  }
  std::vector<AnnotationRecord> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split_fields(line);
    if (f.size() != header.size()) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                       " fields, found " + std::to_string(f.size()));
    }
    AnnotationRecord a{std::string(detail::trim(f[col[0]])), std::string(detail::trim(f[col[1]])), 0, 0};
    if (!detail::parse_double(f[col[2]], a.bp_sys_end) || !detail::parse_double(f[col[3]], a.bp_dia_end)) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": unparsable blood pressure value");
    }
    gate.check(a);
    out.push_back(std::move(a));
  }
  return out;
}

/// Broadcasts each recording's end-of-recording cuff values onto all of its windows.
inline void assign_labels(std::vector<SixModalSample>& samples, const std::vector<AnnotationRecord>& annotations,
                          const PlausibilityGate& gate = {}) {
  std::map<std::pair<std::string, std::string>, const AnnotationRecord*> index;
  for (const auto& a : annotations) {
    gate.check(a);
    index[{a.subject_id, a.motion_state}] = &a;
  }
  std::set<std::pair<std::string, std::string>> unmatched;
  for (const auto& s : samples)
    if (!index.count({s.provenance.subject_id, s.provenance.motion_state}))
      unmatched.insert({s.provenance.subject_id, s.provenance.motion_state});
  if (!unmatched.empty()) {
    std::string list;
    for (const auto& [subj, state] : unmatched) list += (list.empty() ? "" : ", ") + subj + "/" + state;
    throw SchemaError("no annotation for " + list);
  }
  for (auto& s : samples) {
    const auto* a = index.at({s.provenance.subject_id, s.provenance.motion_state});
    s.sbp = static_cast<float>(a->bp_sys_end);
    s.dbp = static_cast<float>(a->bp_dia_end);
  }
}

/// Index sets into the sample collection.
struct DatasetSplit {
  std::vector<std::size_t> train, validation, test;
  std::uint64_t seed = 0;
};

/// Seeded shuffle then a contiguous 70/10/20 cut (floor for train and validation).
/// With by_subject the cut is made over subjects instead of segments.
inline DatasetSplit split_dataset(const std::vector<SixModalSample>& samples, std::uint64_t seed,
                                  bool by_subject = false) {
  if (samples.size() < 10) {
    throw ContractError("split needs at least 10 samples, got " + std::to_string(samples.size()));
  }
  DatasetSplit out;
  out.seed = seed;
  std::mt19937_64 rng(seed);
  if (!by_subject) {
    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    const std::size_t n_train = samples.size() * 7 / 10, n_val = samples.size() / 10;
    out.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    out.validation.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
                          order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
    out.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), order.end());
    return out;
  }
  std::vector<std::string> subjects;
  for (const auto& s : samples) subjects.push_back(s.provenance.subject_id);
  std::sort(subjects.begin(), subjects.end());
  subjects.erase(std::unique(subjects.begin(), subjects.end()), subjects.end());
  if (subjects.size() < 3) throw ContractError("subject-wise split needs at least 3 subjects");
  std::shuffle(subjects.begin(), subjects.end(), rng);
  const std::size_t n_train = std::max<std::size_t>(1, subjects.size() * 7 / 10);
  const std::size_t n_val = std::max<std::size_t>(1, subjects.size() / 10);
  std::map<std::string, int> part;
  for (std::size_t i = 0; i < subjects.size(); ++i) part[subjects[i]] = i < n_train ? 0 : i < n_train + n_val ? 1 : 2;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const int p = part.at(samples[i].provenance.subject_id);
    (p == 0 ? out.train : p == 1 ? out.validation : out.test).push_back(i);
  }
  return out;
}

}  // namespace bp6::data
