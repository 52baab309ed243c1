#pragma once

// Error statistics and clinical grading of blood-pressure estimates (mmHg).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "bp6/error.hpp"

namespace bp6::clinical {

struct ErrorStats {
  std::size_t n = 0;
  double mae = 0, me = 0, sde = 0, rmse = 0;
};

/// error = pred - ref; sde uses the n-1 denominator.
inline ErrorStats compute_errors(std::span<const double> pred, std::span<const double> ref) {
  if (pred.size() != ref.size()) {
    throw ContractError("compute_errors: " + std::to_string(pred.size()) + " predictions vs " +
                        std::to_string(ref.size()) + " references");
  }
  const std::size_t n = pred.size();
  if (n < 2) throw ContractError("compute_errors: need at least 2 pairs for a standard deviation");
  ErrorStats s;
  s.n = n;
  double sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = pred[i] - ref[i];
    s.me += e;
    s.mae += std::abs(e);
    sq += e * e;
  }
  const double dn = static_cast<double>(n);
  s.me /= dn;
  s.mae /= dn;
  s.rmse = std::sqrt(sq / dn);
  double var = 0.0;
  for (std::size_t i = 0; i < n; ++i) var += std::pow(pred[i] - ref[i] - s.me, 2);
  s.sde = std::sqrt(var / (dn - 1.0));
  return s;
}

/// Mean arterial pressure, (SBP + 2 DBP) / 3.
inline double map_from_bp(double sbp, double dbp) { return (sbp + 2.0 * dbp) / 3.0; }

enum class Grade { A, B, C, D };

inline char grade_letter(Grade g) { return "ABCD"[static_cast<int>(g)]; }

struct BhsReport {
  double pct_le_5 = 0, pct_le_10 = 0, pct_le_15 = 0;
  Grade grade = Grade::D;
};

/// Best grade whose three cumulative thresholds are all met (inclusive).
inline Grade bhs_grade_from_percentages(double p5, double p10, double p15) {
  constexpr std::array<std::array<double, 3>, 3> table{{{60, 85, 95}, {50, 75, 90}, {40, 65, 85}}};
  for (std::size_t g = 0; g < table.size(); ++g)
    if (p5 >= table[g][0] && p10 >= table[g][1] && p15 >= table[g][2]) return static_cast<Grade>(g);
  return Grade::D;
}

inline BhsReport bhs_grade(std::span<const double> errors) {
  if (errors.empty()) throw ContractError("bhs_grade: no errors");
  BhsReport r;
  std::size_t c5 = 0, c10 = 0, c15 = 0;
  for (double e : errors) {
    const double a = std::abs(e);
    c5 += a <= 5.0;
    c10 += a <= 10.0;
    c15 += a <= 15.0;
  }
  const double n = static_cast<double>(errors.size());
  r.pct_le_5 = 100.0 * static_cast<double>(c5) / n;
  r.pct_le_10 = 100.0 * static_cast<double>(c10) / n;
  r.pct_le_15 = 100.0 * static_cast<double>(c15) / n;
  r.grade = bhs_grade_from_percentages(r.pct_le_5, r.pct_le_10, r.pct_le_15);
  return r;
}

struct AamiReport {
  double me = 0, sde = 0;
  std::size_t n_subjects = 0;
  bool numeric_pass = false;
  bool fully_compliant = false;
};

inline constexpr double kAamiMaxMe = 5.0;
inline constexpr double kAamiMaxSde = 8.0;
inline constexpr std::size_t kAamiMinSubjects = 85;

inline AamiReport aami_from_stats(double me, double sde, std::size_t n_subjects) {
  AamiReport r{me, sde, n_subjects, false, false};
  r.numeric_pass = std::abs(me) <= kAamiMaxMe && sde <= kAamiMaxSde;
  r.fully_compliant = r.numeric_pass && n_subjects >= kAamiMinSubjects;
  return r;
}

inline AamiReport aami_check(std::span<const double> pred, std::span<const double> ref, std::size_t n_subjects) {
  const auto s = compute_errors(pred, ref);
  return aami_from_stats(s.me, s.sde, n_subjects);
}

struct BlandAltman {
  double bias = 0, loa_low = 0, loa_high = 0;
  bool degenerate = false;  // zero spread of differences
  std::vector<std::array<double, 2>> pairs;  // (mean of pred and ref, pred - ref)
};

inline BlandAltman bland_altman(std::span<const double> pred, std::span<const double> ref) {
  const auto s = compute_errors(pred, ref);
  BlandAltman b;
  b.bias = s.me;
  b.loa_low = s.me - 1.96 * s.sde;
  b.loa_high = s.me + 1.96 * s.sde;
  b.degenerate = s.sde == 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) b.pairs.push_back({0.5 * (pred[i] + ref[i]), pred[i] - ref[i]});
  return b;
}

/// Counts of errors in [k, k+1) mmHg bins spanning the observed range.
inline std::vector<std::pair<double, std::size_t>> error_histogram(std::span<const double> errors) {
  if (errors.empty()) return {};
  const auto [lo_it, hi_it] = std::minmax_element(errors.begin(), errors.end());
  const double lo = std::floor(*lo_it);
  const auto bins = static_cast<std::size_t>(std::floor(*hi_it) - lo) + 1;
  std::vector<std::pair<double, std::size_t>> out(bins);
  for (std::size_t k = 0; k < bins; ++k) out[k].first = lo + static_cast<double>(k);
  for (double e : errors) ++out[static_cast<std::size_t>(std::floor(e) - lo)].second;
  return out;
}

/// Rounds to 6 significant digits, the precision of every exported number.
inline double quantize(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return std::strtod(buf, nullptr);
}

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

struct SampleRecord {
  std::string subject_id;
  std::string motion_state;
  std::uint32_t window_index = 0;
  double sbp_pred = 0, sbp_ref = 0, dbp_pred = 0, dbp_ref = 0;
};

struct TargetReport {
  ErrorStats stats;
  BhsReport bhs;
  AamiReport aami;
  BlandAltman ba;
  std::vector<double> pred, ref, err;
};

struct EvaluationReport {
  std::size_t n_samples = 0;
  std::size_t n_subjects = 0;
  std::map<std::string, TargetReport> targets;  // sbp, dbp, map
};

/// Quantizes the inputs to export precision, then computes every statistic from those values,
/// so that re-reading the exported tables reproduces the summary.
inline EvaluationReport evaluate(const std::vector<SampleRecord>& records) {
  if (records.empty()) throw ContractError("evaluation set is empty");
  EvaluationReport rep;
  rep.n_samples = records.size();
  std::set<std::string> subjects;
  for (const auto& r : records) subjects.insert(r.subject_id);
  rep.n_subjects = subjects.size();
  auto& s = rep.targets["sbp"];
  auto& d = rep.targets["dbp"];
  auto& m = rep.targets["map"];
  for (const auto& r : records) {
    s.pred.push_back(quantize(r.sbp_pred));
    s.ref.push_back(quantize(r.sbp_ref));
    d.pred.push_back(quantize(r.dbp_pred));
    d.ref.push_back(quantize(r.dbp_ref));
    m.pred.push_back(quantize(map_from_bp(s.pred.back(), d.pred.back())));
    m.ref.push_back(quantize(map_from_bp(s.ref.back(), d.ref.back())));
  }
  for (auto& [name, t] : rep.targets) {
    for (std::size_t i = 0; i < t.pred.size(); ++i) t.err.push_back(t.pred[i] - t.ref[i]);
    t.stats = compute_errors(t.pred, t.ref);
    t.bhs = bhs_grade(t.err);
    t.aami = aami_from_stats(t.stats.me, t.stats.sde, rep.n_subjects);
    t.ba = bland_altman(t.pred, t.ref);
  }
  return rep;
}

inline nlohmann::json report_json(const EvaluationReport& rep) {
  nlohmann::json j;
  j["n_samples"] = rep.n_samples;
  j["n_subjects"] = rep.n_subjects;
  for (const auto& [name, t] : rep.targets) {
    auto& o = j[name];
    o["n"] = t.stats.n;
    o["mae"] = t.stats.mae;
    o["me"] = t.stats.me;
    o["sde"] = t.stats.sde;
    o["rmse"] = t.stats.rmse;
    o["bhs"] = {{"pct_le_5", t.bhs.pct_le_5},
                {"pct_le_10", t.bhs.pct_le_10},
                {"pct_le_15", t.bhs.pct_le_15},
                {"grade", std::string(1, grade_letter(t.bhs.grade))}};
    o["aami"] = {{"me", t.aami.me},
                 {"sde", t.aami.sde},
                 {"n_subjects", t.aami.n_subjects},
                 {"numeric_pass", t.aami.numeric_pass},
                 {"fully_compliant", t.aami.fully_compliant}};
    o["bland_altman"] = {
        {"bias", t.ba.bias}, {"loa_low", t.ba.loa_low}, {"loa_high", t.ba.loa_high}, {"degenerate", t.ba.degenerate}};
  }
  return j;
}

/// Writes report.json, per_sample.csv, bland_altman_{sbp,dbp}.csv and error_hist_{sbp,dbp}.csv.
/// `extra` is merged into the top level of report.json (seed, config hash, provenance).
inline nlohmann::json export_report(const std::vector<SampleRecord>& records, const std::filesystem::path& dir,
                                    const nlohmann::json& extra = nlohmann::json::object()) {
  const EvaluationReport rep = evaluate(records);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  auto open = [&](const std::string& name) {
    std::ofstream f(dir / name);
    if (!f) throw Error("cannot write " + (dir / name).string());
    return f;
  };

  nlohmann::json j = report_json(rep);
  for (const auto& [k, v] : extra.items()) j[k] = v;
  open("report.json") << j.dump(2) << '\n';

  auto ps = open("per_sample.csv");
  ps << "index,subject_id,motion_state,window_index,sbp_pred,sbp_ref,sbp_err,dbp_pred,dbp_ref,dbp_err,map_pred,map_ref,"
        "map_err\n";
  for (std::size_t i = 0; i < records.size(); ++i) {
    ps << i << ',' << records[i].subject_id << ',' << records[i].motion_state << ',' << records[i].window_index;
    for (const char* t : {"sbp", "dbp", "map"}) {
      const auto& tr = rep.targets.at(t);
      ps << ',' << num(tr.pred[i]) << ',' << num(tr.ref[i]) << ',' << num(tr.err[i]);
    }
    ps << '\n';
  }
  for (const char* t : {"sbp", "dbp"}) {
    const auto& tr = rep.targets.at(t);
    auto ba = open(std::string("bland_altman_") + t + ".csv");
    ba << "mean,difference\n";
    for (const auto& [mean, diff] : tr.ba.pairs) ba << num(mean) << ',' << num(diff) << '\n';
    auto h = open(std::string("error_hist_") + t + ".csv");
    h << "bin_low,bin_high,count\n";
    for (const auto& [lo, count] : error_histogram(tr.err)) h << num(lo) << ',' << num(lo + 1.0) << ',' << count << '\n';
  }
  return j;
}

}  // namespace bp6::clinical
