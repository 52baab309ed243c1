#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "bp6/clinical.hpp"

namespace {

using namespace bp6::clinical;
namespace fs = std::filesystem;

TEST(ErrorStats, Examples) {
  const std::vector<double> ref{120, 110, 95};
  const auto zero = compute_errors(ref, ref);
  EXPECT_EQ(zero.mae, 0.0);
  EXPECT_EQ(zero.me, 0.0);
  EXPECT_EQ(zero.sde, 0.0);
  EXPECT_EQ(zero.rmse, 0.0);

  const std::vector<double> p{121, 99}, r{120, 100};
  const auto s = compute_errors(p, r);
  EXPECT_DOUBLE_EQ(s.mae, 1.0);
  EXPECT_DOUBLE_EQ(s.me, 0.0);
  EXPECT_NEAR(s.sde, std::sqrt(2.0), 1e-15);
  EXPECT_DOUBLE_EQ(s.rmse, 1.0);
  EXPECT_EQ(s.n, 2u);

  EXPECT_THROW(compute_errors(std::vector<double>{1, 2}, std::vector<double>{1}), bp6::ContractError);
  EXPECT_THROW(compute_errors(std::vector<double>{1}, std::vector<double>{1}), bp6::ContractError);
}

TEST(ErrorStats, SimulatedSdeInsideInterval) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 4.0);
  std::vector<double> p(1000), r(1000, 100.0);
  for (auto& v : p) v = 100.0 + n(rng);
  const auto s = compute_errors(p, r);
  EXPECT_GE(s.sde, 3.6);
  EXPECT_LE(s.sde, 4.4);
}

TEST(ErrorStats, IdentitiesOnRandomVectors) {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> len(2, 60);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 2000; ++trial) {
    const int k = len(rng);
    const double shift = 5.0 * n(rng), spread = std::exp(n(rng));
    std::vector<double> p(k), r(k, 0.0);
    for (auto& v : p) v = shift + spread * n(rng);
    const auto s = compute_errors(p, r);
    EXPECT_LE(s.mae, s.rmse * (1 + 1e-15));
    const double rhs = s.me * s.me + s.sde * s.sde * (k - 1) / k;
    EXPECT_LE(std::abs(s.rmse * s.rmse - rhs), 1e-9 * rhs);
  }
}

TEST(Map, Formula) {
  EXPECT_NEAR(map_from_bp(120, 80), 93.33333333333333, 1e-12);
  EXPECT_EQ(map_from_bp(97, 97), 97.0);
  EXPECT_NE(map_from_bp(120, 80), (2 * 120 + 80) / 3.0);
}

TEST(Bhs, PublishedRowsAreGradeA) {
  EXPECT_EQ(bhs_grade_from_percentages(73.56, 96.47, 99.68), Grade::A);
  EXPECT_EQ(bhs_grade_from_percentages(82.37, 97.28, 100.00), Grade::A);
  EXPECT_EQ(bhs_grade_from_percentages(85.90, 98.40, 99.84), Grade::A);
}

TEST(Bhs, InclusiveBoundariesAndLowerGrades) {
  EXPECT_EQ(bhs_grade_from_percentages(60, 85, 95), Grade::A);
  EXPECT_EQ(bhs_grade_from_percentages(59.99, 85, 95), Grade::B);
  EXPECT_EQ(bhs_grade_from_percentages(50, 75, 90), Grade::B);
  EXPECT_EQ(bhs_grade_from_percentages(40, 65, 85), Grade::C);
  EXPECT_EQ(bhs_grade_from_percentages(39, 90, 99), Grade::D);

  const std::vector<double> fours(10, 4.0);
  const auto r = bhs_grade(fours);
  EXPECT_EQ(r.pct_le_5, 100.0);
  EXPECT_EQ(r.grade, Grade::A);

  // An error of exactly 5 falls in the <= 5 bucket.
  const auto edge = bhs_grade(std::vector<double>{5.0, -5.0, 10.0, 15.0});
  EXPECT_EQ(edge.pct_le_5, 50.0);
  EXPECT_EQ(edge.pct_le_10, 75.0);
  EXPECT_EQ(edge.pct_le_15, 100.0);
}

TEST(Bhs, PercentagesMonotoneAndZeroErrorNeverHurts) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 8.0);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<double> e(1 + trial % 40);
    for (auto& v : e) v = n(rng);
    const auto a = bhs_grade(e);
    EXPECT_LE(a.pct_le_5, a.pct_le_10);
    EXPECT_LE(a.pct_le_10, a.pct_le_15);
    e.push_back(0.0);
    EXPECT_LE(static_cast<int>(bhs_grade(e).grade), static_cast<int>(a.grade));
  }
}

TEST(Aami, PublishedRows) {
  const auto s = aami_from_stats(-0.11, 4.62, 22);
  EXPECT_TRUE(s.numeric_pass);
  EXPECT_FALSE(s.fully_compliant);
  const auto d = aami_from_stats(0.57, 3.93, 22);
  EXPECT_TRUE(d.numeric_pass);
  EXPECT_FALSE(d.fully_compliant);
  EXPECT_FALSE(aami_from_stats(6.0, 3.0, 100).numeric_pass);
  EXPECT_TRUE(aami_from_stats(-5.0, 8.0, 85).fully_compliant);
}

TEST(Aami, NumericPassIsConjunction) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> me(-8, 8), sde(0, 12);
  for (int i = 0; i < 1000; ++i) {
    const double a = me(rng), b = sde(rng);
    EXPECT_EQ(aami_from_stats(a, b, 22).numeric_pass, std::abs(a) <= 5.0 && b <= 8.0);
  }
  const std::vector<double> p{101, 99, 100.5}, r{100, 100, 100};
  const auto c = aami_check(p, r, 90);
  EXPECT_TRUE(c.fully_compliant);
}

TEST(BlandAltman, Examples) {
  const std::vector<double> r{100, 110};
  const auto same = bland_altman(r, r);
  EXPECT_EQ(same.bias, 0.0);
  EXPECT_EQ(same.loa_low, 0.0);
  EXPECT_EQ(same.loa_high, 0.0);
  EXPECT_TRUE(same.degenerate);

  const auto b = bland_altman(std::vector<double>{101, 109}, r);
  EXPECT_EQ(b.bias, 0.0);
  EXPECT_NEAR(b.loa_high, 1.96 * std::sqrt(2.0), 1e-12);
  EXPECT_NEAR(b.loa_low, -2.7718585822512662, 1e-12);
  EXPECT_FALSE(b.degenerate);
  ASSERT_EQ(b.pairs.size(), 2u);
  EXPECT_EQ(b.pairs[0][0], 100.5);
  EXPECT_EQ(b.pairs[0][1], 1.0);
}

TEST(BlandAltman, GaussianCoverage) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(1.5, 3.0);
  std::vector<double> p(10000), r(10000, 0.0);
  for (auto& v : p) v = n(rng);
  const auto b = bland_altman(p, r);
  std::size_t inside = 0;
  for (double v : p) inside += v >= b.loa_low && v <= b.loa_high;
  const double frac = static_cast<double>(inside) / 10000.0;
  EXPECT_GE(frac, 0.94);
  EXPECT_LE(frac, 0.96);
}

TEST(Histogram, UnitBins) {
  const auto h = error_histogram(std::vector<double>{-1.5, -0.2, 0.0, 0.99, 2.0});
  ASSERT_EQ(h.size(), 5u);
  EXPECT_EQ(h[0], (std::pair<double, std::size_t>{-2.0, 1}));
  EXPECT_EQ(h[1], (std::pair<double, std::size_t>{-1.0, 1}));
  EXPECT_EQ(h[2], (std::pair<double, std::size_t>{0.0, 2}));
  EXPECT_EQ(h[3].second, 0u);
  EXPECT_EQ(h[4], (std::pair<double, std::size_t>{2.0, 1}));
}

std::vector<SampleRecord> records(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> e(0.0, 4.0);
  std::uniform_real_distribution<double> s(95, 140), d(60, 90);
  std::vector<SampleRecord> out;
  for (std::size_t i = 0; i < n; ++i) {
    const double sr = s(rng), dr = d(rng);
    out.push_back({"s" + std::to_string(i % 5), "run", static_cast<std::uint32_t>(i), sr + e(rng), sr, dr + e(rng), dr});
  }
  return out;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    rows.push_back(f);
  }
  return rows;
}

TEST(Export, SchemaAndRoundTrip) {
  const fs::path dir = fs::temp_directory_path() / ("bp6_export_" + std::to_string(::getpid()));
  const auto recs = records(137, 6);
  const auto j = export_report(recs, dir, {{"seed", 6}, {"config_hash", "feed"}});
  for (const char* t : {"sbp", "dbp", "map"})
    for (const char* k : {"mae", "me", "sde", "rmse", "bhs", "aami"}) EXPECT_TRUE(j[t].contains(k)) << t << "." << k;
  EXPECT_EQ(j["seed"], 6);
  EXPECT_EQ(j["n_subjects"], 5);

  std::ifstream jf(dir / "report.json");
  const auto reread = nlohmann::json::parse(jf);
  const auto rows = read_csv(dir / "per_sample.csv");
  ASSERT_EQ(rows.size(), 138u);
  EXPECT_EQ(rows[0][4], "sbp_pred");
  const std::map<std::string, int> col{{"sbp", 4}, {"dbp", 7}, {"map", 10}};
  for (const auto& [t, c] : col) {
    std::vector<double> p, r;
    for (std::size_t i = 1; i < rows.size(); ++i) {
      p.push_back(std::stod(rows[i][c]));
      r.push_back(std::stod(rows[i][c + 1]));
    }
    const auto s = compute_errors(p, r);
    for (auto [name, v] : {std::pair{"mae", s.mae}, {"me", s.me}, {"sde", s.sde}, {"rmse", s.rmse}}) {
      const double want = reread[t][name].get<double>();
      EXPECT_NEAR(v, want, 1e-9 * std::max(1.0, std::abs(want))) << t << " " << name;
    }
  }
  EXPECT_TRUE(fs::exists(dir / "bland_altman_sbp.csv"));
  EXPECT_TRUE(fs::exists(dir / "bland_altman_dbp.csv"));
  const auto hist = read_csv(dir / "error_hist_dbp.csv");
  std::size_t total = 0;
  for (std::size_t i = 1; i < hist.size(); ++i) total += std::stoul(hist[i][2]);
  EXPECT_EQ(total, 137u);
  fs::remove_all(dir);
}

TEST(Export, EmptySetRefused) {
  EXPECT_THROW(export_report({}, fs::temp_directory_path() / "bp6_never"), bp6::ContractError);
}

}  // namespace
