#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <sstream>
#include <vector>

#include "invariant_atlas/dimension.hpp"
#include "invariant_atlas/pipeline/recipes.hpp"
#include "invariant_atlas/pipeline/stages.hpp"
#include "support.hpp"

namespace {

using namespace atlas;
using atlas::testing::circle_points;
using atlas::testing::torus_points;
using atlas::testing::uniform_points;

/// Continuum kernel sum of the uniform unit circle without cutoff:
/// (1/2pi) int exp(-(2 - 2 cos t)/eps) dt = exp(-x) I0(x), x = 2/eps.
double circle_S(double eps) {
  const double x = 2.0 / eps;
  return std::exp(-x) * std::cyl_bessel_i(0.0, x);
}

/// d log S / d log eps = x (1 - I1(x)/I0(x)).
double circle_slope(double eps) {
  const double x = 2.0 / eps;
  return x * (1.0 - std::cyl_bessel_i(1.0, x) / std::cyl_bessel_i(0.0, x));
}

double circle_peak_slope() {
  double best = 0.0;
  for (double t = -3.0; t <= 3.0; t += 1e-4) best = std::max(best, circle_slope(std::exp(t)));
  return best;
}

void expect_valid_scan(const DimensionScan& s, Eigen::Index m, Eigen::Index k) {
  for (std::size_t i = 0; i < s.S_values.size(); ++i) {
    EXPECT_GE(s.S_values[i], 1.0 / static_cast<double>(m));
    EXPECT_LE(s.S_values[i], 1.0);
    if (i > 0) {
      EXPECT_GE(s.S_values[i], s.S_values[i - 1]);
    }
  }
  for (double a : s.slopes) {
    EXPECT_GE(a, -1e-9);
    EXPECT_LE(a, 0.5 * static_cast<double>(k) + 0.1);
  }
  EXPECT_EQ(s.d_int, 2.0 * s.a_max());
  EXPECT_LE(s.band_lo, s.eps_star);
  EXPECT_GE(s.band_hi, s.eps_star);
}

TEST(KernelSum, TwoPointFormula) {
  Eigen::MatrixXd x(2, 3);
  x << 0, 0, 0, 0.3, 0.4, 0.0;
  for (double eps : {0.01, 0.25, 1.0, 7.0}) EXPECT_NEAR(kernel_sum(x, eps, 1.0), (2.0 + 2.0 * std::exp(-0.25 / eps)) / 4.0, 1e-16);
  EXPECT_EQ(kernel_sum(x, 1.0, 0.4), 0.5);  // pair beyond the cutoff
}

TEST(KernelSum, SaturationAndLocalizationLimits) {
  const Eigen::MatrixXd x = uniform_points(200, 3, 1);
  EXPECT_NEAR(kernel_sum(x, 1e12, 10.0), 1.0, 1e-10);
  EXPECT_EQ(kernel_sum(x, 1e-12, 10.0), 1.0 / 200.0);
}

TEST(KernelSum, MatchesBesselOracleOnCircle) {
  const Eigen::Index m = 2000;
  const Eigen::MatrixXd x = circle_points(m, 7);
  const PairDistances pairs(x, 3.0);
  for (double eps = 1.0 / 16; eps <= 16.0; eps *= 2.0) {
    const double expect = 1.0 / m + (1.0 - 1.0 / m) * circle_S(eps);
    EXPECT_NEAR(pairs.kernel_sum(eps) / expect, 1.0, 0.03) << "eps " << eps;
  }
}

TEST(CoarseScan, CircleAndTorusMatchTheContinuumSlope) {
  const double peak = circle_peak_slope();
  EXPECT_NEAR(peak, 0.6089, 1e-3);

  const Eigen::MatrixXd c = circle_points(2000, 11);
  const DimensionScan cs = coarse_scan(c);
  expect_valid_scan(cs, 2000, 2);
  const DimensionScan cr = refine_scan(c, cs);
  expect_valid_scan(cr, 2000, 2);
  EXPECT_NEAR(cr.d_int, 2.0 * peak, 0.04);
  EXPECT_LT(std::abs(cr.d_int - cs.d_int), 0.05);

  // The flat torus is a product of two circles, so S squares and slopes double.
  const Eigen::MatrixXd t = torus_points(4000, 12);
  const DimensionScan ts = coarse_scan(t);
  expect_valid_scan(ts, 4000, 4);
  const DimensionScan tr = refine_scan(t, ts);
  EXPECT_NEAR(tr.d_int, 4.0 * peak, 0.12);
}

TEST(CoarseScan, ScaleCovariance) {
  const Eigen::MatrixXd x = uniform_points(500, 3, 2);
  const DimensionScan a = coarse_scan(x, -20, 4);
  // Scaling anchors by 2 multiplies eps by 4: the grid shifts by two octaves.
  const DimensionScan b = coarse_scan(2.0 * x, -18, 6);
  ASSERT_EQ(a.slopes.size(), b.slopes.size());
  for (std::size_t i = 0; i < a.S_values.size(); ++i) EXPECT_NEAR(b.S_values[i], a.S_values[i], 1e-12 * a.S_values[i]);
  for (std::size_t i = 0; i < a.slopes.size(); ++i) EXPECT_NEAR(b.slopes[i], a.slopes[i], 1e-12);
  EXPECT_NEAR(b.d_int, a.d_int, 1e-12);
  EXPECT_NEAR(b.eps_star, 4.0 * a.eps_star, 1e-12 * b.eps_star);
  EXPECT_DOUBLE_EQ(b.scan_cutoff, 2.0 * a.scan_cutoff);
}

TEST(CoarseScan, UsesBaseTwoGridAndFixedCutoff) {
  const DimensionScan s = coarse_scan(uniform_points(100, 2, 3), -5, 3);
  ASSERT_EQ(s.epsilons.size(), 9u);
  EXPECT_EQ(s.epsilons.front(), 1.0 / 32);
  EXPECT_EQ(s.epsilons.back(), 8.0);
  EXPECT_DOUBLE_EQ(s.scan_cutoff, 4.0);
  EXPECT_EQ(s.slopes.size(), 8u);
  EXPECT_THROW(coarse_scan(uniform_points(10, 2, 3), 3, 3), InvalidArgument);
}

TEST(RefineScan, MinimalScanHasOneSlope) {
  const Eigen::MatrixXd c = circle_points(300, 4);
  const DimensionScan cs = coarse_scan(c);
  const DimensionScan r = refine_scan(c, cs, 2);
  ASSERT_EQ(r.slopes.size(), 1u);
  EXPECT_EQ(r.d_int, 2.0 * r.slopes[0]);
  EXPECT_THROW(refine_scan(c, cs, 1), InvalidArgument);
  EXPECT_THROW(refine_scan(c, DimensionScan{}, 10), InvalidArgument);
}

TEST(CoarseScan, IdenticalAnchorsAreRejected) {
  EXPECT_THROW(coarse_scan(Eigen::MatrixXd::Ones(50, 3)), InvalidArgument);
}

TEST(ScanFile, WritesPlottableColumns) {
  const std::filesystem::path dir = ATLAS_TEST_TMP;
  std::filesystem::create_directories(dir);
  const DimensionScan s = coarse_scan(circle_points(200, 8), -6, 4);
  const auto path = (dir / "scan.txt").string();
  write_scan(path, s);
  const DimensionScan back = read_scan_summary(path);
  EXPECT_EQ(back.eps_star, s.eps_star);
  EXPECT_EQ(back.d_int, s.d_int);
  EXPECT_EQ(back.S_values, s.S_values);
  const io::Table t = io::read_table(path);
  EXPECT_EQ(t.columns, (std::vector<std::string>{"eps", "S", "log_eps", "log_S", "a"}));
  EXPECT_TRUE(std::isnan(t.rows(t.rows.rows() - 1, 4)));
  EXPECT_EQ(t.rows(0, 4), s.slopes[0]);
}

/// Desk-scale KS sweep with 100 test points and a shallow covering; returns eps*.
double ks_eps_star(double mu, const std::string& dir) {
  using namespace atlas::pipeline;
  std::filesystem::remove_all(dir);
  Json file = {{"recipe", "ks"}, {"output", dir}, {"system", {{"ks", {{"mu", mu}}}}}};
  const ExperimentConfig cfg =
      resolve_config(file, Scale::desk, 1, {"covering.n_test_points=100", "covering.depth=35"});
  std::ostringstream log;
  Runner runner(cfg, log);
  for (Stage s : {Stage::simulate, Stage::pod, Stage::cover, Stage::dimscan}) runner.run(s);
  return read_scan_summary((std::filesystem::path(dir) / artifact::scan).string()).eps_star;
}

TEST(RefineScan, KsEpsStarGrowsFromMu15ToMu18) {
  const std::filesystem::path dir = ATLAS_TEST_TMP;
  const double e15 = ks_eps_star(15.0, (dir / "ks15").string());
  const double e18 = ks_eps_star(18.0, (dir / "ks18").string());
  EXPECT_GT(e18, e15);
}

}  // namespace
