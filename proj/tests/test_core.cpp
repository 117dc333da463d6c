#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <vector>

#include "invariant_atlas/core/kdtree.hpp"
#include "invariant_atlas/core/lanczos.hpp"
#include "invariant_atlas/core/numeric.hpp"
#include "invariant_atlas/core/parallel.hpp"
#include "invariant_atlas/core/text_io.hpp"

namespace {

using namespace atlas;

Eigen::MatrixXd random_points(Eigen::Index n, Eigen::Index k, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd x(n, k);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < k; ++j) x(i, j) = rng.symmetric();
  return x;
}

TEST(PairwiseSum, MatchesLongDoubleAccumulation) {
  Rng rng(7);
  std::vector<double> xs(10007);
  for (double& x : xs) x = rng.uniform() * 1e3;
  long double ref = 0;
  for (double x : xs) ref += x;
  EXPECT_NEAR(pairwise_sum(xs), static_cast<double>(ref), 1e-9 * static_cast<double>(ref));
  EXPECT_EQ(pairwise_sum(std::vector<double>{}), 0.0);
}

TEST(Rng, SeededStreamsRepeatAndStayInRange) {
  Rng a(42), b(42), c(43);
  bool differs = false;
  for (int i = 0; i < 1000; ++i) {
    const double x = a.uniform();
    EXPECT_EQ(x, b.uniform());
    EXPECT_GE(x, 0.0);
    EXPECT_LT(x, 1.0);
    differs |= x != c.uniform();
  }
  EXPECT_TRUE(differs);
  for (int i = 0; i < 1000; ++i) EXPECT_LT(a.below(7), 7u);
}

TEST(ParallelFor, VisitsEveryIndexOnceAndPropagatesErrors) {
  std::vector<int> hits(1000, 0);
  parallel_for(hits.size(), [&](std::size_t i) { hits[i] += 1; }, 4);
  EXPECT_TRUE(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));
  EXPECT_THROW(parallel_for(10, [](std::size_t i) { if (i == 5) throw std::runtime_error("x"); }, 3),
               std::runtime_error);
}

TEST(KdTree, RadiusSearchMatchesBruteForce) {
  const Eigen::MatrixXd x = random_points(600, 3, 11);
  const KdTree tree(x, 8);
  const Eigen::MatrixXd q = random_points(40, 3, 12);
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    const double r = 0.35;
    std::vector<std::size_t> expect;
    for (Eigen::Index j = 0; j < x.rows(); ++j)
      if ((x.row(j) - q.row(i)).squaredNorm() <= r * r) expect.push_back(static_cast<std::size_t>(j));
    const auto got = tree.radius_search(q.row(i), r);
    ASSERT_EQ(got.size(), expect.size());
    for (std::size_t t = 0; t < got.size(); ++t) {
      EXPECT_EQ(got[t].index, expect[t]);
      EXPECT_DOUBLE_EQ(got[t].dist2, (x.row(static_cast<Eigen::Index>(expect[t])) - q.row(i)).squaredNorm());
    }
  }
}

TEST(KdTree, NearestMatchesBruteForce) {
  const Eigen::MatrixXd x = random_points(500, 4, 21);
  const KdTree tree(x);
  const Eigen::MatrixXd q = random_points(30, 4, 22);
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    std::vector<std::pair<double, std::size_t>> all;
    for (Eigen::Index j = 0; j < x.rows(); ++j) all.push_back({(x.row(j) - q.row(i)).squaredNorm(), j});
    std::sort(all.begin(), all.end());
    const auto got = tree.nearest(q.row(i), 9);
    ASSERT_EQ(got.size(), 9u);
    for (std::size_t t = 0; t < 9; ++t) EXPECT_EQ(got[t].index, all[t].second);
  }
  EXPECT_EQ(tree.nearest(q.row(0), 1000).size(), 500u);
}

TEST(Lanczos, MatchesDenseEigensolverWithRestarts) {
  const Eigen::Index n = 400;
  Eigen::MatrixXd a = random_points(n, n, 5);
  a = (a + a.transpose()).eval() / 2.0;
  LanczosOptions opt;
  opt.ncv = 30;
  const EigenPairs eig = lanczos_largest([&](const auto& x, Eigen::VectorXd& y) { y.noalias() = a * x; }, n, 6, opt);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> dense(a);
  ASSERT_TRUE(eig.converged);
  EXPECT_GT(eig.restarts, 0);
  for (Eigen::Index i = 0; i < 6; ++i) {
    EXPECT_NEAR(eig.values(i), dense.eigenvalues()(n - 1 - i), 1e-9);
    const Eigen::VectorXd r = a * eig.vectors.col(i) - eig.values(i) * eig.vectors.col(i);
    EXPECT_LE(r.norm(), 1e-9);
  }
}

TEST(Lanczos, IdentityAndTinyProblems) {
  const EigenPairs eig = lanczos_largest([](const auto& x, Eigen::VectorXd& y) { y = x; }, 3, 3);
  ASSERT_EQ(eig.values.size(), 3);
  for (Eigen::Index i = 0; i < 3; ++i) EXPECT_NEAR(eig.values(i), 1.0, 1e-14);
  EXPECT_NEAR((eig.vectors.transpose() * eig.vectors - Eigen::MatrixXd::Identity(3, 3)).norm(), 0.0, 1e-12);
}

TEST(Lanczos, DeterministicForFixedSeed) {
  const Eigen::Index n = 300;
  Eigen::MatrixXd a = random_points(n, n, 8);
  a = (a * a.transpose()).eval();
  auto run = [&] {
    return lanczos_largest([&](const auto& x, Eigen::VectorXd& y) { y.noalias() = a * x; }, n, 5);
  };
  const EigenPairs e1 = run(), e2 = run();
  EXPECT_EQ(e1.values, e2.values);
  EXPECT_EQ(e1.vectors, e2.vectors);
}

TEST(TextIo, TableRoundTripIsExact) {
  const std::filesystem::path dir = ATLAS_TEST_TMP;
  std::filesystem::create_directories(dir);
  io::Table t;
  t.meta.push_back({"kind", {"demo", "1"}});
  t.columns = {"a", "b"};
  t.rows.resize(3, 2);
  t.rows << 0.1, -1e-300, 1.0 / 3.0, 12345.678, std::nan(""), -0.0;
  const auto path = (dir / "table.txt").string();
  io::write_table(path, t);
  const io::Table back = io::read_table(path);
  EXPECT_EQ(back.columns, t.columns);
  EXPECT_EQ(back.require_meta("kind")[1], "1");
  for (Eigen::Index i = 0; i < 3; ++i)
    for (Eigen::Index j = 0; j < 2; ++j) {
      if (std::isnan(t.rows(i, j))) EXPECT_TRUE(std::isnan(back.rows(i, j)));
      else EXPECT_EQ(back.rows(i, j), t.rows(i, j));
    }
}

}  // namespace
