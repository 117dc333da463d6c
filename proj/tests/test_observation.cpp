#include <gtest/gtest.h>

#include <Eigen/SVD>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <vector>

#include "invariant_atlas/core/numeric.hpp"
#include "invariant_atlas/dynamics.hpp"
#include "invariant_atlas/observation.hpp"

namespace {

using namespace atlas;

StateVector ks_state(const Eigen::VectorXd& v) { return StateVector{v, SystemKind::ks}; }

std::vector<StateVector> random_smooth_snapshots(int n, int count, int modes, std::uint64_t seed) {
  Rng rng(seed);
  const Eigen::VectorXd x = KuramotoSivashinsky::grid(n);
  std::vector<StateVector> out;
  for (int s = 0; s < count; ++s) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(n);
    for (int k = 1; k <= modes; ++k) {
      const double amp = 1.0 / (k * k);
      v += amp * rng.symmetric() * (k * x.array()).cos().matrix() + amp * rng.symmetric() * (k * x.array()).sin().matrix();
    }
    out.push_back(ks_state(v));
  }
  return out;
}

TEST(PodBasis, RankOneSnapshots) {
  const int n = 64;
  const Eigen::VectorXd c = KuramotoSivashinsky::grid(n).array().cos();
  const PODBasis b = build_pod_basis({ks_state(c), ks_state(2.0 * c)}, 1);
  const double w = periodic_grid_weight(n);
  // ||cos||^2 = pi on [0, 2pi); the weighted stack norm is sqrt(w * (1 + 4) * sum cos^2).
  EXPECT_NEAR(b.singular_values(0), std::sqrt(w * 5.0 * c.squaredNorm()), 1e-12);
  EXPECT_LT((b.vectors.col(0) - c / std::sqrt(std::numbers::pi)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_THROW(build_pod_basis({ks_state(c), ks_state(2.0 * c)}, 2), InvalidArgument);
}

TEST(PodBasis, OrthogonalInputGramIsIdentity) {
  const Eigen::VectorXd x = KuramotoSivashinsky::grid(64);
  const PODBasis b = build_pod_basis({ks_state(x.array().sin()), ks_state(x.array().cos())}, 2);
  EXPECT_LE((b.gram() - Eigen::Matrix2d::Identity()).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_GE(b.singular_values(0), b.singular_values(1));
  for (Eigen::Index i = 0; i < 2; ++i) {
    Eigen::Index arg;
    b.vectors.col(i).cwiseAbs().maxCoeff(&arg);
    EXPECT_GT(b.vectors(arg, i), 0.0);
  }
}

TEST(PodBasis, RandomRankThreeMatchesDenseSvd) {
  const int n = 32;
  Rng rng(9);
  Eigen::MatrixXd factors(n, 3);
  for (Eigen::Index i = 0; i < factors.size(); ++i) factors.data()[i] = rng.symmetric();
  std::vector<StateVector> snaps;
  for (int s = 0; s < 20; ++s) snaps.push_back(ks_state(factors * Eigen::Vector3d(rng.symmetric(), rng.symmetric(), rng.symmetric())));
  const PODBasis b = build_pod_basis(snaps, 3);

  // Oracle: dense SVD of the explicitly assembled, weighted snapshot matrix.
  const double w = periodic_grid_weight(n);
  Eigen::MatrixXd m(n, 20);
  for (int s = 0; s < 20; ++s) m.col(s) = std::sqrt(w) * snaps[static_cast<std::size_t>(s)].values;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeThinU);
  EXPECT_LT((b.singular_values - svd.singularValues().head(3)).cwiseAbs().maxCoeff(), 1e-10 * svd.singularValues()(0));
  for (const auto& s : snaps) {
    const StateVector r = pod_reconstruct(pod_observe(s, b), b);
    EXPECT_LE((r.values - s.values).norm(), 1e-8 * s.values.norm());
  }
  EXPECT_THROW(build_pod_basis(snaps, 4), InvalidArgument);
}

TEST(PodObserve, Examples) {
  const auto snaps = random_smooth_snapshots(64, 40, 6, 1);
  const PODBasis b = build_pod_basis(snaps, 5);
  const ObservedPoint e1 = pod_observe(ks_state(b.vectors.col(0)), b);
  Eigen::VectorXd unit = Eigen::VectorXd::Zero(5);
  unit(0) = 1.0;
  EXPECT_LT((e1.coords - unit).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_EQ(pod_observe(ks_state(Eigen::VectorXd::Zero(64)), b).coords, Eigen::VectorXd::Zero(5));
  const ObservedPoint c = pod_observe(ks_state(2.0 * b.vectors.col(0) + 3.0 * b.vectors.col(1)), b);
  Eigen::VectorXd expect = Eigen::VectorXd::Zero(5);
  expect << 2.0, 3.0, 0.0, 0.0, 0.0;
  EXPECT_LT((c.coords - expect).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_THROW(pod_observe(ks_state(Eigen::VectorXd::Zero(32)), b), InvalidArgument);
}

TEST(PodObserve, IsLinear) {
  const auto snaps = random_smooth_snapshots(64, 40, 8, 2);
  const PODBasis b = build_pod_basis(snaps, 7);
  const Eigen::VectorXd u = snaps[3].values, v = snaps[17].values;
  const double a = 1.7, c = -0.4;
  const Eigen::VectorXd lhs = pod_observe(ks_state(a * u + c * v), b).coords;
  const Eigen::VectorXd rhs = a * pod_observe(ks_state(u), b).coords + c * pod_observe(ks_state(v), b).coords;
  EXPECT_LE((lhs - rhs).norm(), 1e-12 * rhs.norm());
}

TEST(PodBasis, ReconstructionErrorDecreasesWithK) {
  const auto snaps = random_smooth_snapshots(64, 60, 10, 3);
  double prev = INFINITY;
  for (Eigen::Index k = 1; k <= 12; ++k) {
    const PODBasis b = build_pod_basis(snaps, k);
    double err = 0.0;
    for (const auto& s : snaps) err += (pod_reconstruct(pod_observe(s, b), b).values - s.values).squaredNorm();
    EXPECT_LE(err, prev);
    prev = err;
  }
}

TEST(PodBasis, FileRoundTrip) {
  const std::filesystem::path dir = ATLAS_TEST_TMP;
  std::filesystem::create_directories(dir);
  const PODBasis b = build_pod_basis(random_smooth_snapshots(32, 20, 5, 4), 4);
  const auto path = (dir / "pod_basis.txt").string();
  write_pod_basis(path, b);
  const PODBasis back = read_pod_basis(path);
  EXPECT_EQ(back.vectors, b.vectors);
  EXPECT_EQ(back.singular_values, b.singular_values);
  EXPECT_EQ(back.grid_weight, b.grid_weight);
}

TEST(DelayObserve, Examples) {
  const MackeyGlass mg(MGConfig{2.0, 1.0, 9.65, 2.0, 120});
  EXPECT_EQ(delay_observe(mg.constant_history(0.8), 7).coords, Eigen::VectorXd::Constant(7, 0.8));

  StateVector lin = mg.constant_history(0.0);
  for (Eigen::Index j = 0; j <= 120; ++j) lin.values(j) = -2.0 + 2.0 * j / 120.0;
  EXPECT_LT((delay_observe(lin, 3).coords - Eigen::Vector3d(-2.0, -1.0, 0.0)).cwiseAbs().maxCoeff(), 1e-15);

  // k = 7 on [-2, 0]: samples at -2, -5/3, ..., 0.
  Eigen::VectorXd expect(7);
  for (int j = 0; j < 7; ++j) expect(j) = -2.0 + j / 3.0;
  EXPECT_LT((delay_observe(lin, 7).coords - expect).cwiseAbs().maxCoeff(), 1e-14);

  // Off-grid offsets (n_h = 100 does not divide by 6) are exact for linear data too.
  const MackeyGlass mg100(MGConfig{2.0, 1.0, 9.65, 2.0, 100});
  StateVector lin100 = mg100.constant_history(0.0);
  for (Eigen::Index j = 0; j <= 100; ++j) lin100.values(j) = -2.0 + 2.0 * j / 100.0;
  EXPECT_LT((delay_observe(lin100, 7).coords - expect).cwiseAbs().maxCoeff(), 1e-13);

  EXPECT_THROW(delay_observe(lin, 1), InvalidArgument);
  EXPECT_THROW(delay_observe(StateVector{Eigen::VectorXd::Zero(10), SystemKind::ks}, 3), InvalidArgument);
}

TEST(DelayObserve, MatchesDenseOutputOfTheIntegrator) {
  for (int nh : {120, 100}) {
    const MackeyGlass mg(MGConfig{2.0, 1.0, 9.65, 2.0, nh});
    StateVector u = mg.constant_history(0.0);
    for (Eigen::Index j = 0; j <= nh; ++j) u.values(j) = 0.6 + 0.3 * std::sin(3.0 * j / nh);
    const double T = 10.0;
    const DenseSolution sol = mg.solve(u, T);
    const Eigen::VectorXd delays = delay_observe(mg.advance(u, T), 7).coords;
    for (int j = 0; j < 7; ++j) {
      const double t = T - 2.0 + 2.0 * j / 6.0;
      if (nh == 120) EXPECT_EQ(delays(j), sol(t));
      else EXPECT_NEAR(delays(j), sol(t), 1e-6);
    }
  }
}

TEST(ObservationMap, DispatchesToBothKinds) {
  const ObservationMap d = ObservationMap::delay(7);
  EXPECT_EQ(d.dim(), 7);
  const MackeyGlass mg(MGConfig{2.0, 1.0, 9.65, 2.0, 120});
  EXPECT_EQ(d(mg.constant_history(0.3)).coords, Eigen::VectorXd::Constant(7, 0.3));
  const PODBasis b = build_pod_basis(random_smooth_snapshots(32, 20, 5, 5), 3);
  const ObservationMap p = ObservationMap::pod(b);
  EXPECT_EQ(p.dim(), 3);
  EXPECT_EQ(p(ks_state(b.vectors.col(2))).coords, pod_observe(ks_state(b.vectors.col(2)), b).coords);
}

}  // namespace
