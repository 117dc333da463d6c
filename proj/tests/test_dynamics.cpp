#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <vector>

#include "invariant_atlas/dynamics.hpp"

namespace {

using namespace atlas;

StateVector ks_initial(int n) {
  const Eigen::VectorXd x = KuramotoSivashinsky::grid(n);
  return StateVector{(1e-4 * x.array().cos() * (1.0 + x.array().sin())).matrix(), SystemKind::ks};
}

StateVector ks_smooth(int n) {
  const Eigen::VectorXd x = KuramotoSivashinsky::grid(n);
  return StateVector{(x.array().sin() + 0.5 * (2.0 * x.array()).cos() - 0.3 * (3.0 * x.array()).sin()).matrix(),
                     SystemKind::ks};
}

KuramotoSivashinsky ks(double mu, int n = 64, double dt = 0.01) { return KuramotoSivashinsky(KSConfig{mu, n, dt}); }

MGConfig mg_paper() { return MGConfig{2.0, 1.0, 9.65, 2.0, 120}; }

TEST(KuramotoSivashinsky, ZeroHorizonIsIdentity) {
  const StateVector u = ks_smooth(64);
  EXPECT_EQ(ks(15.0).advance(u, 0.0).values, u.values);
}

TEST(KuramotoSivashinsky, SubcriticalMuDecaysToZero) {
  const auto sys = ks(3.0);
  StateVector u = ks_initial(64);
  double prev = u.values.norm();
  for (int i = 0; i < 20; ++i) {
    u = sys.advance(u, 10.0);
    const double now = u.values.norm();
    EXPECT_LE(now, prev);
    prev = now;
  }
  EXPECT_LT(u.values.cwiseAbs().maxCoeff(), 1e-6);
}

TEST(KuramotoSivashinsky, LinearDecayRatesMatchExactSolution) {
  // For mu < 4 and tiny data the dynamics is linear: mode k decays by exp((-4k^4 + mu k^2) T).
  const auto sys = ks(3.0);
  const Eigen::VectorXd x = KuramotoSivashinsky::grid(64);
  const double a = 1e-9;
  const StateVector u{(a * x.array().cos()).matrix(), SystemKind::ks};
  const StateVector v = sys.advance(u, 0.5);
  const double expect = a * std::exp((-4.0 + 3.0) * 0.5);
  EXPECT_NEAR(v.values(0), expect, 1e-6 * expect);
}

TEST(KuramotoSivashinsky, SettlesOnTravelingWaveAtMu15) {
  const auto sys = ks(15.0);
  StateVector u = sys.advance(ks_initial(64), 400.0);
  double lo = 1e300, hi = 0.0;
  for (int i = 0; i < 100; ++i) {
    u = sys.advance(u, 0.2);
    const double n = u.values.norm();
    lo = std::min(lo, n);
    hi = std::max(hi, n);
  }
  EXPECT_GT(lo, 1.0);
  EXPECT_LT((hi - lo) / hi, 1e-3);
}

TEST(KuramotoSivashinsky, FourthOrderSelfConvergence) {
  const StateVector u = ks_smooth(64);
  const double T = 10.0;
  // Coarser steps sit in the stiff order-reduction regime (factor ~4 to ~12).
  const Eigen::VectorXd a = ks(4.5, 64, 0.005).advance(u, T).values;
  const Eigen::VectorXd b = ks(4.5, 64, 0.0025).advance(u, T).values;
  const Eigen::VectorXd c = ks(4.5, 64, 0.00125).advance(u, T).values;
  const double ratio = (a - b).cwiseAbs().maxCoeff() / (b - c).cwiseAbs().maxCoeff();
  EXPECT_GT(ratio, 12.0);
  EXPECT_LT(ratio, 20.0);
}

TEST(KuramotoSivashinsky, PartialFinalStepLandsOnHorizon) {
  // The error at 0.105 (ten steps plus a half step) should match the error at
  // the neighbouring whole-step horizons; a lone half step is nearly exact.
  const auto coarse = ks(15.0, 64, 0.01);
  const auto fine = ks(15.0, 64, 0.0001);
  const StateVector u = ks_smooth(64);
  auto err = [&](double t) { return (coarse.advance(u, t).values - fine.advance(u, t).values).cwiseAbs().maxCoeff(); };
  EXPECT_LE(err(0.105), 1.2 * std::max(err(0.1), err(0.11)));
  EXPECT_GE(err(0.105), 0.8 * std::min(err(0.1), err(0.11)));
  // A lone partial step of length r is one full step with dt = r.
  EXPECT_LT((coarse.advance(u, 0.005).values - ks(15.0, 64, 0.005).advance(u, 0.005).values).cwiseAbs().maxCoeff(),
            1e-12);
}

TEST(KuramotoSivashinsky, BitwiseDeterministic) {
  const auto sys = ks(18.0);
  const StateVector u = ks_smooth(64);
  EXPECT_EQ(sys.advance(u, 3.0).values, sys.advance(u, 3.0).values);
}

TEST(KuramotoSivashinsky, RejectsBadInput) {
  EXPECT_THROW(ks(15.0, 48), InvalidArgument);
  EXPECT_THROW(ks(-1.0), InvalidArgument);
  StateVector u = ks_smooth(64);
  EXPECT_THROW(ks(15.0).advance(u, -1.0), InvalidArgument);
  u.values(3) = std::nan("");
  try {
    ks(15.0).advance(u, 1.0);
    FAIL();
  } catch (const IntegrationDiverged& e) {
    EXPECT_EQ(e.step(), 0u);
  }
}

TEST(KuramotoSivashinsky, BlowUpReportsStepIndex) {
  // A huge state with a coarse step overflows within a few steps.
  const auto sys = ks(32.0, 16, 0.5);
  StateVector u = ks_smooth(16);
  u.values *= 1e6;
  try {
    sys.advance(u, 100.0);
    FAIL();
  } catch (const IntegrationDiverged& e) {
    EXPECT_GT(e.step(), 0u);
    EXPECT_LE(e.step(), 200u);
  }
}

TEST(MackeyGlass, EquilibriumIsStationary) {
  const MGConfig cfg = mg_paper();
  EXPECT_DOUBLE_EQ(cfg.equilibrium(), 1.0);
  const MackeyGlass mg(cfg);
  const StateVector u = mg.advance(mg.constant_history(1.0), 50.0);
  EXPECT_LE((u.values.array() - 1.0).abs().maxCoeff(), 1e-10 * 50.0);

  MGConfig other{3.0, 1.0, 4.0, 2.0, 100};
  const double ue = std::pow(2.0, 0.25);
  EXPECT_NEAR(other.equilibrium(), ue, 1e-15);
  const MackeyGlass mg2(other);
  const StateVector v = mg2.advance(mg2.constant_history(ue), 20.0);
  EXPECT_LE((v.values.array() - ue).abs().maxCoeff(), 1e-10 * 20.0);
}

TEST(MackeyGlass, ZeroHorizonIsIdentity) {
  const MackeyGlass mg(mg_paper());
  const StateVector u = mg.constant_history(0.7);
  EXPECT_EQ(mg.advance(u, 0.0).values, u.values);
}

TEST(MackeyGlass, ChaoticRegimeStaysPositiveAndBounded) {
  const MackeyGlass mg(mg_paper());
  Rng rng(3);
  for (int trial = 0; trial < 3; ++trial) {
    StateVector u = mg.constant_history(0.0);
    const double a = 0.2 + rng.uniform(), b = 0.3 * rng.uniform(), w = 1.0 + 2.0 * rng.uniform();
    for (Eigen::Index j = 0; j < u.values.size(); ++j) u.values(j) = a + b * std::sin(w * j * 2.0 / 120.0);
    u = mg.advance(u, 200.0);
    double lo = 1e300, hi = -1e300;
    std::vector<double> peaks;
    for (int i = 0; i < 300; ++i) {
      u = mg.advance(u, 2.0);
      lo = std::min(lo, u.values.minCoeff());
      hi = std::max(hi, u.values.maxCoeff());
    }
    EXPECT_GT(lo, 0.0);
    EXPECT_LT(hi, 1.5);
    EXPECT_GT(hi - lo, 0.5);  // not collapsed onto the equilibrium
  }
}

TEST(MackeyGlass, SolutionIsFourthOrderInDt) {
  auto run = [](int nh) {
    MGConfig cfg = mg_paper();
    cfg.n_history = nh;
    const MackeyGlass mg(cfg);
    StateVector u = mg.constant_history(0.0);
    for (Eigen::Index j = 0; j <= nh; ++j) u.values(j) = 0.5 + 0.2 * std::cos(2.0 * j / nh);
    return mg.advance(u, 4.0).values;
  };
  const Eigen::VectorXd a = run(40), b = run(80), c = run(160);
  // Compare the present value u(0).
  const double e1 = std::abs(a(a.size() - 1) - b(b.size() - 1));
  const double e2 = std::abs(b(b.size() - 1) - c(c.size() - 1));
  EXPECT_GT(e1 / e2, 8.0);
}

TEST(MackeyGlass, RejectsBadInput) {
  EXPECT_THROW(MackeyGlass(MGConfig{2.0, 1.0, 9.65, -2.0, 100}), InvalidArgument);
  const MackeyGlass mg(mg_paper());
  EXPECT_THROW(mg.advance(mg.constant_history(1.0), 0.0123), InvalidArgument);
  StateVector u = mg.constant_history(1.0);
  u.values(0) = INFINITY;
  EXPECT_THROW(mg.advance(u, 2.0), IntegrationDiverged);
  EXPECT_THROW(mg.advance(StateVector{Eigen::VectorXd::Ones(5), SystemKind::mackey_glass}, 2.0), InvalidArgument);
}

TEST(AnalyticMap, Examples) {
  Eigen::VectorXd x(2);
  x << 1.0, 1.0;
  EXPECT_EQ(AnalyticMap::make("scale", {{"lambda", 0.5}})(x), Eigen::Vector2d(0.5, 0.5));
  EXPECT_EQ(AnalyticMap::make("saddle-2d")(Eigen::Vector2d::Zero()), Eigen::Vector2d::Zero());
  EXPECT_EQ(AnalyticMap::make("henon", {{"a", 1.4}, {"b", 0.3}})(Eigen::Vector2d::Zero()), Eigen::Vector2d(1.0, 0.0));
  Eigen::VectorXd y(2);
  y << 0.3, -0.2;
  EXPECT_EQ(AnalyticMap::make("saddle-2d", {{"lambda_s", 0.5}, {"lambda_u", 2.0}, {"c", 1.0}})(y),
            Eigen::Vector2d(0.15, -0.4 + 0.09));
  EXPECT_THROW(AnalyticMap::make("logistic"), InvalidArgument);
  EXPECT_THROW(AnalyticMap::make("saddle-2d", {{"lambda_u", 0.5}}), InvalidArgument);
  EXPECT_THROW(AnalyticMap::make("henon")(Eigen::VectorXd::Zero(3)), InvalidArgument);
}

TEST(FlowMap, StepUsesHorizonAndSampling) {
  const FlowMap flow(MackeyGlass(mg_paper()), 2.0);
  const StateVector u = MackeyGlass(mg_paper()).constant_history(0.5);
  EXPECT_EQ(flow.step(u).values, flow.advance(u, 2.0).values);
  std::vector<double> times;
  const auto traj = sample_trajectory(flow, u, 0.5, 4, &times, true);
  ASSERT_EQ(traj.size(), 5u);
  EXPECT_EQ(times, (std::vector<double>{0.0, 0.5, 1.0, 1.5, 2.0}));
  // Each restart re-estimates the history derivatives by finite differences
  // (across the kink at the old t = 0), so pieces only approximate one advance.
  EXPECT_LT((traj[4].values - flow.step(u).values).cwiseAbs().maxCoeff(), 1e-4);
  EXPECT_THROW(FlowMap(MackeyGlass(mg_paper()), -1.0), InvalidArgument);
}

TEST(Trajectory, ExportRoundTrip) {
  const std::filesystem::path dir = ATLAS_TEST_TMP;
  std::filesystem::create_directories(dir);
  const FlowMap flow(ks(15.0, 32), 0.2);
  std::vector<double> times;
  const auto traj = sample_trajectory(flow, ks_smooth(32), 0.2, 5, &times);
  const auto path = (dir / "trajectory.txt").string();
  write_trajectory(path, times, traj);
  std::vector<double> t2;
  const auto back = read_trajectory(path, &t2);
  ASSERT_EQ(back.size(), traj.size());
  EXPECT_EQ(t2, times);
  for (std::size_t i = 0; i < traj.size(); ++i) {
    EXPECT_EQ(back[i].kind, SystemKind::ks);
    EXPECT_EQ(back[i].values, traj[i].values);
  }
}

}  // namespace
