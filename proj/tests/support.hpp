#pragma once

#include <Eigen/Core>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <vector>
#include <numbers>

#include "invariant_atlas/core/numeric.hpp"

namespace atlas::testing {

/// m points uniformly at random on the unit circle in R^2.
inline Eigen::MatrixXd circle_points(Eigen::Index m, std::uint64_t seed, Eigen::VectorXd* angles = nullptr) {
  Rng rng(seed);
  Eigen::MatrixXd x(m, 2);
  if (angles) angles->resize(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const double t = 2.0 * std::numbers::pi * rng.uniform();
    x(i, 0) = std::cos(t);
    x(i, 1) = std::sin(t);
    if (angles) (*angles)(i) = t;
  }
  return x;
}

/// m points uniformly at random on the flat torus S^1 x S^1 in R^4.
inline Eigen::MatrixXd torus_points(Eigen::Index m, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd x(m, 4);
  for (Eigen::Index i = 0; i < m; ++i) {
    const double a = 2.0 * std::numbers::pi * rng.uniform();
    const double b = 2.0 * std::numbers::pi * rng.uniform();
    x.row(i) << std::cos(a), std::sin(a), std::cos(b), std::sin(b);
  }
  return x;
}

inline Eigen::MatrixXd uniform_points(Eigen::Index m, Eigen::Index k, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd x(m, k);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < k; ++j) x(i, j) = rng.uniform();
  return x;
}

/// Relative residual min ||s A R + t - B|| / ||B - mean B|| over rotations or
/// reflections R, scales s and shifts t.
inline double procrustes_residual(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const Eigen::MatrixXd a0 = a.rowwise() - a.colwise().mean();
  const Eigen::MatrixXd b0 = b.rowwise() - b.colwise().mean();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a0.transpose() * b0, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::MatrixXd r = svd.matrixU() * svd.matrixV().transpose();
  const double s = svd.singularValues().sum() / a0.squaredNorm();
  return (s * a0 * r - b0).norm() / b0.norm();
}

/// Angular histogram of atan2(y2 - c2, y1 - c1) around `c` with `bins`
/// equal bins; returns the smallest bin count.
inline long min_angular_bin(const Eigen::MatrixXd& y, int bins, const Eigen::RowVector2d& c) {
  std::vector<long> counts(static_cast<std::size_t>(bins), 0);
  for (Eigen::Index i = 0; i < y.rows(); ++i) {
    const double t = std::atan2(y(i, 1) - c(1), y(i, 0) - c(0)) + std::numbers::pi;
    auto b = static_cast<int>(std::floor(t / (2.0 * std::numbers::pi) * bins));
    counts[static_cast<std::size_t>(std::clamp(b, 0, bins - 1))] += 1;
  }
  return *std::min_element(counts.begin(), counts.end());
}

inline long min_angular_bin_about_centroid(const Eigen::MatrixXd& y, int bins) {
  return min_angular_bin(y, bins, y.leftCols(2).colwise().mean());
}

}  // namespace atlas::testing
