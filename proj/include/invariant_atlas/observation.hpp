#pragma once

#include <Eigen/Core>
#include <Eigen/SVD>
#include <cmath>
#include <numbers>
#include <string>
#include <variant>
#include <vector>

#include "invariant_atlas/core/error.hpp"
#include "invariant_atlas/core/text_io.hpp"
#include "invariant_atlas/dynamics.hpp"

namespace atlas {

/// A point x = R(u) in observation space.
struct ObservedPoint {
  Eigen::VectorXd coords;

  Eigen::Index dim() const { return coords.size(); }
};

/// Orthonormal (under the trapezoidal L2(0, 2pi) inner product) basis
/// sampled on the KS collocation grid. Column i of `vectors` is zeta_{i+1}.
struct PODBasis {
  Eigen::MatrixXd vectors;
  Eigen::VectorXd singular_values;
  double grid_weight = 0.0;

  Eigen::Index grid_size() const { return vectors.rows(); }
  Eigen::Index size() const { return vectors.cols(); }

  double inner(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const {
    return grid_weight * a.dot(b);
  }

  Eigen::MatrixXd gram() const { return grid_weight * vectors.transpose() * vectors; }
};

/// Trapezoidal weight of a uniform periodic grid on [0, 2pi).
inline double periodic_grid_weight(Eigen::Index n) {
  return 2.0 * std::numbers::pi / static_cast<double>(n);
}

namespace detail {

/// Flips v so that its first entry of largest magnitude is positive.
inline void normalize_sign(Eigen::Ref<Eigen::VectorXd> v) {
  Eigen::Index arg = 0;
  double best = -1.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::abs(v(i)) > best) {
      best = std::abs(v(i));
      arg = i;
    }
  }
  if (v.size() > 0 && v(arg) < 0.0) v = -v;
}

}  // namespace detail

/// Leading k left singular vectors of the snapshot matrix (one column per
/// snapshot) under the weighted inner product.
inline PODBasis build_pod_basis(const std::vector<StateVector>& snapshots, Eigen::Index k) {
  if (k < 1) throw InvalidArgument("POD: k must be >= 1");
  if (static_cast<Eigen::Index>(snapshots.size()) < k)
    throw InvalidArgument("POD: fewer snapshots than requested basis vectors");
  const Eigen::Index n = snapshots.front().values.size();
  Eigen::MatrixXd snap(n, static_cast<Eigen::Index>(snapshots.size()));
  for (std::size_t j = 0; j < snapshots.size(); ++j) {
    if (snapshots[j].values.size() != n) throw InvalidArgument("POD: snapshot lengths differ");
    snap.col(static_cast<Eigen::Index>(j)) = snapshots[j].values;
  }
  const double w = periodic_grid_weight(n);
  snap *= std::sqrt(w);

  Eigen::BDCSVD<Eigen::MatrixXd> svd(snap, Eigen::ComputeThinU);
  const Eigen::VectorXd& sv = svd.singularValues();
  if (sv.size() < k || !(sv(k - 1) > 1e-10 * sv(0)))
    throw InvalidArgument("POD: k exceeds the numerical rank of the snapshot matrix");

  PODBasis basis;
  basis.grid_weight = w;
  basis.singular_values = sv.head(k);
  basis.vectors = svd.matrixU().leftCols(k) / std::sqrt(w);
  for (Eigen::Index i = 0; i < k; ++i) detail::normalize_sign(basis.vectors.col(i));
  return basis;
}

/// coords_i = <u, zeta_i>.
inline ObservedPoint pod_observe(const StateVector& u, const PODBasis& basis) {
  if (u.values.size() != basis.grid_size())
    throw InvalidArgument("POD observation: state length does not match the basis grid");
  return ObservedPoint{basis.grid_weight * (basis.vectors.transpose() * u.values)};
}

/// Lifts POD coordinates back to the grid: sum_i x_i zeta_i.
inline StateVector pod_reconstruct(const ObservedPoint& x, const PODBasis& basis) {
  return StateVector{basis.vectors * x.coords, SystemKind::ks};
}

/// k equispaced samples of the history from -tau to 0 inclusive. Off-grid
/// samples use the same cubic Hermite interpolation as the integrator.
inline ObservedPoint delay_observe(const StateVector& u, Eigen::Index k) {
  if (k < 2) throw InvalidArgument("delay observation needs k >= 2");
  if (u.kind != SystemKind::mackey_glass)
    throw InvalidArgument("delay observation applies to delay-equation histories");
  const Eigen::Index nh = u.values.size() - 1;
  Eigen::VectorXd out(k);
  Eigen::VectorXd slope;  // derivative times grid spacing, computed on demand
  for (Eigen::Index j = 0; j < k; ++j) {
    const double pos = static_cast<double>(j * nh) / static_cast<double>(k - 1);
    const double nearest = std::round(pos);
    if (std::abs(pos - nearest) < 1e-9) {
      out(j) = u.values(static_cast<Eigen::Index>(nearest));
      continue;
    }
    if (slope.size() == 0) slope = detail::sampled_derivative(u.values, 1.0);
    const auto i = static_cast<Eigen::Index>(std::floor(pos));
    out(j) = detail::hermite(u.values(i), slope(i), u.values(i + 1), slope(i + 1), 1.0,
                             pos - static_cast<double>(i));
  }
  return ObservedPoint{out};
}

/// Observation map R: Y -> R^k, either POD projection or delay coordinates.
class ObservationMap {
public:
  struct Pod {
    PODBasis basis;
  };
  struct Delay {
    Eigen::Index k;
  };

  static ObservationMap pod(PODBasis basis) { return ObservationMap(Pod{std::move(basis)}); }
  static ObservationMap delay(Eigen::Index k) { return ObservationMap(Delay{k}); }

  Eigen::Index dim() const {
    return std::visit(
        [](const auto& m) -> Eigen::Index {
          if constexpr (std::is_same_v<std::decay_t<decltype(m)>, Pod>) return m.basis.size();
          else return m.k;
        },
        impl_);
  }

  ObservedPoint operator()(const StateVector& u) const {
    return std::visit(
        [&](const auto& m) -> ObservedPoint {
          if constexpr (std::is_same_v<std::decay_t<decltype(m)>, Pod>) return pod_observe(u, m.basis);
          else return delay_observe(u, m.k);
        },
        impl_);
  }

private:
  explicit ObservationMap(std::variant<Pod, Delay> impl) : impl_(std::move(impl)) {}
  std::variant<Pod, Delay> impl_;
};

/// Header (grid size, k, singular values) followed by one column per zeta_i.
inline void write_pod_basis(const std::string& path, const PODBasis& basis) {
  io::Table t;
  t.meta.push_back({"pod_basis", {}});
  t.meta.push_back({"grid_size", {std::to_string(basis.grid_size())}});
  t.meta.push_back({"k", {std::to_string(basis.size())}});
  t.meta.push_back({"singular_values", io::to_strings(basis.singular_values)});
  for (Eigen::Index i = 0; i < basis.size(); ++i) t.columns.push_back("zeta_" + std::to_string(i + 1));
  t.rows = basis.vectors;
  io::write_table(path, t);
}

inline PODBasis read_pod_basis(const std::string& path) {
  const io::Table t = io::read_table(path);
  const auto n = static_cast<Eigen::Index>(std::stoll(t.require_meta("grid_size")[0]));
  const auto k = static_cast<Eigen::Index>(std::stoll(t.require_meta("k")[0]));
  const auto& sv = t.require_meta("singular_values");
  if (t.rows.rows() != n || t.rows.cols() != k || static_cast<Eigen::Index>(sv.size()) != k)
    throw Error("malformed POD basis file '" + path + "'");
  PODBasis basis;
  basis.vectors = t.rows;
  basis.grid_weight = periodic_grid_weight(n);
  basis.singular_values.resize(k);
  for (Eigen::Index i = 0; i < k; ++i) basis.singular_values(i) = io::parse_double(sv[static_cast<std::size_t>(i)]);
  return basis;
}

}  // namespace atlas
