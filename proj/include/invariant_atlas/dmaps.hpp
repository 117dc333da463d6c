#pragma once

#include <Eigen/Core>
#include <Eigen/QR>
#include <Eigen/SparseCore>
#include <cmath>
#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "invariant_atlas/core/error.hpp"
#include "invariant_atlas/core/kdtree.hpp"
#include "invariant_atlas/core/lanczos.hpp"
#include "invariant_atlas/core/numeric.hpp"
#include "invariant_atlas/core/parallel.hpp"
#include "invariant_atlas/core/text_io.hpp"
#include "invariant_atlas/observation.hpp"

namespace atlas {

/// Kernel h(z) = exp(-z) restricted to ||x1 - x2|| <= cutoff_radius.
struct KernelParams {
  double epsilon = 1.0;
  double alpha = 1.0;
  double cutoff_radius = std::sqrt(2.0);
  int min_neighbors = 8;

  static KernelParams with_epsilon(double eps, double alpha = 1.0, int min_neighbors = 8) {
    return KernelParams{eps, alpha, std::sqrt(2.0 * eps), min_neighbors};
  }

  void validate() const {
    if (!(epsilon > 0.0)) throw InvalidArgument("kernel: epsilon must be positive");
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw InvalidArgument("kernel: alpha must lie in [0, 1]");
    if (!(cutoff_radius > 0.0)) throw InvalidArgument("kernel: cutoff radius must be positive");
    if (min_neighbors < 1) throw InvalidArgument("kernel: min_neighbors must be >= 1");
  }
};

inline double kernel(const Eigen::VectorXd& x1, const Eigen::VectorXd& x2, const KernelParams& params) {
  if (x1.size() != x2.size()) throw InvalidArgument("kernel: dimension mismatch");
  const double d2 = (x1 - x2).squaredNorm();
  if (d2 > params.cutoff_radius * params.cutoff_radius) return 0.0;
  return std::exp(-d2 / params.epsilon);
}

struct MarkovOptions {
  Eigen::Index n_ev = 20;    // nontrivial eigenpairs kept besides (1, psi_0)
  double kernel_scale = 1.0; // constant factor c_r on the kernel; cancels in P
  LanczosOptions lanczos;
};

struct BuildReport {
  std::size_t components = 0;
  std::vector<std::size_t> isolated;  // anchors with no neighbor but themselves
  std::vector<std::string> warnings;
  int lanczos_restarts = 0;
  bool eigen_converged = true;
  double eigen_residual = 0.0;
};

/// Anchors, normalization state and spectrum of P_{eps, alpha}.
/// eigenvectors.col(l) is psi_l, scaled so that sum_i pi_i psi_l(i)^2 = 1
/// for the stationary distribution pi_i = d_i / sum(d); psi_0 = 1 on a
/// connected graph.
struct DiffusionModel {
  Eigen::MatrixXd anchors;  // m x k
  KernelParams params;
  Eigen::VectorXd q_tilde;
  Eigen::VectorXd d_tilde;
  Eigen::VectorXd eigenvalues;   // lambda_0 >= lambda_1 >= ...
  Eigen::MatrixXd eigenvectors;  // m x (n_ev + 1)
  Eigen::SparseMatrix<double, Eigen::RowMajor> markov;  // empty when loaded from file
  BuildReport report;
  std::shared_ptr<const KdTree> tree;

  Eigen::Index size() const { return anchors.rows(); }
  Eigen::Index dim() const { return anchors.cols(); }
  Eigen::Index n_ev() const { return eigenvalues.size() - 1; }
};

namespace detail {

inline std::size_t count_components(Eigen::Index m, const std::vector<std::vector<KdTree::Neighbor>>& rows) {
  std::vector<std::size_t> parent(static_cast<std::size_t>(m));
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (const auto& nb : rows[i]) parent[find(i)] = find(nb.index);
  std::size_t count = 0;
  for (std::size_t i = 0; i < parent.size(); ++i) count += find(i) == i;
  return count;
}

}  // namespace detail

/// Assembles the sparse alpha-normalized Markov matrix and its leading
/// spectrum (through the symmetric conjugate D^{1/2} P D^{-1/2}).
inline DiffusionModel build_markov(const Eigen::MatrixXd& anchors, const KernelParams& params,
                                   const MarkovOptions& opt = {}) {
  params.validate();
  const Eigen::Index m = anchors.rows();
  if (m < 2) throw InvalidArgument("diffusion maps need at least two anchors");
  if (!anchors.allFinite()) throw InvalidArgument("anchors must be finite");

  DiffusionModel model;
  model.anchors = anchors;
  model.params = params;
  model.tree = std::make_shared<const KdTree>(anchors);

  std::vector<std::vector<KdTree::Neighbor>> rows(static_cast<std::size_t>(m));
  std::vector<std::vector<double>> kvals(static_cast<std::size_t>(m));
  model.q_tilde.resize(m);
  parallel_for(static_cast<std::size_t>(m), [&](std::size_t i) {
    rows[i] = model.tree->radius_search(anchors.row(static_cast<Eigen::Index>(i)), params.cutoff_radius);
    auto& k = kvals[i];
    k.reserve(rows[i].size());
    for (const auto& nb : rows[i]) k.push_back(opt.kernel_scale * std::exp(-nb.dist2 / params.epsilon));
    model.q_tilde(static_cast<Eigen::Index>(i)) = pairwise_sum(k);
  });

  const Eigen::VectorXd q_alpha = model.q_tilde.array().pow(params.alpha);
  model.d_tilde.resize(m);
  std::vector<double> scratch;
  for (Eigen::Index i = 0; i < m; ++i) {
    auto& k = kvals[static_cast<std::size_t>(i)];
    const auto& nb = rows[static_cast<std::size_t>(i)];
    for (std::size_t t = 0; t < k.size(); ++t)
      k[t] /= q_alpha(i) * q_alpha(static_cast<Eigen::Index>(nb[t].index));
    model.d_tilde(i) = pairwise_sum(k);
  }

  std::vector<Eigen::Triplet<double>> p_trip, s_trip;
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto& k = kvals[static_cast<std::size_t>(i)];
    const auto& nb = rows[static_cast<std::size_t>(i)];
    for (std::size_t t = 0; t < k.size(); ++t) {
      const auto j = static_cast<Eigen::Index>(nb[t].index);
      p_trip.emplace_back(i, j, k[t] / model.d_tilde(i));
      s_trip.emplace_back(i, j, k[t] / std::sqrt(model.d_tilde(i) * model.d_tilde(j)));
    }
  }
  model.markov.resize(m, m);
  model.markov.setFromTriplets(p_trip.begin(), p_trip.end());
  Eigen::SparseMatrix<double, Eigen::RowMajor> sym(m, m);
  sym.setFromTriplets(s_trip.begin(), s_trip.end());

  auto& report = model.report;
  for (std::size_t i = 0; i < rows.size(); ++i)
    if (rows[i].size() <= 1) report.isolated.push_back(i);
  report.components = detail::count_components(m, rows);
  if (report.components > 1)
    report.warnings.push_back("kernel graph is disconnected (" + std::to_string(report.components) +
                              " components)");
  if (!report.isolated.empty())
    report.warnings.push_back(std::to_string(report.isolated.size()) + " isolated anchor(s)");

  const Eigen::Index want = std::min<Eigen::Index>(opt.n_ev + 1, m);
  EigenPairs eig = lanczos_largest(
      [&](const auto& x, Eigen::VectorXd& y) { y.noalias() = sym * x; }, m, want, opt.lanczos);
  report.lanczos_restarts = eig.restarts;
  report.eigen_converged = eig.converged;
  report.eigen_residual = eig.max_residual;
  if (!eig.converged)
    report.warnings.push_back("eigensolver did not reach the residual tolerance (residual " +
                              fmt::format("{:.3g}", eig.max_residual) + ")");

  const double total = pairwise_sum(std::span<const double>(model.d_tilde.data(), static_cast<std::size_t>(m)));
  model.eigenvalues = eig.values;
  model.eigenvectors.resize(m, eig.values.size());
  const Eigen::ArrayXd scale = (total / model.d_tilde.array()).sqrt();
  for (Eigen::Index l = 0; l < eig.values.size(); ++l) {
    model.eigenvectors.col(l) = (eig.vectors.col(l).array() * scale).matrix();
    detail::normalize_sign(model.eigenvectors.col(l));
  }
  return model;
}

/// Diffusion coordinates y_i = (lambda_1 psi_1(x_i), ..., lambda_n psi_n(x_i)).
struct DiffusionCoordinates {
  Eigen::MatrixXd points;  // one row per point
};

inline DiffusionCoordinates embed(const DiffusionModel& model, Eigen::Index n_coords) {
  if (n_coords < 0 || n_coords > model.n_ev())
    throw InvalidArgument("embed: n_coords exceeds the number of computed eigenpairs");
  DiffusionCoordinates out;
  out.points.resize(model.size(), n_coords);
  for (Eigen::Index l = 1; l <= n_coords; ++l)
    out.points.col(l - 1) = model.eigenvalues(l) * model.eigenvectors.col(l);
  return out;
}

struct Extension {
  Eigen::VectorXd y;        // y^(l) = sum_j p_j psi_l(x_j), l = 0..n_ev
  Eigen::VectorXd psi;      // y^(l) / lambda_l (0 where |lambda_l| is below the floor)
  std::vector<bool> psi_floored;
  double radius = 0.0;      // cutoff radius actually used
  int growth_steps = 0;
  std::size_t neighbors = 0;
};

inline constexpr double kLambdaFloor = 1e-12;
inline constexpr int kMaxRadiusGrowth = 200;

/// Nystrom extension of the eigenvectors to an arbitrary point. If fewer than
/// min_neighbors anchors lie within the cutoff the radius grows by 10% per
/// step (epsilon fixed). A point that coincides with an anchor is in-sample
/// and keeps the model's radius.
inline Extension nystrom_extend(const DiffusionModel& model, const Eigen::VectorXd& x) {
  if (x.size() != model.dim()) throw InvalidArgument("extension: dimension mismatch");
  if (!x.allFinite()) throw InvalidArgument("extension: point must be finite");
  const KdTree& tree = *model.tree;
  const auto& params = model.params;
  Extension ext;
  ext.radius = params.cutoff_radius;
  auto nbrs = tree.radius_search(x.transpose(), ext.radius);
  const auto nearest = tree.nearest(x.transpose(), 1);
  const bool in_sample = !nearest.empty() && nearest.front().dist2 == 0.0;
  const auto need = std::min<std::size_t>(static_cast<std::size_t>(params.min_neighbors), tree.size());
  if (!in_sample && nbrs.size() < need) {
    const double d_need = std::sqrt(tree.nearest(x.transpose(), need).back().dist2);
    while (ext.radius < d_need) {
      if (ext.growth_steps == kMaxRadiusGrowth)
        throw ExtensionFailed("extension: no anchors within reach after radius growth");
      ext.radius *= 1.1;
      ++ext.growth_steps;
    }
    nbrs = tree.radius_search(x.transpose(), ext.radius);
  }
  if (nbrs.empty()) throw ExtensionFailed("extension: no anchors within the cutoff radius");
  ext.neighbors = nbrs.size();

  // p_j is invariant under a common factor of k_j, so distances are shifted
  // by the nearest one to keep the weights representable far from the data.
  double d_min = nbrs.front().dist2;
  for (const auto& nb : nbrs) d_min = std::min(d_min, nb.dist2);
  std::vector<double> w(nbrs.size());
  for (std::size_t t = 0; t < nbrs.size(); ++t) {
    const auto j = static_cast<Eigen::Index>(nbrs[t].index);
    w[t] = std::exp(-(nbrs[t].dist2 - d_min) / params.epsilon) / std::pow(model.q_tilde(j), params.alpha);
  }
  const double d = pairwise_sum(w);
  const Eigen::Index n = model.eigenvalues.size();
  ext.y = Eigen::VectorXd::Zero(n);
  for (std::size_t t = 0; t < nbrs.size(); ++t)
    ext.y += (w[t] / d) * model.eigenvectors.row(static_cast<Eigen::Index>(nbrs[t].index)).transpose();
  ext.psi.resize(n);
  ext.psi_floored.assign(static_cast<std::size_t>(n), false);
  for (Eigen::Index l = 0; l < n; ++l) {
    if (std::abs(model.eigenvalues(l)) < kLambdaFloor) {
      ext.psi(l) = 0.0;
      ext.psi_floored[static_cast<std::size_t>(l)] = true;
    } else {
      ext.psi(l) = ext.y(l) / model.eigenvalues(l);
    }
  }
  return ext;
}

/// Extended diffusion coordinates (y^(1), ..., y^(n_coords)) of many points.
inline DiffusionCoordinates extend_coordinates(const DiffusionModel& model, const Eigen::MatrixXd& points,
                                               Eigen::Index n_coords) {
  if (n_coords < 0 || n_coords > model.n_ev()) throw InvalidArgument("extend: n_coords too large");
  DiffusionCoordinates out;
  out.points.resize(points.rows(), n_coords);
  parallel_for(static_cast<std::size_t>(points.rows()), [&](std::size_t i) {
    const auto r = static_cast<Eigen::Index>(i);
    const Extension ext = nystrom_extend(model, points.row(r).transpose());
    out.points.row(r) = ext.y.segment(1, n_coords).transpose();
  });
  return out;
}

struct SpectralGapRow {
  Eigen::Index index = 0;
  double eigenvalue = 0.0;
  double ratio = 0.0;       // lambda_l / lambda_{l-1} (NaN for l = 0)
  double residual = 0.0;    // relative residual of the polynomial fit
  bool harmonic = false;
};

struct SpectralGapOptions {
  int max_predictors = 8;            // psi_1..psi_p used as regressors
  double harmonic_threshold = 0.25;  // relative residual below which psi_l is flagged
};

/// Eigenvalues, successive ratios and, per psi_l, the relative residual of a
/// least-squares fit by polynomials of degree <= 2 in the earlier nontrivial
/// eigenvectors (constants only for l = 0, 1). Small residuals mark higher
/// harmonics.
inline std::vector<SpectralGapRow> spectral_gap_report(const DiffusionModel& model,
                                                       const SpectralGapOptions& opt = {}) {
  const Eigen::Index m = model.size();
  std::vector<SpectralGapRow> out;
  for (Eigen::Index l = 0; l < model.eigenvalues.size(); ++l) {
    SpectralGapRow row;
    row.index = l;
    row.eigenvalue = model.eigenvalues(l);
    row.ratio = l == 0 ? std::numeric_limits<double>::quiet_NaN() : model.eigenvalues(l) / model.eigenvalues(l - 1);
    const Eigen::Index p = std::min<Eigen::Index>(std::max<Eigen::Index>(l - 1, 0), opt.max_predictors);
    const Eigen::Index n_feat = 1 + p + p * (p + 1) / 2;
    const Eigen::VectorXd target = model.eigenvectors.col(l);
    if (2 * n_feat > m) {
      row.residual = std::numeric_limits<double>::quiet_NaN();
    } else {
      Eigen::MatrixXd features(m, n_feat);
      features.col(0).setOnes();
      Eigen::Index c = 1;
      for (Eigen::Index a = 1; a <= p; ++a) features.col(c++) = model.eigenvectors.col(a);
      for (Eigen::Index a = 1; a <= p; ++a)
        for (Eigen::Index b = a; b <= p; ++b)
          features.col(c++) = model.eigenvectors.col(a).cwiseProduct(model.eigenvectors.col(b));
      const Eigen::VectorXd coef = features.colPivHouseholderQr().solve(target);
      const double norm = target.norm();
      row.residual = norm > 0.0 ? (target - features * coef).norm() / norm : 0.0;
      row.harmonic = l > 1 && row.residual < opt.harmonic_threshold;
    }
    out.push_back(row);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

/// Header (m, k, eps, alpha, r, N, n_ev) and eigenvalues, then one row per
/// anchor: coordinates, q_tilde, d_tilde, psi_0..psi_n_ev.
inline void write_model(const std::string& path, const DiffusionModel& model) {
  io::Table t;
  t.meta.push_back({"diffusion_model", {}});
  t.meta.push_back({"m", {std::to_string(model.size())}});
  t.meta.push_back({"k", {std::to_string(model.dim())}});
  t.meta.push_back({"epsilon", {fmt::format("{}", model.params.epsilon)}});
  t.meta.push_back({"alpha", {fmt::format("{}", model.params.alpha)}});
  t.meta.push_back({"cutoff_radius", {fmt::format("{}", model.params.cutoff_radius)}});
  t.meta.push_back({"min_neighbors", {std::to_string(model.params.min_neighbors)}});
  t.meta.push_back({"n_ev", {std::to_string(model.n_ev())}});
  t.meta.push_back({"eigenvalues", io::to_strings(model.eigenvalues)});
  for (Eigen::Index a = 0; a < model.dim(); ++a) t.columns.push_back("x" + std::to_string(a + 1));
  t.columns.push_back("q_tilde");
  t.columns.push_back("d_tilde");
  for (Eigen::Index l = 0; l < model.eigenvectors.cols(); ++l) t.columns.push_back("psi_" + std::to_string(l));
  t.rows.resize(model.size(), model.dim() + 2 + model.eigenvectors.cols());
  t.rows << model.anchors, model.q_tilde, model.d_tilde, model.eigenvectors;
  io::write_table(path, t);
}

inline DiffusionModel read_model(const std::string& path) {
  const io::Table t = io::read_table(path);
  const auto m = static_cast<Eigen::Index>(std::stoll(t.require_meta("m")[0]));
  const auto k = static_cast<Eigen::Index>(std::stoll(t.require_meta("k")[0]));
  const auto n_ev = static_cast<Eigen::Index>(std::stoll(t.require_meta("n_ev")[0]));
  const auto& ev = t.require_meta("eigenvalues");
  if (t.rows.rows() != m || t.rows.cols() != k + 2 + n_ev + 1 || static_cast<Eigen::Index>(ev.size()) != n_ev + 1)
    throw Error("malformed diffusion model file '" + path + "'");
  DiffusionModel model;
  model.params.epsilon = io::parse_double(t.require_meta("epsilon")[0]);
  model.params.alpha = io::parse_double(t.require_meta("alpha")[0]);
  model.params.cutoff_radius = io::parse_double(t.require_meta("cutoff_radius")[0]);
  model.params.min_neighbors = std::stoi(t.require_meta("min_neighbors")[0]);
  model.anchors = t.rows.leftCols(k);
  model.q_tilde = t.rows.col(k);
  model.d_tilde = t.rows.col(k + 1);
  model.eigenvectors = t.rows.rightCols(n_ev + 1);
  model.eigenvalues.resize(n_ev + 1);
  for (Eigen::Index l = 0; l <= n_ev; ++l) model.eigenvalues(l) = io::parse_double(ev[static_cast<std::size_t>(l)]);
  model.tree = std::make_shared<const KdTree>(model.anchors);
  return model;
}

/// Columns y1..yn, then coloring columns: the third coordinate (when
/// present) and the phase atan2(y2, y1); a time column when `times` is given.
/// `indices` records which eigenvectors the columns came from.
inline void write_embedding(const std::string& path, const DiffusionCoordinates& coords,
                            const std::vector<int>& indices = {}, const std::vector<double>* times = nullptr) {
  const Eigen::Index n = coords.points.cols();
  if (times && static_cast<Eigen::Index>(times->size()) != coords.points.rows())
    throw InvalidArgument("embedding export: one time per point required");
  io::Table t;
  t.meta.push_back({"embedding", {}});
  if (!indices.empty()) {
    std::vector<std::string> idx;
    for (int i : indices) idx.push_back(std::to_string(i));
    t.meta.push_back({"eigenvectors", idx});
  }
  for (Eigen::Index l = 1; l <= n; ++l) t.columns.push_back("y" + std::to_string(l));
  const bool third = n >= 3;
  const bool phase = n >= 2;
  if (third) t.columns.push_back("color_y3");
  if (phase) t.columns.push_back("phase");
  if (times) t.columns.push_back("t");
  t.rows.resize(coords.points.rows(), static_cast<Eigen::Index>(t.columns.size()));
  t.rows.leftCols(n) = coords.points;
  Eigen::Index c = n;
  if (third) t.rows.col(c++) = coords.points.col(2);
  if (phase) {
    for (Eigen::Index i = 0; i < coords.points.rows(); ++i)
      t.rows(i, c) = std::atan2(coords.points(i, 1), coords.points(i, 0));
    ++c;
  }
  if (times)
    for (Eigen::Index i = 0; i < coords.points.rows(); ++i) t.rows(i, c) = (*times)[static_cast<std::size_t>(i)];
  io::write_table(path, t);
}

inline DiffusionCoordinates read_embedding(const std::string& path) {
  const io::Table t = io::read_table(path);
  Eigen::Index n = 0;
  while (n < static_cast<Eigen::Index>(t.columns.size()) && t.columns[static_cast<std::size_t>(n)] == "y" + std::to_string(n + 1)) ++n;
  return DiffusionCoordinates{t.rows.leftCols(n)};
}

}  // namespace atlas
