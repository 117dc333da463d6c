#pragma once

#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "invariant_atlas/core/error.hpp"
#include "invariant_atlas/core/numeric.hpp"

namespace atlas {

struct LanczosOptions {
  Eigen::Index ncv = 0;       // Krylov dimension; 0 picks max(2*nev + 10, 64)
  double tol = 1e-10;         // residual bound ||A y - theta y|| for accepted pairs
  int max_restarts = 20000;
  std::uint64_t seed = 0x5eed;
};

struct EigenPairs {
  Eigen::VectorXd values;   // descending
  Eigen::MatrixXd vectors;  // unit columns
  int restarts = 0;
  bool converged = false;
  double max_residual = 0.0;
};

/// Largest algebraic eigenpairs of a symmetric operator by thick-restart
/// Lanczos with full reorthogonalization. `apply(x, y)` must set y = A x.
template <class Apply>
EigenPairs lanczos_largest(Apply&& apply, Eigen::Index n, Eigen::Index nev, const LanczosOptions& opt = {}) {
  using Eigen::Index;
  EigenPairs out;
  if (n <= 0 || nev <= 0) {
    out.values.resize(0);
    out.vectors.resize(n, 0);
    out.converged = true;
    return out;
  }
  nev = std::min(nev, n);
  Index ncv = opt.ncv > 0 ? opt.ncv : std::max<Index>(2 * nev + 10, 64);
  ncv = std::min(std::max(ncv, nev + 1), n);
  if (ncv < nev) ncv = nev;

  Rng rng(opt.seed);
  auto random_unit = [&](const Eigen::MatrixXd& basis, Index cols) -> Eigen::VectorXd {
    for (int attempt = 0; attempt < 8; ++attempt) {
      Eigen::VectorXd v(n);
      for (Index i = 0; i < n; ++i) v(i) = rng.symmetric();
      for (int pass = 0; pass < 2 && cols > 0; ++pass)
        v -= basis.leftCols(cols) * (basis.leftCols(cols).transpose() * v);
      const double nv = v.norm();
      if (nv > 1e-6) return v / nv;
    }
    return Eigen::VectorXd();
  };

  Eigen::MatrixXd V(n, ncv);
  Eigen::MatrixXd T = Eigen::MatrixXd::Zero(ncv, ncv);
  Eigen::VectorXd w(n), residual(n);
  V.col(0) = random_unit(V, 0);
  Index kept = 0;
  double anorm = 0.0;

  for (int restart = 0;; ++restart) {
    Index m = ncv;
    double beta_last = 0.0;
    bool exhausted = false;
    for (Index j = kept; j < ncv; ++j) {
      apply(V.col(j), w);
      Eigen::VectorXd h = V.leftCols(j + 1).transpose() * w;
      w -= V.leftCols(j + 1) * h;
      const Eigen::VectorXd h2 = V.leftCols(j + 1).transpose() * w;
      w -= V.leftCols(j + 1) * h2;
      h += h2;
      T.col(j).head(j + 1) = h;
      T.row(j).head(j + 1) = h.transpose();
      anorm = std::max(anorm, std::abs(h(j)));
      const double beta = w.norm();
      if (j + 1 < ncv) {
        if (beta <= 1e-12 * std::max(1.0, anorm)) {
          Eigen::VectorXd fresh = random_unit(V, j + 1);
          if (fresh.size() == 0) {
            m = j + 1;
            exhausted = true;
            break;
          }
          V.col(j + 1) = fresh;
          T(j + 1, j) = T(j, j + 1) = 0.0;
        } else {
          V.col(j + 1) = w / beta;
          T(j + 1, j) = T(j, j + 1) = beta;
        }
      } else {
        residual = w;
        beta_last = beta;
        if (m == n) exhausted = true;
      }
    }

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T.topLeftCorner(m, m));
    if (es.info() != Eigen::Success) throw NumericalFailure("Lanczos: projected eigenproblem failed");
    // descending order
    const Eigen::VectorXd theta = es.eigenvalues().reverse();
    const Eigen::MatrixXd S = es.eigenvectors().rowwise().reverse();

    const Index want = std::min(nev, m);
    double worst = 0.0;
    for (Index i = 0; i < want; ++i)
      worst = std::max(worst, exhausted ? 0.0 : std::abs(beta_last * S(m - 1, i)));
    const bool done = worst <= opt.tol;
    if (done || restart >= opt.max_restarts || m < ncv) {
      out.values = theta.head(want);
      out.vectors = V.leftCols(m) * S.leftCols(want);
      for (Index i = 0; i < want; ++i) out.vectors.col(i).normalize();
      out.restarts = restart;
      out.converged = done;
      out.max_residual = worst;
      return out;
    }

    const Index p = std::min(nev + (m - nev) / 2, m - 1);
    const Eigen::MatrixXd ritz = V.leftCols(m) * S.leftCols(p);
    V.leftCols(p) = ritz;
    V.col(p) = residual / beta_last;
    T.setZero();
    for (Index i = 0; i < p; ++i) {
      T(i, i) = theta(i);
      T(p, i) = T(i, p) = beta_last * S(m - 1, i);
    }
    kept = p;
  }
}

}  // namespace atlas
