#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "invariant_atlas/core/error.hpp"
#include "invariant_atlas/core/kdtree.hpp"
#include "invariant_atlas/core/parallel.hpp"
#include "invariant_atlas/core/text_io.hpp"

namespace atlas {

/// Sorted squared distances of all unordered anchor pairs within a fixed
/// cutoff. One structure serves every epsilon of a scan.
class PairDistances {
 public:
  PairDistances(const Eigen::MatrixXd& anchors, double cutoff) : m_(anchors.rows()), cutoff_(cutoff) {
    if (m_ < 2) throw InvalidArgument("kernel sum needs at least two anchors");
    if (!(cutoff > 0.0)) throw InvalidArgument("scan cutoff must be positive");
    const KdTree tree(anchors);
    std::vector<std::vector<double>> rows(static_cast<std::size_t>(m_));
    parallel_for(static_cast<std::size_t>(m_), [&](std::size_t i) {
      for (const auto& nb : tree.radius_search(anchors.row(static_cast<Eigen::Index>(i)), cutoff))
        if (nb.index > i) rows[i].push_back(nb.dist2);
    });
    for (auto& r : rows) d2_.insert(d2_.end(), r.begin(), r.end());
    std::sort(d2_.begin(), d2_.end());
  }

  Eigen::Index anchors() const { return m_; }
  double cutoff() const { return cutoff_; }
  std::span<const double> squared() const { return d2_; }

  /// S(eps) = m^-2 sum_{i,j} exp(-d_ij^2 / eps), diagonal included.
  /// The summation tree depends only on the pair count, so S is monotone in
  /// eps to the last bit.
  double kernel_sum(double eps) const {
    if (!(eps > 0.0)) throw InvalidArgument("kernel sum: epsilon must be positive");
    // exp(-z) underflows to zero beyond z ~ 745.
    const double limit = 746.0 * eps;
    const auto live = static_cast<std::size_t>(std::upper_bound(d2_.begin(), d2_.end(), limit) - d2_.begin());
    const double off = sum(0, d2_.size(), live, eps);
    const double m = static_cast<double>(m_);
    return (m + 2.0 * off) / (m * m);
  }

 private:
  double sum(std::size_t begin, std::size_t end, std::size_t live, double eps) const {
    if (begin >= live) return 0.0;
    if (end - begin <= 32) {
      double s = 0.0;
      for (std::size_t i = begin; i < std::min(end, live); ++i) s += std::exp(-d2_[i] / eps);
      return s;
    }
    const std::size_t half = begin + (end - begin) / 2;
    return sum(begin, half, live, eps) + sum(half, end, live, eps);
  }

  Eigen::Index m_;
  double cutoff_;
  std::vector<double> d2_;
};

inline double kernel_sum(const Eigen::MatrixXd& anchors, double epsilon, double scan_cutoff) {
  return PairDistances(anchors, scan_cutoff).kernel_sum(epsilon);
}

struct DimensionScan {
  std::vector<double> epsilons;
  std::vector<double> S_values;
  std::vector<double> slopes;
  std::vector<double> slope_epsilons;  // where each slope is located
  std::vector<std::size_t> slope_rows;  // row of epsilons each slope is reported on
  std::size_t argmax = 0;               // index into slopes
  double eps_star = 0.0;
  double d_int = 0.0;
  double scan_cutoff = 0.0;
  double band_lo = 0.0;  // linearity region: |a_i - a_max| <= 0.1 a_max
  double band_hi = 0.0;

  double a_max() const { return slopes.at(argmax); }
};

namespace detail {

inline void finish_scan(DimensionScan& scan, double band) {
  if (scan.slopes.empty()) throw NumericalFailure("dimension scan produced no slopes");
  for (double a : scan.slopes)
    if (!std::isfinite(a)) throw NumericalFailure("dimension scan: non-finite slope");
  scan.argmax = static_cast<std::size_t>(std::max_element(scan.slopes.begin(), scan.slopes.end()) -
                                         scan.slopes.begin());
  const double a_max = scan.slopes[scan.argmax];
  if (!(a_max > 0.0)) throw NumericalFailure("dimension scan: slope undefined (degenerate anchors)");
  scan.d_int = 2.0 * a_max;
  scan.eps_star = scan.slope_epsilons[scan.argmax];
  std::size_t lo = scan.argmax, hi = scan.argmax;
  auto inside = [&](std::size_t i) { return std::abs(scan.slopes[i] - a_max) <= band * a_max; };
  while (lo > 0 && inside(lo - 1)) --lo;
  while (hi + 1 < scan.slopes.size() && inside(hi + 1)) ++hi;
  scan.band_lo = scan.slope_epsilons[lo];
  scan.band_hi = scan.slope_epsilons[hi];
}

inline std::vector<double> evaluate_all(const PairDistances& pairs, const std::vector<double>& eps) {
  std::vector<double> s(eps.size());
  parallel_for(eps.size(), [&](std::size_t i) { s[i] = pairs.kernel_sum(eps[i]); });
  return s;
}

inline void require_spread(const Eigen::MatrixXd& anchors) {
  if (anchors.rows() < 2) throw InvalidArgument("dimension scan needs at least two anchors");
  for (Eigen::Index i = 1; i < anchors.rows(); ++i)
    if (anchors.row(i) != anchors.row(0)) return;
  throw InvalidArgument("dimension scan: all anchors identical, slope undefined");
}

}  // namespace detail

inline constexpr double kLinearityBand = 0.1;

/// S at eps_i = 2^i, i_min..i_max, with cutoff sqrt(2 eps_max) and forward
/// differences in log-log. The maximizer eps* is reported at the geometric
/// midpoint of the maximizing pair.
inline DimensionScan coarse_scan(const Eigen::MatrixXd& anchors, int i_min = -30, int i_max = 10) {
  if (i_min >= i_max) throw InvalidArgument("coarse scan: need i_min < i_max");
  detail::require_spread(anchors);
  DimensionScan scan;
  for (int i = i_min; i <= i_max; ++i) scan.epsilons.push_back(std::ldexp(1.0, i));
  scan.scan_cutoff = std::sqrt(2.0 * scan.epsilons.back());
  const PairDistances pairs(anchors, scan.scan_cutoff);
  scan.S_values = detail::evaluate_all(pairs, scan.epsilons);
  const double log2 = std::log(2.0);
  for (std::size_t i = 0; i + 1 < scan.epsilons.size(); ++i) {
    scan.slopes.push_back((std::log(scan.S_values[i + 1]) - std::log(scan.S_values[i])) / log2);
    scan.slope_epsilons.push_back(std::sqrt(scan.epsilons[i] * scan.epsilons[i + 1]));
    scan.slope_rows.push_back(i);
  }
  detail::finish_scan(scan, kLinearityBand);
  return scan;
}

/// n_fine log-spaced epsilons over [eps*/4, 4 eps*] under the coarse scan's
/// cutoff; centered differences at interior points (a single forward
/// difference when n_fine = 2).
inline DimensionScan refine_scan(const Eigen::MatrixXd& anchors, const DimensionScan& coarse, int n_fine = 50) {
  if (n_fine < 2) throw InvalidArgument("refine scan: n_fine must be >= 2");
  if (!(coarse.eps_star > 0.0) || coarse.slopes.empty())
    throw InvalidArgument("refine scan: coarse scan has no valid maximizer");
  detail::require_spread(anchors);
  DimensionScan scan;
  scan.scan_cutoff = coarse.scan_cutoff;
  const double lo = std::log(coarse.eps_star / 4.0), hi = std::log(coarse.eps_star * 4.0);
  for (int i = 0; i < n_fine; ++i) scan.epsilons.push_back(std::exp(lo + (hi - lo) * i / (n_fine - 1)));
  const PairDistances pairs(anchors, scan.scan_cutoff);
  scan.S_values = detail::evaluate_all(pairs, scan.epsilons);
  auto slope = [&](std::size_t a, std::size_t b) {
    return (std::log(scan.S_values[b]) - std::log(scan.S_values[a])) /
           (std::log(scan.epsilons[b]) - std::log(scan.epsilons[a]));
  };
  if (n_fine == 2) {
    scan.slopes.push_back(slope(0, 1));
    scan.slope_epsilons.push_back(std::sqrt(scan.epsilons[0] * scan.epsilons[1]));
    scan.slope_rows.push_back(0);
  } else {
    for (std::size_t i = 1; i + 1 < scan.epsilons.size(); ++i) {
      scan.slopes.push_back(slope(i - 1, i + 1));
      scan.slope_epsilons.push_back(scan.epsilons[i]);
      scan.slope_rows.push_back(i);
    }
  }
  detail::finish_scan(scan, kLinearityBand);
  return scan;
}

/// Columns eps, S, log_eps, log_S, a (NaN on rows without a slope).
inline void write_scan(const std::string& path, const DimensionScan& scan) {
  io::Table t;
  t.meta.push_back({"dimension_scan", {}});
  t.meta.push_back({"scan_cutoff", {fmt::format("{}", scan.scan_cutoff)}});
  t.meta.push_back({"eps_star", {fmt::format("{}", scan.eps_star)}});
  t.meta.push_back({"d_int", {fmt::format("{}", scan.d_int)}});
  t.meta.push_back({"linearity_band", {fmt::format("{}", scan.band_lo), fmt::format("{}", scan.band_hi)}});
  t.columns = {"eps", "S", "log_eps", "log_S", "a"};
  const auto n = static_cast<Eigen::Index>(scan.epsilons.size());
  t.rows.resize(n, 5);
  t.rows.col(4).setConstant(std::numeric_limits<double>::quiet_NaN());
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto u = static_cast<std::size_t>(i);
    t.rows(i, 0) = scan.epsilons[u];
    t.rows(i, 1) = scan.S_values[u];
    t.rows(i, 2) = std::log(scan.epsilons[u]);
    t.rows(i, 3) = std::log(scan.S_values[u]);
  }
  for (std::size_t s = 0; s < scan.slopes.size(); ++s)
    t.rows(static_cast<Eigen::Index>(scan.slope_rows[s]), 4) = scan.slopes[s];
  io::write_table(path, t);
}

/// Reads back eps*, d_int and the cutoff (the fields later stages consume).
inline DimensionScan read_scan_summary(const std::string& path) {
  const io::Table t = io::read_table(path);
  if (!t.find_meta("dimension_scan")) throw Error("'" + path + "' is not a dimension scan");
  DimensionScan scan;
  scan.scan_cutoff = io::parse_double(t.require_meta("scan_cutoff")[0]);
  scan.eps_star = io::parse_double(t.require_meta("eps_star")[0]);
  scan.d_int = io::parse_double(t.require_meta("d_int")[0]);
  const auto& band = t.require_meta("linearity_band");
  scan.band_lo = io::parse_double(band.at(0));
  scan.band_hi = io::parse_double(band.at(1));
  for (Eigen::Index i = 0; i < t.rows.rows(); ++i) {
    scan.epsilons.push_back(t.rows(i, 0));
    scan.S_values.push_back(t.rows(i, 1));
  }
  return scan;
}

}  // namespace atlas
