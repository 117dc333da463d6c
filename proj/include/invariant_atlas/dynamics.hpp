#pragma once

#include <fftw3.h>

#include <Eigen/Core>
#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <string>
#include <variant>
#include <vector>

#include "invariant_atlas/core/error.hpp"
#include "invariant_atlas/core/numeric.hpp"
#include "invariant_atlas/core/text_io.hpp"

namespace atlas {

enum class SystemKind { ks, mackey_glass, analytic };

inline const char* to_string(SystemKind kind) {
  switch (kind) {
    case SystemKind::ks: return "ks";
    case SystemKind::mackey_glass: return "mackey_glass";
    case SystemKind::analytic: return "analytic";
  }
  return "?";
}

/// A discretized point of the phase space. For KS the values are the
/// collocation values u(x_j) on a uniform grid of [0, 2pi); for Mackey-Glass
/// the history samples u(-tau + j dt), j = 0..n_h.
struct StateVector {
  Eigen::VectorXd values;
  SystemKind kind = SystemKind::analytic;

  bool all_finite() const { return values.allFinite(); }
};

/// Values above this magnitude are treated as blow-up.
inline constexpr double kDivergenceBound = 1e10;

// ---------------------------------------------------------------------------
// Kuramoto-Sivashinsky:  u_t + 4 u_xxxx + mu (u_xx + 1/2 u_x^2) = 0 on [0, 2pi]
// ---------------------------------------------------------------------------

struct KSConfig {
  double mu = 15.0;
  int n_modes = 128;
  double dt = 0.01;

  void validate() const {
    if (!(mu > 0.0)) throw InvalidArgument("KS: mu must be positive");
    if (n_modes < 16 || (n_modes & (n_modes - 1)) != 0)
      throw InvalidArgument("KS: n_modes must be a power of two >= 16");
    if (!(dt > 0.0)) throw InvalidArgument("KS: dt must be positive");
  }
};

namespace detail {

/// FFTW plans for one transform size. Planning is serialized; execution with
/// the new-array interface is thread-safe.
class RealFftPlans {
public:
  explicit RealFftPlans(int n) : n_(n) {
    std::lock_guard lock(planner_mutex());
    std::vector<double> real(static_cast<std::size_t>(n));
    std::vector<std::complex<double>> spec(static_cast<std::size_t>(n / 2 + 1));
    auto* c = reinterpret_cast<fftw_complex*>(spec.data());
    forward_ = fftw_plan_dft_r2c_1d(n, real.data(), c, FFTW_ESTIMATE | FFTW_UNALIGNED);
    backward_ = fftw_plan_dft_c2r_1d(n, c, real.data(), FFTW_ESTIMATE | FFTW_UNALIGNED);
    if (forward_ == nullptr || backward_ == nullptr) throw Error("FFTW planning failed");
  }
  ~RealFftPlans() {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(forward_);
    fftw_destroy_plan(backward_);
  }
  RealFftPlans(const RealFftPlans&) = delete;
  RealFftPlans& operator=(const RealFftPlans&) = delete;

  int size() const { return n_; }

  // Unnormalized, as in FFTW.
  void forward(const double* in, std::complex<double>* out) const {
    fftw_execute_dft_r2c(forward_, const_cast<double*>(in), reinterpret_cast<fftw_complex*>(out));
  }
  // Destroys `in`.
  void backward(std::complex<double>* in, double* out) const {
    fftw_execute_dft_c2r(backward_, reinterpret_cast<fftw_complex*>(in), out);
  }

private:
  static std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
  }

  int n_;
  fftw_plan forward_ = nullptr;
  fftw_plan backward_ = nullptr;
};

/// ETD-RK4 weights for a diagonal real linear part, evaluated by averaging
/// over a circle of radius one around each h*L to avoid cancellation.
struct EtdCoefficients {
  Eigen::ArrayXd e, e_half, q, f1, f2, f3;

  EtdCoefficients() = default;
  EtdCoefficients(const Eigen::ArrayXd& linear, double h) {
    constexpr int kContour = 32;
    const Eigen::Index n = linear.size();
    // exact zeros instead of subnormal results for strongly damped modes
    e = (h * linear).exp();
    e_half = (0.5 * h * linear).exp();
    e = (e.abs() < 1e-280).select(0.0, e);
    e_half = (e_half.abs() < 1e-280).select(0.0, e_half);
    q.resize(n);
    f1.resize(n);
    f2.resize(n);
    f3.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      std::complex<double> sq, s1, s2, s3;
      for (int j = 1; j <= kContour; ++j) {
        const std::complex<double> r =
            std::exp(std::complex<double>(0.0, std::numbers::pi * (j - 0.5) / kContour));
        const std::complex<double> z = h * linear(i) + r;
        const std::complex<double> ez = std::exp(z);
        const std::complex<double> z3 = z * z * z;
        sq += (std::exp(0.5 * z) - 1.0) / z;
        s1 += (-4.0 - z + ez * (4.0 - 3.0 * z + z * z)) / z3;
        s2 += (2.0 + z + ez * (z - 2.0)) / z3;
        s3 += (-4.0 - 3.0 * z - z * z + ez * (4.0 - z)) / z3;
      }
      q(i) = h * sq.real() / kContour;
      f1(i) = h * s1.real() / kContour;
      f2(i) = h * s2.real() / kContour;
      f3(i) = h * s3.real() / kContour;
    }
  }
};

}  // namespace detail

/// Fourier pseudospectral ETD-RK4 integrator for KS with periodic boundary
/// conditions. The nonlinear term is formed in physical space with 2/3-rule
/// dealiasing. The spatial mean decouples from all other modes and is held at
/// its initial value.
class KuramotoSivashinsky {
public:
  explicit KuramotoSivashinsky(KSConfig cfg) : cfg_(cfg) {
    cfg_.validate();
    const int n = cfg_.n_modes;
    const int n_spec = n / 2 + 1;
    plans_ = std::make_shared<const detail::RealFftPlans>(n);
    linear_.resize(n_spec);
    derivative_.resize(n_spec);
    nonlinear_scale_.resize(n_spec);
    for (int j = 0; j < n_spec; ++j) {
      const double k = j;
      const bool kept = 3 * j <= n && j < n / 2;  // 2/3 rule
      linear_(j) = -4.0 * k * k * k * k + cfg_.mu * k * k;
      derivative_(j) = kept ? std::complex<double>(0.0, k) : 0.0;
      nonlinear_scale_(j) = (kept && j > 0) ? -0.5 * cfg_.mu / n : 0.0;
    }
    coeffs_ = std::make_shared<const detail::EtdCoefficients>(linear_, cfg_.dt);
  }

  const KSConfig& config() const { return cfg_; }

  /// Collocation points x_j = 2 pi j / n.
  static Eigen::VectorXd grid(int n) {
    return Eigen::VectorXd::LinSpaced(n, 0.0, 2.0 * std::numbers::pi * (n - 1) / n);
  }

  /// Linear growth rate -4k^4 + mu k^2 of Fourier mode k.
  double growth_rate(int k) const { return -4.0 * k * k * k * k + cfg_.mu * k * k; }

  StateVector advance(const StateVector& u, double horizon) const {
    if (u.kind != SystemKind::ks) throw InvalidArgument("KS map applied to a non-KS state");
    if (u.values.size() != cfg_.n_modes)
      throw InvalidArgument("KS state length does not match n_modes");
    if (!(horizon >= 0.0)) throw InvalidArgument("KS horizon must be >= 0");
    if (!u.all_finite()) throw IntegrationDiverged(0, "KS: non-finite initial state");
    if (horizon == 0.0) return u;

    const double dt = cfg_.dt;
    const double ratio = horizon / dt;
    auto n_full = static_cast<std::size_t>(std::llround(ratio));
    double remainder = 0.0;
    if (std::abs(static_cast<double>(n_full) * dt - horizon) > 1e-9 * std::max(1.0, horizon)) {
      n_full = static_cast<std::size_t>(std::floor(ratio));
      remainder = horizon - static_cast<double>(n_full) * dt;
    }

    Workspace ws(cfg_.n_modes);
    Spectrum v = to_spectrum(u.values, ws);
    for (std::size_t s = 0; s < n_full; ++s) {
      etd_step(v, *coeffs_, ws);
      check_spectrum(v, s + 1);
    }
    if (remainder > 0.0) {
      const detail::EtdCoefficients partial(linear_, remainder);
      etd_step(v, partial, ws);
      check_spectrum(v, n_full + 1);
    }
    StateVector out{to_physical(v, ws), SystemKind::ks};
    if (!out.all_finite() || out.values.cwiseAbs().maxCoeff() > kDivergenceBound)
      throw IntegrationDiverged(n_full, "KS: state left the finite range");
    return out;
  }

private:
  using Spectrum = Eigen::ArrayXcd;

  struct Workspace {
    explicit Workspace(int n)
        : real(n), spec(n / 2 + 1), nv(n / 2 + 1), na(n / 2 + 1), nb(n / 2 + 1),
          nc(n / 2 + 1), a(n / 2 + 1), b(n / 2 + 1), c(n / 2 + 1) {}
    Eigen::VectorXd real;
    Spectrum spec, nv, na, nb, nc, a, b, c;
  };

  Spectrum to_spectrum(const Eigen::VectorXd& values, Workspace& ws) const {
    ws.real = values;
    Spectrum out(values.size() / 2 + 1);
    plans_->forward(ws.real.data(), out.data());
    out /= static_cast<double>(cfg_.n_modes);
    return out;
  }

  Eigen::VectorXd to_physical(const Spectrum& v, Workspace& ws) const {
    ws.spec = v;
    Eigen::VectorXd out(cfg_.n_modes);
    plans_->backward(ws.spec.data(), out.data());
    return out;
  }

  // -(mu/2) FFT[(u_x)^2], dealiased, mean component removed.
  void nonlinear(const Spectrum& v, Spectrum& out, Workspace& ws) const {
    ws.spec = derivative_ * v;
    plans_->backward(ws.spec.data(), ws.real.data());
    ws.real.array() = ws.real.array().square();
    plans_->forward(ws.real.data(), out.data());
    out *= nonlinear_scale_;
  }

  void etd_step(Spectrum& v, const detail::EtdCoefficients& c, Workspace& ws) const {
    nonlinear(v, ws.nv, ws);
    ws.a = c.e_half * v + c.q * ws.nv;
    nonlinear(ws.a, ws.na, ws);
    ws.b = c.e_half * v + c.q * ws.na;
    nonlinear(ws.b, ws.nb, ws);
    ws.c = c.e_half * ws.a + c.q * (2.0 * ws.nb - ws.nv);
    nonlinear(ws.c, ws.nc, ws);
    v = c.e * v + ws.nv * c.f1 + 2.0 * (ws.na + ws.nb) * c.f2 + ws.nc * c.f3;
  }

  void check_spectrum(const Spectrum& v, std::size_t step) const {
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      const double m = std::abs(v(i));
      if (!(m <= kDivergenceBound)) throw IntegrationDiverged(step, "KS: integration diverged");
    }
  }

  KSConfig cfg_;
  std::shared_ptr<const detail::RealFftPlans> plans_;
  std::shared_ptr<const detail::EtdCoefficients> coeffs_;
  Eigen::ArrayXd linear_, nonlinear_scale_;
  Eigen::ArrayXcd derivative_;
};

// ---------------------------------------------------------------------------
// Mackey-Glass:  u'(t) = beta u(t-tau) / (1 + u(t-tau)^eta) - gamma u(t)
// ---------------------------------------------------------------------------

struct MGConfig {
  double beta = 2.0;
  double gamma = 1.0;
  double eta = 9.65;
  double tau = 2.0;
  int n_history = 100;  // dt = tau / n_history

  double dt() const { return tau / n_history; }

  void validate() const {
    if (!(beta > 0.0 && gamma > 0.0 && eta > 0.0 && tau > 0.0))
      throw InvalidArgument("MG: parameters must be positive");
    if (n_history < 4) throw InvalidArgument("MG: n_history must be >= 4");
  }

  /// Nontrivial equilibrium (beta/gamma - 1)^(1/eta); requires beta > gamma.
  double equilibrium() const { return std::pow(beta / gamma - 1.0, 1.0 / eta); }
};

namespace detail {

/// Fourth-order finite-difference derivative of uniformly sampled values.
inline Eigen::VectorXd sampled_derivative(const Eigen::VectorXd& y, double h) {
  const Eigen::Index n = y.size();
  if (n < 5) throw InvalidArgument("need at least 5 samples for a derivative estimate");
  Eigen::VectorXd d(n);
  const double s = 1.0 / (12.0 * h);
  d(0) = s * (-25.0 * y(0) + 48.0 * y(1) - 36.0 * y(2) + 16.0 * y(3) - 3.0 * y(4));
  d(1) = s * (-3.0 * y(0) - 10.0 * y(1) + 18.0 * y(2) - 6.0 * y(3) + y(4));
  for (Eigen::Index j = 2; j + 2 < n; ++j)
    d(j) = s * (y(j - 2) - 8.0 * y(j - 1) + 8.0 * y(j + 1) - y(j + 2));
  d(n - 2) = s * (3.0 * y(n - 1) + 10.0 * y(n - 2) - 18.0 * y(n - 3) + 6.0 * y(n - 4) - y(n - 5));
  d(n - 1) = s * (25.0 * y(n - 1) - 48.0 * y(n - 2) + 36.0 * y(n - 3) - 16.0 * y(n - 4) +
                  3.0 * y(n - 5));
  return d;
}

/// Cubic Hermite interpolant on [0, h] evaluated at fraction s in [0, 1].
inline double hermite(double y0, double d0, double y1, double d1, double h, double s) {
  const double s2 = s * s;
  const double s3 = s2 * s;
  return (2 * s3 - 3 * s2 + 1) * y0 + (s3 - 2 * s2 + s) * h * d0 + (-2 * s3 + 3 * s2) * y1 +
         (s3 - s2) * h * d1;
}

}  // namespace detail

/// Uniformly sampled solution with derivatives; sample j is at time t0 + j*dt.
struct DenseSolution {
  double t0 = 0.0;
  double dt = 0.0;
  Eigen::VectorXd values;
  Eigen::VectorXd derivatives;

  /// Cubic Hermite evaluation at time t within the sampled range.
  double operator()(double t) const {
    const double pos = (t - t0) / dt;
    const auto last = values.size() - 1;
    if (pos < -1e-9 || pos > static_cast<double>(last) + 1e-9)
      throw InvalidArgument("dense output queried outside its range");
    auto j = static_cast<Eigen::Index>(std::floor(pos));
    j = std::clamp<Eigen::Index>(j, 0, last);
    double s = pos - static_cast<double>(j);
    if (j == last) return values(last);
    if (std::abs(s) < 1e-12) return values(j);
    if (std::abs(s - 1.0) < 1e-12) return values(j + 1);
    return detail::hermite(values(j), derivatives(j), values(j + 1), derivatives(j + 1), dt, s);
  }
};

/// Method of steps with classical RK4; delayed values between grid points
/// come from cubic Hermite interpolation of the stored values/derivatives.
class MackeyGlass {
public:
  explicit MackeyGlass(MGConfig cfg) : cfg_(cfg) { cfg_.validate(); }

  const MGConfig& config() const { return cfg_; }

  double rhs(double now, double delayed) const {
    return cfg_.beta * delayed / (1.0 + std::pow(delayed, cfg_.eta)) - cfg_.gamma * now;
  }

  /// Integrates from the history in `u` for `horizon` time units and returns
  /// the whole solution on [-tau, horizon].
  DenseSolution solve(const StateVector& u, double horizon) const {
    const int nh = cfg_.n_history;
    const double dt = cfg_.dt();
    if (u.kind != SystemKind::mackey_glass)
      throw InvalidArgument("MG map applied to a non-MG state");
    if (u.values.size() != nh + 1) throw InvalidArgument("MG history length != n_history + 1");
    if (!(horizon >= 0.0)) throw InvalidArgument("MG horizon must be >= 0");
    const double ratio = horizon / dt;
    const auto steps = static_cast<Eigen::Index>(std::llround(ratio));
    if (std::abs(static_cast<double>(steps) - ratio) > 1e-8 * std::max(1.0, ratio))
      throw InvalidArgument("MG horizon must be a multiple of dt");
    if (!u.all_finite()) throw IntegrationDiverged(0, "MG: non-finite history");

    DenseSolution sol;
    sol.t0 = -cfg_.tau;
    sol.dt = dt;
    sol.values.resize(nh + 1 + steps);
    sol.derivatives.resize(nh + 1 + steps);
    sol.values.head(nh + 1) = u.values;
    sol.derivatives.head(nh + 1) = detail::sampled_derivative(u.values, dt);

    for (Eigen::Index s = 0; s < steps; ++s) {
      const Eigen::Index i = nh + s;  // current present
      const Eigen::Index lag = i - nh;
      // u' jumps at t = 0; once the history is consumed, keep the right derivative there.
      if (lag == nh) sol.derivatives(nh) = rhs(sol.values(nh), sol.values(0));
      const double d0 = sol.values(lag);
      const double d1 = sol.values(lag + 1);
      const double dmid = detail::hermite(d0, sol.derivatives(lag), d1,
                                          sol.derivatives(lag + 1), dt, 0.5);
      const double y = sol.values(i);
      const double k1 = rhs(y, d0);
      const double k2 = rhs(y + 0.5 * dt * k1, dmid);
      const double k3 = rhs(y + 0.5 * dt * k2, dmid);
      const double k4 = rhs(y + dt * k3, d1);
      const double next = y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      if (!is_finite(next) || std::abs(next) > kDivergenceBound)
        throw IntegrationDiverged(static_cast<std::size_t>(s + 1), "MG: integration diverged");
      sol.values(i + 1) = next;
      sol.derivatives(i + 1) = rhs(next, d1);
    }
    return sol;
  }

  StateVector advance(const StateVector& u, double horizon) const {
    if (horizon == 0.0) {
      if (u.kind != SystemKind::mackey_glass)
        throw InvalidArgument("MG map applied to a non-MG state");
      return u;
    }
    const DenseSolution sol = solve(u, horizon);
    const Eigen::Index nh = cfg_.n_history;
    return StateVector{sol.values.tail(nh + 1), SystemKind::mackey_glass};
  }

  StateVector constant_history(double value) const {
    return StateVector{Eigen::VectorXd::Constant(cfg_.n_history + 1, value),
                       SystemKind::mackey_glass};
  }

private:
  MGConfig cfg_;
};

// ---------------------------------------------------------------------------
// Analytic maps on observation space (test fixtures for the covering code).
// ---------------------------------------------------------------------------

class AnalyticMap {
public:
  enum class Kind { scale, saddle_2d, henon };

  /// Known tags: "scale" (lambda), "saddle-2d" (lambda_s, lambda_u, c),
  /// "henon" (a, b). Missing parameters take the usual defaults.
  static AnalyticMap make(const std::string& name, const std::map<std::string, double>& params = {}) {
    auto get = [&](const char* key, double fallback) {
      auto it = params.find(key);
      return it == params.end() ? fallback : it->second;
    };
    AnalyticMap m;
    if (name == "scale") {
      m.kind_ = Kind::scale;
      m.p_ = {get("lambda", 0.5), 0.0, 0.0};
    } else if (name == "saddle-2d") {
      m.kind_ = Kind::saddle_2d;
      m.p_ = {get("lambda_s", 0.5), get("lambda_u", 2.0), get("c", 1.0)};
      if (!(std::abs(m.p_[0]) < 1.0 && std::abs(m.p_[1]) > 1.0))
        throw InvalidArgument("saddle-2d requires |lambda_s| < 1 < |lambda_u|");
    } else if (name == "henon") {
      m.kind_ = Kind::henon;
      m.p_ = {get("a", 1.4), get("b", 0.3), 0.0};
    } else {
      throw InvalidArgument("unknown analytic map '" + name + "'");
    }
    return m;
  }

  Kind kind() const { return kind_; }

  Eigen::VectorXd operator()(const Eigen::VectorXd& x) const {
    switch (kind_) {
      case Kind::scale:
        return p_[0] * x;
      case Kind::saddle_2d: {
        require_dim(x, 2);
        Eigen::VectorXd y(2);
        y << p_[0] * x(0), p_[1] * x(1) + p_[2] * x(0) * x(0);
        return y;
      }
      case Kind::henon: {
        require_dim(x, 2);
        Eigen::VectorXd y(2);
        y << 1.0 - p_[0] * x(0) * x(0) + x(1), p_[1] * x(0);
        return y;
      }
    }
    return x;
  }

private:
  static void require_dim(const Eigen::VectorXd& x, Eigen::Index k) {
    if (x.size() != k) throw InvalidArgument("analytic map applied to a point of wrong dimension");
  }

  Kind kind_ = Kind::scale;
  std::array<double, 3> p_{};
};

// ---------------------------------------------------------------------------

/// Time-T map of one of the state-space systems.
class FlowMap {
public:
  FlowMap(KuramotoSivashinsky system, double horizon) : system_(std::move(system)), horizon_(horizon) {
    check_horizon();
  }
  FlowMap(MackeyGlass system, double horizon) : system_(std::move(system)), horizon_(horizon) {
    check_horizon();
  }

  double horizon() const { return horizon_; }
  SystemKind kind() const {
    return std::holds_alternative<KuramotoSivashinsky>(system_) ? SystemKind::ks
                                                               : SystemKind::mackey_glass;
  }

  StateVector step(const StateVector& u) const { return advance(u, horizon_); }

  StateVector advance(const StateVector& u, double horizon) const {
    return std::visit([&](const auto& sys) { return sys.advance(u, horizon); }, system_);
  }

  /// Same system with a different horizon.
  FlowMap with_horizon(double horizon) const {
    FlowMap copy = *this;
    copy.horizon_ = horizon;
    copy.check_horizon();
    return copy;
  }

private:
  void check_horizon() const {
    if (!(horizon_ >= 0.0)) throw InvalidArgument("flow horizon must be >= 0");
  }

  std::variant<KuramotoSivashinsky, MackeyGlass> system_;
  double horizon_;
};

/// Samples `count` states at times stride, 2*stride, ... starting from u.
/// When `include_start` is set the initial state is recorded at time 0.
inline std::vector<StateVector> sample_trajectory(const FlowMap& flow, StateVector u, double stride,
                                                  std::size_t count, std::vector<double>* times = nullptr,
                                                  bool include_start = false) {
  std::vector<StateVector> out;
  out.reserve(count + (include_start ? 1 : 0));
  double t = 0.0;
  if (include_start) {
    out.push_back(u);
    if (times) times->push_back(t);
  }
  for (std::size_t i = 0; i < count; ++i) {
    u = flow.advance(u, stride);
    t += stride;
    out.push_back(u);
    if (times) times->push_back(t);
  }
  return out;
}

/// Trajectory export: first column time, then one column per state entry.
inline void write_trajectory(const std::string& path, const std::vector<double>& times,
                             const std::vector<StateVector>& states) {
  if (times.size() != states.size()) throw InvalidArgument("times/states size mismatch");
  io::Table t;
  t.meta.push_back({"trajectory", {states.empty() ? "analytic" : to_string(states.front().kind)}});
  const Eigen::Index n = states.empty() ? 0 : states.front().values.size();
  t.columns.push_back("t");
  for (Eigen::Index j = 0; j < n; ++j) t.columns.push_back("u" + std::to_string(j));
  t.rows.resize(static_cast<Eigen::Index>(states.size()), n + 1);
  for (std::size_t i = 0; i < states.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    t.rows(r, 0) = times[i];
    t.rows.row(r).tail(n) = states[i].values.transpose();
  }
  io::write_table(path, t);
}

inline std::vector<StateVector> read_trajectory(const std::string& path, std::vector<double>* times = nullptr) {
  const io::Table t = io::read_table(path);
  SystemKind kind = SystemKind::analytic;
  if (const auto* m = t.find_meta("trajectory"); m && !m->empty()) {
    if ((*m)[0] == "ks") kind = SystemKind::ks;
    else if ((*m)[0] == "mackey_glass") kind = SystemKind::mackey_glass;
  }
  std::vector<StateVector> out;
  for (Eigen::Index i = 0; i < t.rows.rows(); ++i) {
    if (times) times->push_back(t.rows(i, 0));
    out.push_back(StateVector{t.rows.row(i).tail(t.rows.cols() - 1).transpose(), kind});
  }
  return out;
}

}  // namespace atlas
