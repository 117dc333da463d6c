#pragma once

#include <fmt/core.h>
#include <fmt/ostream.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "invariant_atlas/core/error.hpp"
#include "invariant_atlas/core/numeric.hpp"
#include "invariant_atlas/covering.hpp"
#include "invariant_atlas/dimension.hpp"
#include "invariant_atlas/dmaps.hpp"
#include "invariant_atlas/dynamics.hpp"
#include "invariant_atlas/observation.hpp"
#include "invariant_atlas/pipeline/config.hpp"
#include "invariant_atlas/pipeline/manifest.hpp"

namespace atlas::pipeline {

enum class Stage { simulate, pod, cover, dimscan, dmap, extend, export_, all };

inline const std::vector<std::pair<Stage, const char*>>& stage_names() {
  static const std::vector<std::pair<Stage, const char*>> names{
      {Stage::simulate, "simulate"}, {Stage::pod, "pod"},       {Stage::cover, "cover"},
      {Stage::dimscan, "dimscan"},   {Stage::dmap, "dmap"},     {Stage::extend, "extend"},
      {Stage::export_, "export"},    {Stage::all, "all"}};
  return names;
}

inline const char* to_string(Stage s) {
  for (const auto& [stage, name] : stage_names())
    if (stage == s) return name;
  return "?";
}

inline Stage parse_stage(const std::string& s) {
  for (const auto& [stage, name] : stage_names())
    if (s == name) return stage;
  throw ConfigError("unknown stage '" + s + "'");
}

/// Artifact file names inside the output directory.
namespace artifact {
inline constexpr const char* trajectory = "trajectory.txt";
inline constexpr const char* snapshots = "snapshots.txt";
inline constexpr const char* pod_basis = "pod_basis.txt";
inline constexpr const char* covering = "covering.txt";
inline constexpr const char* covering_levels = "covering_levels.txt";
inline constexpr const char* scan_coarse = "dimscan_coarse.txt";
inline constexpr const char* scan = "dimscan.txt";
inline constexpr const char* model = "model.txt";
inline constexpr const char* embedding = "embedding.txt";
inline constexpr const char* spectrum = "spectrum.txt";
inline constexpr const char* extended = "extended.txt";
inline constexpr const char* trajectory_embedding = "trajectory_embedding.txt";
}  // namespace artifact

/// Independent stream seeds derived from the run seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t s = seed ^ (0xD1B54A32D192ED03ull * (stream + 1));
  return splitmix64(s);
}

enum SeedStream : std::uint64_t { kSweep = 1, kEnsemble, kAnchors, kEigen, kExtension, kLattice };

/// The initial condition u0 = 1e-4 cos(x) (1 + sin(x)) on the collocation grid.
inline StateVector ks_paper_initial(int n) {
  const Eigen::VectorXd x = KuramotoSivashinsky::grid(n);
  return StateVector{(1e-4 * x.array().cos() * (1.0 + x.array().sin())).matrix(), SystemKind::ks};
}

/// Eigenvector columns lambda_l psi_l for the listed l.
inline DiffusionCoordinates select_coordinates(const DiffusionModel& model, const std::vector<int>& indices) {
  DiffusionCoordinates out;
  out.points.resize(model.size(), static_cast<Eigen::Index>(indices.size()));
  for (std::size_t c = 0; c < indices.size(); ++c)
    out.points.col(static_cast<Eigen::Index>(c)) = model.eigenvalues(indices[c]) * model.eigenvectors.col(indices[c]);
  return out;
}

/// Nystrom coordinates y^(l) of many points for the listed l.
inline DiffusionCoordinates extend_selected(const DiffusionModel& model, const Eigen::MatrixXd& points,
                                            const std::vector<int>& indices) {
  DiffusionCoordinates out;
  out.points.resize(points.rows(), static_cast<Eigen::Index>(indices.size()));
  parallel_for(static_cast<std::size_t>(points.rows()), [&](std::size_t i) {
    const auto r = static_cast<Eigen::Index>(i);
    const Extension ext = nystrom_extend(model, points.row(r).transpose());
    for (std::size_t c = 0; c < indices.size(); ++c) out.points(r, static_cast<Eigen::Index>(c)) = ext.y(indices[c]);
  });
  return out;
}

/// Executes pipeline stages inside the configured output directory, skipping
/// stages whose inputs and configuration are unchanged.
class Runner {
 public:
  Runner(ExperimentConfig cfg, std::ostream& log) : cfg_(std::move(cfg)), log_(log), dir_(cfg_.output) {}

  const std::filesystem::path& dir() const { return dir_; }

  void run(Stage stage) {
    DirectoryLock lock(dir_);
    RunManifest manifest(dir_);
    manifest.set_config_hash(sha256_hex(to_json(cfg_).dump()));
    if (stage == Stage::all) {
      for (const auto& [s, name] : stage_names())
        if (s != Stage::all && applicable(s)) run_one(s, manifest);
    } else {
      run_one(stage, manifest);
    }
  }

 private:
  bool applicable(Stage s) const {
    if (s == Stage::pod) return cfg_.observation.kind == "pod" && cfg_.system.kind == "ks";
    if (s == Stage::simulate || s == Stage::export_) return cfg_.system.kind != "analytic";
    return true;
  }

  std::string path(const char* file) const { return (dir_ / file).string(); }

  void require(const char* file, const char* producer) const {
    if (!std::filesystem::exists(dir_ / file)) throw MissingPrerequisite((dir_ / file).string(), producer);
  }

  /// Stage hash: stage name, the config sections it reads, and the
  /// checksums of its input artifacts.
  std::string stage_hash(Stage s, const std::vector<std::string>& inputs) const {
    const Json all = to_json(cfg_);
    Json j;
    j["stage"] = to_string(s);
    j["seed"] = all["seed"];
    j["system"] = all["system"];
    switch (s) {
      case Stage::simulate:
        j["simulate"] = all["simulate"];
        j["observation"] = all["observation"];
        break;
      case Stage::pod:
        j["observation"] = all["observation"];
        break;
      case Stage::cover:
        j["observation"] = all["observation"];
        j["covering"] = all["covering"];
        break;
      case Stage::dimscan:
        j["dimension"] = all["dimension"];
        j["m"] = all["dmaps"]["m"];
        break;
      case Stage::dmap:
        j["dimension"] = all["dimension"];
        j["dmaps"] = all["dmaps"];
        break;
      case Stage::extend:
      case Stage::export_:
        j["observation"] = all["observation"];
        j["dmaps"] = all["dmaps"];
        j["export"] = all["export"];
        break;
      case Stage::all:
        break;
    }
    for (const auto& f : inputs) {
      const auto p = std::filesystem::path(f).is_absolute() ? std::filesystem::path(f) : dir_ / f;
      j["inputs"][f] = std::filesystem::exists(p) ? sha256_file(p) : std::string("missing");
    }
    return sha256_hex(j.dump());
  }

  std::vector<std::string> inputs_of(Stage s) const {
    const bool pod = cfg_.observation.kind == "pod";
    switch (s) {
      case Stage::simulate:
        return {};
      case Stage::pod:
        return {artifact::snapshots};
      case Stage::cover:
        return pod ? std::vector<std::string>{artifact::pod_basis} : std::vector<std::string>{};
      case Stage::dimscan:
        return {artifact::covering};
      case Stage::dmap: {
        std::vector<std::string> in{artifact::covering};
        if (!cfg_.dmaps.epsilon && std::filesystem::exists(dir_ / artifact::scan)) in.push_back(artifact::scan);
        return in;
      }
      case Stage::extend:
        return {artifact::model, artifact::covering};
      case Stage::export_: {
        std::vector<std::string> in{artifact::model, trajectory_source()};
        if (pod) in.push_back(artifact::pod_basis);
        return in;
      }
      case Stage::all:
        break;
    }
    return {};
  }

  std::string trajectory_source() const {
    return cfg_.export_.trajectory.empty() ? std::string(artifact::trajectory) : cfg_.export_.trajectory;
  }

  void run_one(Stage s, RunManifest& manifest) {
    const std::string name = to_string(s);
    if (!applicable(s)) {
      fmt::print(log_, "[{}] not used by this configuration; nothing to do\n", name);
      return;
    }
    const std::string hash = stage_hash(s, inputs_of(s));
    if (manifest.up_to_date(name, hash)) {
      fmt::print(log_, "[{}] up to date\n", name);
      return;
    }
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<std::string> files;
    Json summary = Json::object();
    try {
      switch (s) {
        case Stage::simulate: files = simulate(summary); break;
        case Stage::pod: files = pod(summary); break;
        case Stage::cover: files = cover(summary); break;
        case Stage::dimscan: files = dimscan(summary); break;
        case Stage::dmap: files = dmap(summary); break;
        case Stage::extend: files = extend(summary); break;
        case Stage::export_: files = export_trajectory(summary); break;
        case Stage::all: break;
      }
    } catch (const MissingPrerequisite&) {
      throw;
    } catch (const ConfigError& e) {
      throw ConfigError("[" + name + "] " + e.what());
    } catch (const InvalidArgument& e) {
      throw ConfigError("[" + name + "] " + e.what());
    } catch (const NumericalFailure& e) {
      throw NumericalFailure("[" + name + "] " + e.what());
    } catch (const IntegrationDiverged& e) {
      throw NumericalFailure("[" + name + "] " + e.what());
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    manifest.record(name, hash, seconds, files, summary);
    manifest.save();
    fmt::print(log_, "[{}] done in {:.1f} s: {}\n", name, seconds, summary.dump());
  }

  // -------------------------------------------------------------------------

  FlowMap flow(double horizon) const {
    if (cfg_.system.kind == "ks") return FlowMap(KuramotoSivashinsky(cfg_.system.ks), horizon);
    if (cfg_.system.kind == "mackey_glass") return FlowMap(MackeyGlass(cfg_.system.mg), horizon);
    throw ConfigError("the analytic system has no flow");
  }

  StateVector simulation_start() const {
    if (cfg_.system.kind == "ks") return ks_paper_initial(cfg_.system.ks.n_modes);
    const MackeyGlass mg(cfg_.system.mg);
    StateVector u = mg.constant_history(0.5);
    const Eigen::Index n = u.values.size();
    for (Eigen::Index j = 0; j < n; ++j) u.values(j) += 0.1 * std::sin(3.0 * static_cast<double>(j) / static_cast<double>(n));
    return u;
  }

  /// States after the transient, every `stride`, of the integration from
  /// `u` over total_time.
  std::vector<StateVector> long_run(const FlowMap& f, const StateVector& u, std::vector<double>& times) const {
    const auto& sim = cfg_.simulate;
    const auto count = static_cast<std::size_t>(std::llround(sim.total_time / sim.stride));
    const auto skip = static_cast<std::size_t>(std::llround(sim.transient_fraction * static_cast<double>(count)));
    std::vector<double> all_times;
    auto states = sample_trajectory(f, u, sim.stride, count, &all_times);
    states.erase(states.begin(), states.begin() + static_cast<std::ptrdiff_t>(skip));
    times.assign(all_times.begin() + static_cast<std::ptrdiff_t>(skip), all_times.end());
    return states;
  }

  std::vector<std::string> simulate(Json& summary) {
    std::vector<std::string> files;
    std::vector<double> times;
    const auto states = long_run(flow(0.0), simulation_start(), times);
    write_trajectory(path(artifact::trajectory), times, states);
    files.push_back(artifact::trajectory);
    summary["samples"] = states.size();
    if (cfg_.system.kind == "ks" && cfg_.observation.kind == "pod") {
      if (cfg_.observation.mu_ref == cfg_.system.ks.mu) {
        write_trajectory(path(artifact::snapshots), times, states);
      } else {
        KSConfig ref = cfg_.system.ks;
        ref.mu = cfg_.observation.mu_ref;
        std::vector<double> ref_times;
        const auto snaps = long_run(FlowMap(KuramotoSivashinsky(ref), 0.0), simulation_start(), ref_times);
        write_trajectory(path(artifact::snapshots), ref_times, snaps);
      }
      files.push_back(artifact::snapshots);
    }
    return files;
  }

  std::vector<std::string> pod(Json& summary) {
    require(artifact::snapshots, "simulate");
    const auto snaps = read_trajectory(path(artifact::snapshots));
    const PODBasis basis = build_pod_basis(snaps, cfg_.observation.k);
    write_pod_basis(path(artifact::pod_basis), basis);
    summary["singular_values"] = std::vector<double>(basis.singular_values.data(),
                                                     basis.singular_values.data() + basis.singular_values.size());
    return {artifact::pod_basis};
  }

  ObservationMap observer() const {
    if (cfg_.observation.kind == "pod") {
      require(artifact::pod_basis, "pod");
      PODBasis basis = read_pod_basis(path(artifact::pod_basis));
      if (basis.grid_size() != cfg_.system.ks.n_modes)
        throw ConfigError("POD basis grid size differs from system.ks.n_modes");
      return ObservationMap::pod(std::move(basis));
    }
    return ObservationMap::delay(cfg_.observation.k);
  }

  BoxDomain domain(Eigen::Index k) const {
    const auto& cv = cfg_.covering;
    if (static_cast<Eigen::Index>(cv.lower.size()) != k)
      throw ConfigError(fmt::format("covering.lower/upper must have {} entries", k));
    const Eigen::VectorXd lo = Eigen::Map<const Eigen::VectorXd>(cv.lower.data(), k);
    const Eigen::VectorXd hi = Eigen::Map<const Eigen::VectorXd>(cv.upper.data(), k);
    if (!((hi - lo).array() > 0.0).all()) throw ConfigError("covering.upper must exceed covering.lower");
    return BoxDomain::from_bounds(lo, hi);
  }

  /// The unstable steady state the sweep starts from.
  StateVector steady_state() const {
    if (cfg_.system.kind == "ks")
      return StateVector{Eigen::VectorXd::Zero(cfg_.system.ks.n_modes), SystemKind::ks};
    const MackeyGlass mg(cfg_.system.mg);
    return mg.constant_history(cfg_.system.mg.equilibrium());
  }

  /// Smooth positive random histories (MG) or perturbed paper initial
  /// states (KS), pushed past the transient.
  LiftedEnsemble ensemble(const ObservationMap& obs) const {
    const auto& cv = cfg_.covering;
    Rng rng(derive_seed(cfg_.seed, kEnsemble));
    std::vector<StateVector> initial;
    for (std::size_t h = 0; h < cv.ensemble_histories; ++h) {
      StateVector u = simulation_start();
      const Eigen::Index n = u.values.size();
      if (cfg_.system.kind == "mackey_glass") {
        const double c0 = 0.5 + 0.7 * rng.uniform();
        const double a = 0.3 * rng.uniform();
        const double w = 0.5 + 2.5 * rng.uniform();
        const double phase = 2.0 * M_PI * rng.uniform();
        for (Eigen::Index j = 0; j < n; ++j) {
          const double s = -cfg_.system.mg.tau + cfg_.system.mg.dt() * static_cast<double>(j);
          u.values(j) = c0 + a * std::sin(w * s + phase);
        }
      } else {
        for (Eigen::Index j = 0; j < n; ++j) u.values(j) += 1e-4 * rng.symmetric();
      }
      initial.push_back(std::move(u));
    }
    return LiftedEnsemble::from_trajectories(flow(0.0), obs, initial, cv.ensemble_transient, cv.ensemble_stride,
                                             cv.ensemble_samples);
  }

  std::vector<std::string> cover(Json& summary) {
    const auto& cv = cfg_.covering;
    CoveringResult result;
    if (cfg_.system.kind == "analytic") {
      const AnalyticMap map = AnalyticMap::make(cfg_.system.analytic_map, cfg_.system.analytic_params);
      const BoxDomain q = domain(2);
      AnalyticEvaluator eval(map, 2, 27, derive_seed(cfg_.seed, kLattice));
      if (cv.mode == "subdivision") {
        result = subdivision_algorithm(eval, q, cv.depth);
      } else {
        Eigen::VectorXd seed = Eigen::VectorXd::Zero(2);
        if (cv.seed_point.size() == 2) seed = Eigen::Map<const Eigen::VectorXd>(cv.seed_point.data(), 2);
        result = continuation_classic(eval, q, seed, cv.depth, {cv.seed_depth, 1'000'000}).covering;
      }
    } else {
      const ObservationMap obs = observer();
      const BoxDomain q = domain(obs.dim());
      if (cv.mode == "sweep") {
        SweepOptions opt{cv.n_test_points, cv.horizon, cv.stride, cv.perturbation, derive_seed(cfg_.seed, kSweep)};
        result = continuation_sweep(flow(0.0), obs, q, steady_state(), cv.depth, opt);
      } else if (cv.mode == "subdivision") {
        CDSEvaluator eval(flow(cfg_.system.horizon), obs, ensemble(obs), cv.points_per_box);
        summary["lifted_pairs"] = eval.ensemble().size();
        result = subdivision_algorithm(eval, q, cv.depth);
      } else {
        const StateVector u_star = steady_state();
        LiftedEnsemble lifts;
        Rng rng(derive_seed(cfg_.seed, kEnsemble));
        for (std::size_t p = 0; p < cv.n_test_points; ++p) {
          StateVector u = u_star;
          for (Eigen::Index j = 0; j < u.values.size(); ++j) u.values(j) += cv.perturbation * rng.symmetric();
          lifts.add(LiftedPair{u, obs(u), p, 0});
        }
        Eigen::VectorXd seed = obs(u_star).coords;
        if (static_cast<Eigen::Index>(cv.seed_point.size()) == obs.dim())
          seed = Eigen::Map<const Eigen::VectorXd>(cv.seed_point.data(), obs.dim());
        CDSEvaluator eval(flow(cfg_.system.horizon), obs, std::move(lifts), cv.points_per_box, true);
        result = continuation_classic(eval, q, seed, cv.depth, {cv.seed_depth, 1'000'000}).covering;
      }
    }
    write_covering(path(artifact::covering), result.boxes);
    io::Table levels;
    levels.meta.push_back({"covering_levels", {}});
    levels.columns = {"depth", "boxes", "images", "dropped"};
    levels.rows.resize(static_cast<Eigen::Index>(result.steps.size()), 4);
    for (std::size_t i = 0; i < result.steps.size(); ++i) {
      const auto& st = result.steps[i];
      levels.rows.row(static_cast<Eigen::Index>(i)) << st.depth, static_cast<double>(st.boxes),
          static_cast<double>(st.images), static_cast<double>(st.dropped);
    }
    io::write_table(path(artifact::covering_levels), levels);
    summary["boxes"] = result.boxes.size();
    summary["depth"] = result.boxes.depth();
    summary["dropped"] = result.dropped();
    if (result.boxes.empty()) fmt::print(log_, "[cover] warning: the covering is empty\n");
    if (result.dropped() > 0)
      fmt::print(log_, "[cover] warning: {} images left Q and were dropped\n", result.dropped());
    return {artifact::covering, artifact::covering_levels};
  }

  BoxCollection load_covering() const {
    require(artifact::covering, "cover");
    BoxCollection c = read_covering(path(artifact::covering));
    if (c.size() < 2) throw NumericalFailure("covering has fewer than two boxes");
    return c;
  }

  Eigen::MatrixXd anchors(const BoxCollection& c, std::size_t count) const {
    if (count >= c.size()) {
      if (count > c.size())
        fmt::print(log_, "warning: {} anchors requested but the covering has {} boxes; using all midpoints\n",
                   count, c.size());
      return midpoints(c, std::nullopt, 0);
    }
    return midpoints(c, count, derive_seed(cfg_.seed, kAnchors));
  }

  std::pair<DimensionScan, DimensionScan> scan(const Eigen::MatrixXd& x) const {
    DimensionScan coarse = coarse_scan(x, cfg_.dimension.i_min, cfg_.dimension.i_max);
    DimensionScan fine = refine_scan(x, coarse, cfg_.dimension.n_fine);
    return {std::move(coarse), std::move(fine)};
  }

  std::vector<std::string> dimscan(Json& summary) {
    const BoxCollection c = load_covering();
    const Eigen::MatrixXd x = anchors(c, cfg_.dimension_anchors());
    const auto [coarse, fine] = scan(x);
    write_scan(path(artifact::scan_coarse), coarse);
    write_scan(path(artifact::scan), fine);
    summary["anchors"] = x.rows();
    summary["coarse_eps_star"] = coarse.eps_star;
    summary["coarse_d_int"] = coarse.d_int;
    summary["eps_star"] = fine.eps_star;
    summary["d_int"] = fine.d_int;
    summary["linearity_band"] = {fine.band_lo, fine.band_hi};
    return {artifact::scan_coarse, artifact::scan};
  }

  std::vector<std::string> dmap(Json& summary) {
    const BoxCollection c = load_covering();
    const Eigen::MatrixXd x = anchors(c, cfg_.dmaps.m);
    double eps = 0.0;
    if (cfg_.dmaps.epsilon) {
      eps = *cfg_.dmaps.epsilon;
    } else if (std::filesystem::exists(dir_ / artifact::scan)) {
      eps = read_scan_summary(path(artifact::scan)).eps_star;
    } else {
      fmt::print(log_, "[dmap] epsilon = auto and no dimension scan present; scanning the anchors\n");
      eps = scan(x).second.eps_star;
    }
    MarkovOptions opt;
    opt.n_ev = std::min<Eigen::Index>(cfg_.dmaps.n_ev, x.rows() - 1);
    opt.lanczos.seed = derive_seed(cfg_.seed, kEigen);
    const KernelParams params = KernelParams::with_epsilon(eps, cfg_.dmaps.alpha, cfg_.dmaps.min_neighbors);
    const DiffusionModel model = build_markov(x, params, opt);
    for (const auto& w : model.report.warnings) fmt::print(log_, "[dmap] warning: {}\n", w);
    const auto indices = cfg_.exported_coordinates();
    for (int l : indices)
      if (l > model.n_ev()) throw ConfigError(fmt::format("coordinate {} exceeds the {} computed eigenpairs", l, model.n_ev()));
    write_model(path(artifact::model), model);
    write_embedding(path(artifact::embedding), select_coordinates(model, indices), indices);
    io::Table spec;
    spec.meta.push_back({"spectral_gap", {}});
    spec.columns = {"l", "lambda", "ratio", "residual", "harmonic"};
    const auto rows = spectral_gap_report(model);
    spec.rows.resize(static_cast<Eigen::Index>(rows.size()), 5);
    for (std::size_t i = 0; i < rows.size(); ++i)
      spec.rows.row(static_cast<Eigen::Index>(i)) << static_cast<double>(rows[i].index), rows[i].eigenvalue,
          rows[i].ratio, rows[i].residual, rows[i].harmonic ? 1.0 : 0.0;
    io::write_table(path(artifact::spectrum), spec);
    summary["anchors"] = x.rows();
    summary["epsilon"] = eps;
    summary["components"] = model.report.components;
    summary["eigen_converged"] = model.report.eigen_converged;
    summary["lambda"] = std::vector<double>(model.eigenvalues.data(),
                                            model.eigenvalues.data() + std::min<Eigen::Index>(6, model.eigenvalues.size()));
    return {artifact::model, artifact::embedding, artifact::spectrum};
  }

  DiffusionModel load_model() const {
    require(artifact::model, "dmap");
    return read_model(path(artifact::model));
  }

  std::vector<std::string> extend(Json& summary) {
    const DiffusionModel model = load_model();
    const BoxCollection c = load_covering();
    const Eigen::MatrixXd all = midpoints(c, std::nullopt, 0);
    std::vector<Eigen::Index> rest;
    for (Eigen::Index i = 0; i < all.rows(); ++i)
      if (model.tree->nearest(all.row(i), 1).front().dist2 > 0.0) rest.push_back(i);
    Rng rng(derive_seed(cfg_.seed, kExtension));
    const std::size_t n = std::min(cfg_.dmaps.n_extend, rest.size());
    for (std::size_t i = 0; i < n; ++i) std::swap(rest[i], rest[i + rng.below(rest.size() - i)]);
    rest.resize(n);
    std::sort(rest.begin(), rest.end());
    Eigen::MatrixXd pts(static_cast<Eigen::Index>(n), all.cols());
    for (std::size_t i = 0; i < n; ++i) pts.row(static_cast<Eigen::Index>(i)) = all.row(rest[i]);
    const auto indices = cfg_.exported_coordinates();
    write_embedding(path(artifact::extended), extend_selected(model, pts, indices), indices);
    summary["points"] = n;
    return {artifact::extended};
  }

  std::vector<std::string> export_trajectory(Json& summary) {
    const DiffusionModel model = load_model();
    const std::string source = trajectory_source();
    if (cfg_.export_.trajectory.empty()) require(artifact::trajectory, "simulate");
    else if (!std::filesystem::exists(source)) throw ConfigError("export.trajectory '" + source + "' does not exist");
    std::vector<double> times;
    const auto states = read_trajectory(cfg_.export_.trajectory.empty() ? path(artifact::trajectory) : source, &times);
    const ObservationMap obs = observer();
    Eigen::MatrixXd pts(static_cast<Eigen::Index>(states.size()), obs.dim());
    for (std::size_t i = 0; i < states.size(); ++i) pts.row(static_cast<Eigen::Index>(i)) = obs(states[i]).coords.transpose();
    if (pts.cols() != model.dim()) throw ConfigError("trajectory observations do not match the model dimension");
    const auto indices = cfg_.exported_coordinates();
    write_embedding(path(artifact::trajectory_embedding), extend_selected(model, pts, indices), indices, &times);
    summary["points"] = states.size();
    return {artifact::trajectory_embedding};
  }

  ExperimentConfig cfg_;
  std::ostream& log_;
  std::filesystem::path dir_;
};

}  // namespace atlas::pipeline
