#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "invariant_atlas/core/error.hpp"
#include "invariant_atlas/dynamics.hpp"

namespace atlas::pipeline {

using Json = nlohmann::ordered_json;

enum class Scale { desk, paper };

inline const char* to_string(Scale s) { return s == Scale::desk ? "desk" : "paper"; }

inline Scale parse_scale(const std::string& s) {
  if (s == "desk") return Scale::desk;
  if (s == "paper") return Scale::paper;
  throw ConfigError("scale must be 'desk' or 'paper', got '" + s + "'");
}

struct SystemSection {
  std::string kind = "ks";  // ks | mackey_glass | analytic
  KSConfig ks;
  MGConfig mg;
  std::string analytic_map = "henon";
  std::map<std::string, double> analytic_params;
  double horizon = 2.0;  // T of the time-T map used by subdivision / classic continuation
};

/// Long-run integration used for the POD snapshots and the exported trajectory.
struct SimulateSection {
  double total_time = 2000.0;
  double stride = 0.2;
  double transient_fraction = 0.25;
};

struct ObservationSection {
  std::string kind = "pod";  // pod | delay
  int k = 7;
  double mu_ref = 15.0;      // parameter at which the POD basis is computed
};

struct CoveringSection {
  std::string mode = "sweep";  // sweep | classic | subdivision
  int depth = 28;
  std::vector<double> lower;
  std::vector<double> upper;
  // sweep
  double horizon = 800.0;
  double stride = 0.2;
  std::size_t n_test_points = 1000;
  double perturbation = 1e-4;
  // classic
  int seed_depth = 0;
  std::vector<double> seed_point;  // observation-space seed; empty: R(u*)
  // lifted evaluator
  std::size_t points_per_box = 0;  // 0: every lifted pair of the box
  std::size_t ensemble_histories = 100;
  double ensemble_transient = 200.0;
  double ensemble_stride = 1.0;
  std::size_t ensemble_samples = 500;
};

struct DimensionSection {
  std::size_t anchors = 0;  // 0: same count as dmaps.m
  int i_min = -30;
  int i_max = 10;
  int n_fine = 50;
};

struct DmapsSection {
  std::optional<double> epsilon;  // empty: eps* of the dimension scan
  double alpha = 1.0;
  int min_neighbors = 8;
  int n_ev = 20;
  int n_coords = 3;
  std::vector<int> coordinates;  // eigenvector indices to export; empty: 1..n_coords
  std::size_t m = 1000;
  std::size_t n_extend = 5000;
};

struct ExportSection {
  std::string trajectory;  // empty: the trajectory written by `simulate`
};

struct ExperimentConfig {
  std::string recipe = "ks";  // ks | mg | none
  Scale scale = Scale::desk;
  std::uint64_t seed = 1;
  std::string output = "run";
  SystemSection system;
  SimulateSection simulate;
  ObservationSection observation;
  CoveringSection covering;
  DimensionSection dimension;
  DmapsSection dmaps;
  ExportSection export_;

  std::vector<int> exported_coordinates() const {
    if (!dmaps.coordinates.empty()) return dmaps.coordinates;
    std::vector<int> out;
    for (int l = 1; l <= dmaps.n_coords; ++l) out.push_back(l);
    return out;
  }

  std::size_t dimension_anchors() const { return dimension.anchors ? dimension.anchors : dmaps.m; }

  void validate() const {
    auto fail = [](const std::string& msg) { throw ConfigError(msg); };
    if (system.kind != "ks" && system.kind != "mackey_glass" && system.kind != "analytic")
      fail("system.kind must be ks, mackey_glass or analytic");
    try {
      if (system.kind == "ks") system.ks.validate();
      if (system.kind == "mackey_glass") system.mg.validate();
      if (system.kind == "analytic") (void)AnalyticMap::make(system.analytic_map, system.analytic_params);
    } catch (const InvalidArgument& e) {
      fail(std::string("system: ") + e.what());
    }
    if (!(system.horizon >= 0.0)) fail("system.horizon must be >= 0");
    if (!(simulate.total_time > 0.0 && simulate.stride > 0.0)) fail("simulate: times must be positive");
    if (!(simulate.transient_fraction >= 0.0 && simulate.transient_fraction < 1.0))
      fail("simulate.transient_fraction must lie in [0, 1)");
    if (observation.kind != "pod" && observation.kind != "delay") fail("observation.kind must be pod or delay");
    if (observation.k < 1) fail("observation.k must be >= 1");
    if (observation.kind == "pod" && system.kind == "mackey_glass")
      fail("pod observation requires the ks system");
    if (observation.kind == "delay" && system.kind == "ks")
      fail("delay observation requires the mackey_glass system");
    if (observation.kind == "delay" && observation.k < 2) fail("delay observation needs k >= 2");
    if (!(observation.mu_ref > 0.0)) fail("observation.mu_ref must be positive");
    if (covering.mode != "sweep" && covering.mode != "classic" && covering.mode != "subdivision")
      fail("covering.mode must be sweep, classic or subdivision");
    if (covering.mode == "sweep" && system.kind == "analytic") fail("sweep mode needs a flow system");
    if (covering.depth < 0 || covering.depth > 64) fail("covering.depth must lie in [0, 64]");
    if (covering.lower.size() != covering.upper.size()) fail("covering.lower/upper must have equal length");
    if (!(covering.horizon > 0.0 && covering.stride > 0.0)) fail("covering: horizon and stride must be positive");
    if (covering.seed_depth < 0 || covering.seed_depth > covering.depth)
      fail("covering.seed_depth must lie in [0, depth]");
    if (dimension.i_min >= dimension.i_max) fail("dimension: need i_min < i_max");
    if (dimension.n_fine < 2) fail("dimension.n_fine must be >= 2");
    if (dmaps.epsilon && !(*dmaps.epsilon > 0.0)) fail("dmaps.epsilon must be positive or \"auto\"");
    if (!(dmaps.alpha >= 0.0 && dmaps.alpha <= 1.0)) fail("dmaps.alpha must lie in [0, 1]");
    if (dmaps.min_neighbors < 1) fail("dmaps.min_neighbors must be >= 1");
    if (dmaps.n_ev < 1) fail("dmaps.n_ev must be >= 1");
    if (dmaps.n_coords < 0 || dmaps.n_coords > dmaps.n_ev) fail("dmaps.n_coords must lie in [0, n_ev]");
    for (int c : dmaps.coordinates)
      if (c < 1 || c > dmaps.n_ev) fail("dmaps.coordinates entries must lie in [1, n_ev]");
    if (dmaps.m < 2) fail("dmaps.m must be >= 2");
  }
};

inline Json to_json(const ExperimentConfig& c) {
  Json j;
  j["recipe"] = c.recipe;
  j["scale"] = to_string(c.scale);
  j["seed"] = c.seed;
  j["output"] = c.output;
  Json params(Json::value_t::object);
  for (const auto& [k, v] : c.system.analytic_params) params[k] = v;
  j["system"] = {{"kind", c.system.kind},
                 {"horizon", c.system.horizon},
                 {"ks", {{"mu", c.system.ks.mu}, {"n_modes", c.system.ks.n_modes}, {"dt", c.system.ks.dt}}},
                 {"mackey_glass",
                  {{"beta", c.system.mg.beta},
                   {"gamma", c.system.mg.gamma},
                   {"eta", c.system.mg.eta},
                   {"tau", c.system.mg.tau},
                   {"n_history", c.system.mg.n_history}}},
                 {"analytic", {{"map", c.system.analytic_map}, {"params", params}}}};
  j["simulate"] = {{"total_time", c.simulate.total_time},
                   {"stride", c.simulate.stride},
                   {"transient_fraction", c.simulate.transient_fraction}};
  j["observation"] = {{"kind", c.observation.kind}, {"k", c.observation.k}, {"mu_ref", c.observation.mu_ref}};
  const auto& cv = c.covering;
  j["covering"] = {{"mode", cv.mode},
                   {"depth", cv.depth},
                   {"lower", cv.lower},
                   {"upper", cv.upper},
                   {"horizon", cv.horizon},
                   {"stride", cv.stride},
                   {"n_test_points", cv.n_test_points},
                   {"perturbation", cv.perturbation},
                   {"seed_depth", cv.seed_depth},
                   {"seed_point", cv.seed_point},
                   {"points_per_box", cv.points_per_box},
                   {"ensemble_histories", cv.ensemble_histories},
                   {"ensemble_transient", cv.ensemble_transient},
                   {"ensemble_stride", cv.ensemble_stride},
                   {"ensemble_samples", cv.ensemble_samples}};
  j["dimension"] = {{"anchors", c.dimension.anchors},
                    {"i_min", c.dimension.i_min},
                    {"i_max", c.dimension.i_max},
                    {"n_fine", c.dimension.n_fine}};
  j["dmaps"] = {{"epsilon", c.dmaps.epsilon ? Json(*c.dmaps.epsilon) : Json("auto")},
                {"alpha", c.dmaps.alpha},
                {"min_neighbors", c.dmaps.min_neighbors},
                {"n_ev", c.dmaps.n_ev},
                {"n_coords", c.dmaps.n_coords},
                {"coordinates", c.dmaps.coordinates},
                {"m", c.dmaps.m},
                {"n_extend", c.dmaps.n_extend}};
  j["export"] = {{"trajectory", c.export_.trajectory}};
  return j;
}

namespace detail {

/// Every key of `given` must exist in `known` (the fully populated defaults).
inline void check_known_keys(const Json& given, const Json& known, const std::string& prefix) {
  for (auto it = given.begin(); it != given.end(); ++it) {
    const std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!known.contains(it.key())) {
      if (prefix == "system.analytic.params") continue;
      throw ConfigError("unknown config key '" + path + "'");
    }
    if (it->is_object() && known[it.key()].is_object()) check_known_keys(*it, known[it.key()], path);
  }
}

template <class T>
void read(const Json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("config key '" + where + "." + key + "' has the wrong type");
  }
}

}  // namespace detail

inline ExperimentConfig from_json(const Json& j) {
  ExperimentConfig c;
  detail::check_known_keys(j, to_json(c), "");
  detail::read(j, "recipe", c.recipe, "");
  if (j.contains("scale")) c.scale = parse_scale(j.at("scale").get<std::string>());
  detail::read(j, "seed", c.seed, "");
  detail::read(j, "output", c.output, "");
  if (j.contains("system")) {
    const auto& s = j.at("system");
    detail::read(s, "kind", c.system.kind, "system");
    detail::read(s, "horizon", c.system.horizon, "system");
    if (s.contains("ks")) {
      const auto& k = s.at("ks");
      detail::read(k, "mu", c.system.ks.mu, "system.ks");
      detail::read(k, "n_modes", c.system.ks.n_modes, "system.ks");
      detail::read(k, "dt", c.system.ks.dt, "system.ks");
    }
    if (s.contains("mackey_glass")) {
      const auto& m = s.at("mackey_glass");
      detail::read(m, "beta", c.system.mg.beta, "system.mackey_glass");
      detail::read(m, "gamma", c.system.mg.gamma, "system.mackey_glass");
      detail::read(m, "eta", c.system.mg.eta, "system.mackey_glass");
      detail::read(m, "tau", c.system.mg.tau, "system.mackey_glass");
      detail::read(m, "n_history", c.system.mg.n_history, "system.mackey_glass");
    }
    if (s.contains("analytic")) {
      const auto& a = s.at("analytic");
      detail::read(a, "map", c.system.analytic_map, "system.analytic");
      detail::read(a, "params", c.system.analytic_params, "system.analytic");
    }
  }
  if (j.contains("simulate")) {
    const auto& s = j.at("simulate");
    detail::read(s, "total_time", c.simulate.total_time, "simulate");
    detail::read(s, "stride", c.simulate.stride, "simulate");
    detail::read(s, "transient_fraction", c.simulate.transient_fraction, "simulate");
  }
  if (j.contains("observation")) {
    const auto& o = j.at("observation");
    detail::read(o, "kind", c.observation.kind, "observation");
    detail::read(o, "k", c.observation.k, "observation");
    detail::read(o, "mu_ref", c.observation.mu_ref, "observation");
  }
  if (j.contains("covering")) {
    const auto& v = j.at("covering");
    auto& cv = c.covering;
    detail::read(v, "mode", cv.mode, "covering");
    detail::read(v, "depth", cv.depth, "covering");
    detail::read(v, "lower", cv.lower, "covering");
    detail::read(v, "upper", cv.upper, "covering");
    detail::read(v, "horizon", cv.horizon, "covering");
    detail::read(v, "stride", cv.stride, "covering");
    detail::read(v, "n_test_points", cv.n_test_points, "covering");
    detail::read(v, "perturbation", cv.perturbation, "covering");
    detail::read(v, "seed_depth", cv.seed_depth, "covering");
    detail::read(v, "seed_point", cv.seed_point, "covering");
    detail::read(v, "points_per_box", cv.points_per_box, "covering");
    detail::read(v, "ensemble_histories", cv.ensemble_histories, "covering");
    detail::read(v, "ensemble_transient", cv.ensemble_transient, "covering");
    detail::read(v, "ensemble_stride", cv.ensemble_stride, "covering");
    detail::read(v, "ensemble_samples", cv.ensemble_samples, "covering");
  }
  if (j.contains("dimension")) {
    const auto& d = j.at("dimension");
    detail::read(d, "anchors", c.dimension.anchors, "dimension");
    detail::read(d, "i_min", c.dimension.i_min, "dimension");
    detail::read(d, "i_max", c.dimension.i_max, "dimension");
    detail::read(d, "n_fine", c.dimension.n_fine, "dimension");
  }
  if (j.contains("dmaps")) {
    const auto& d = j.at("dmaps");
    if (d.contains("epsilon")) {
      const auto& e = d.at("epsilon");
      if (e.is_string() && e.get<std::string>() == "auto") c.dmaps.epsilon.reset();
      else if (e.is_number()) c.dmaps.epsilon = e.get<double>();
      else throw ConfigError("dmaps.epsilon must be a number or \"auto\"");
    }
    detail::read(d, "alpha", c.dmaps.alpha, "dmaps");
    detail::read(d, "min_neighbors", c.dmaps.min_neighbors, "dmaps");
    detail::read(d, "n_ev", c.dmaps.n_ev, "dmaps");
    detail::read(d, "n_coords", c.dmaps.n_coords, "dmaps");
    detail::read(d, "coordinates", c.dmaps.coordinates, "dmaps");
    detail::read(d, "m", c.dmaps.m, "dmaps");
    detail::read(d, "n_extend", c.dmaps.n_extend, "dmaps");
  }
  if (j.contains("export")) detail::read(j.at("export"), "trajectory", c.export_.trajectory, "export");
  return c;
}

/// Applies `key.path=value`; the value is parsed as JSON when possible and
/// taken as a string otherwise. The key must already exist in `j`.
inline void apply_override(Json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override must look like key=value: '" + assignment + "'");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  Json* node = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    const bool last = dot == std::string::npos;
    const bool free_map = key.rfind("system.analytic.params.", 0) == 0 && last;
    if (!node->is_object() || (!node->contains(part) && !free_map))
      throw ConfigError("unknown config key '" + key + "'");
    node = &(*node)[part];
    if (last) break;
    start = dot + 1;
  }
  Json value = Json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  *node = std::move(value);
}

inline Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  Json j = Json::parse(in, nullptr, false, true);
  if (j.is_discarded() || !j.is_object()) throw ConfigError("config file '" + path + "' is not a JSON object");
  return j;
}

}  // namespace atlas::pipeline
