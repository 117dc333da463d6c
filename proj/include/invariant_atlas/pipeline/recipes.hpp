#pragma once

#include <optional>
#include <string>
#include <vector>

#include "invariant_atlas/pipeline/config.hpp"

namespace atlas::pipeline {

/// Bounding box of the mu = 15 unstable manifold in the first seven POD
/// coordinates.
inline const std::vector<double>& ks_reference_box() {
  static const std::vector<double> half{8.0, 8.0, 7.0, 6.0, 2.0, 2.0, 0.5};
  return half;
}

/// Kuramoto-Sivashinsky experiment. Paper scale uses the reference box as Q;
/// desk scale doubles Q (so the reference box is a union of cells), divides
/// the test-point and extension counts by 100 and uses 3000 anchors for both
/// the dimension scan and the embedding.
inline ExperimentConfig recipe_ks(double mu, Scale scale) {
  if (!(mu > 0.0)) throw ConfigError("recipe_ks: mu must be positive");
  ExperimentConfig c;
  c.recipe = "ks";
  c.scale = scale;
  c.system.kind = "ks";
  c.system.ks.mu = mu;
  c.system.ks.n_modes = scale == Scale::paper ? 128 : 64;
  c.system.horizon = 0.2;
  c.simulate = SimulateSection{2000.0, 0.2, 0.25};
  c.observation.kind = "pod";
  if (mu == 32.0) {
    c.observation.k = 5;
    c.observation.mu_ref = 32.0;
  } else {
    c.observation.k = 7;
    c.observation.mu_ref = 15.0;
  }
  const auto k = static_cast<std::size_t>(c.observation.k);
  std::vector<double> half(k, 20.0);
  if (k == 7) half = ks_reference_box();
  const double widen = scale == Scale::paper ? 1.0 : 2.0;
  c.covering.lower.resize(k);
  c.covering.upper.resize(k);
  for (std::size_t i = 0; i < k; ++i) {
    c.covering.lower[i] = -widen * half[i];
    c.covering.upper[i] = widen * half[i];
  }
  c.covering.mode = "sweep";
  c.covering.depth = scale == Scale::paper ? 56 : 49;
  c.covering.horizon = 800.0;
  c.covering.stride = 0.2;
  c.covering.n_test_points = scale == Scale::paper ? 100000 : 1000;
  c.dmaps.m = scale == Scale::paper ? 100000 : 3000;
  c.dmaps.n_extend = scale == Scale::paper ? 500000 : 5000;
  c.dmaps.n_coords = 3;
  return c;
}

/// Mackey-Glass experiment with k = 7 delay coordinates on [-tau, 0].
/// n_history = 120 puts the delays tau * j / 6 on the history grid, and
/// Q = [-0.05, 1.55]^7 makes [0, 1.5]^7 a union of cells from depth 35 on.
inline ExperimentConfig recipe_mg(Scale scale) {
  ExperimentConfig c;
  c.recipe = "mg";
  c.scale = scale;
  c.system.kind = "mackey_glass";
  c.system.mg = MGConfig{2.0, 1.0, 9.65, 2.0, 120};
  c.system.horizon = 2.0;
  c.simulate = SimulateSection{600.0, 0.1, 1.0 / 6.0};
  c.observation.kind = "delay";
  c.observation.k = 7;
  c.covering.mode = "subdivision";
  c.covering.depth = scale == Scale::paper ? 63 : 35;
  c.covering.lower.assign(7, -0.05);
  c.covering.upper.assign(7, 1.55);
  c.covering.ensemble_histories = scale == Scale::paper ? 2000 : 200;
  c.covering.ensemble_transient = 200.0;
  c.covering.ensemble_stride = 0.5;
  c.covering.ensemble_samples = scale == Scale::paper ? 50000 : 1000;
  c.dmaps.m = scale == Scale::paper ? 100000 : 5000;
  c.dmaps.n_extend = scale == Scale::paper ? 500000 : 5000;
  c.dmaps.n_coords = 3;
  return c;
}

/// Defaults (recipe at the chosen scale) <- config file <- --override
/// entries <- --scale / --seed.
inline ExperimentConfig resolve_config(const Json& file, std::optional<Scale> cli_scale,
                                       std::optional<std::uint64_t> cli_seed,
                                       const std::vector<std::string>& overrides) {
  Json probe = to_json(ExperimentConfig{});
  probe.merge_patch(file);
  for (const auto& o : overrides) apply_override(probe, o);
  const ExperimentConfig first = from_json(probe);
  const Scale scale = cli_scale.value_or(first.scale);

  ExperimentConfig base;
  if (first.recipe == "ks") base = recipe_ks(first.system.ks.mu, scale);
  else if (first.recipe == "mg") base = recipe_mg(scale);
  else if (first.recipe == "none") base.recipe = "none";
  else throw ConfigError("recipe must be ks, mg or none");

  Json j = to_json(base);
  j.merge_patch(file);
  for (const auto& o : overrides) apply_override(j, o);
  j["scale"] = to_string(scale);
  if (cli_seed) j["seed"] = *cli_seed;
  ExperimentConfig out = from_json(j);
  out.validate();
  return out;
}

}  // namespace atlas::pipeline
