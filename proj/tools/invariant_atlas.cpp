#include <CLI11.hpp>
#include <fmt/core.h>

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "invariant_atlas/pipeline/recipes.hpp"
#include "invariant_atlas/pipeline/stages.hpp"

namespace {

enum ExitCode { kOk = 0, kConfig = 2, kNumerical = 3, kMissing = 4 };

}  // namespace

int main(int argc, char** argv) {
  using namespace atlas;
  using namespace atlas::pipeline;

  CLI::App app{"Embedded attractor coverings and diffusion-map atlases"};
  std::string stage_name;
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> scale_name;
  std::vector<std::string> overrides;
  app.add_option("stage", stage_name,
                 "simulate | pod | cover | dimscan | dmap | extend | export | all | config-dump")
      ->required();
  app.add_option("--config", config_path, "JSON experiment configuration");
  app.add_option("--seed", seed, "run seed");
  app.add_option("--scale", scale_name, "desk | paper");
  app.add_option("--override", overrides, "dotted.key=value (repeatable)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    const Json file = config_path.empty() ? Json::object() : read_json_file(config_path);
    std::optional<Scale> scale;
    if (scale_name) scale = parse_scale(*scale_name);
    const ExperimentConfig cfg = resolve_config(file, scale, seed, overrides);
    if (stage_name == "config-dump") {
      std::cout << to_json(cfg).dump(2) << '\n';
      return kOk;
    }
    if (stage_name != "all" && stage_name != "simulate" && stage_name != "pod" && stage_name != "cover" &&
        stage_name != "dimscan" && stage_name != "dmap" && stage_name != "extend" && stage_name != "export")
      throw ConfigError("unknown stage '" + stage_name + "'");
    Runner runner(cfg, std::cerr);
    runner.run(parse_stage(stage_name));
    return kOk;
  } catch (const MissingPrerequisite& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kMissing;
  } catch (const ConfigError& e) {
    fmt::print(stderr, "config error: {}\n", e.what());
    return kConfig;
  } catch (const InvalidArgument& e) {
    fmt::print(stderr, "config error: {}\n", e.what());
    return kConfig;
  } catch (const Error& e) {
    fmt::print(stderr, "numerical failure: {}\n", e.what());
    return kNumerical;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kNumerical;
  }
}
