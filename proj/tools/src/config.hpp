#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include <dynpred/pipeline.hpp>
#include <dynpred/serialize.hpp>
#include <dynpred/simulate.hpp>

namespace dynpred::cli {

// One JSON document drives every command; command-line flags only override
// paths, the seed and the thread count.
struct RunConfig {
  json source;  // the document as loaded, after overrides (what the hash covers)
  std::string survival;
  std::string longitudinal;
  std::string truth;       // optional truth.csv for MSEP
  std::string output_dir = "dynpred-out";
  PipelineConfig pipeline;
  bool markers_from_data = false;  // no "markers" block: every marker with the default model
  json marker_defaults = json::object();
  int replicates = 1;
  std::optional<ScenarioSpec> simulation;
  LandmarkOptions landmark;
};

struct Overrides {
  std::optional<std::string> survival, longitudinal, truth, output_dir;
  std::optional<std::uint64_t> seed;
};

RunConfig load_run_config(const std::string& path, const Overrides& overrides = {});
RunConfig parse_run_config(json doc, const std::string& base_dir, const Overrides& overrides = {});

ScenarioSpec parse_scenario(const json& j, double t_lm, double t_hor, std::uint64_t seed);
MarkerConfig parse_marker(const json& j, double t_lm);
MethodConfig parse_method(const json& j);

// FNV-1a 64 over the compact dump of the configuration document, hex encoded.
std::string config_hash(const json& doc);

}  // namespace dynpred::cli
