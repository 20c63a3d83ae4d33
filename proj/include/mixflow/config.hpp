#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "mixflow/flow.hpp"
#include "mixflow/sampling.hpp"

namespace mixflow {

using json = nlohmann::json;

// One metric request attached to a run.
struct EvalSpec {
  std::string metric = "curvature";  // curvature | doi | w2 | straightness
  SolverSpec solver = SolverSpec::euler(128);
  int n = 10000;
  double w = 0.0;
  int t_grid = 128;            // doi
  std::string w2_method = "exact";  // exact | sliced
  int n_projections = 256;
  bool use_ema = true;
  std::vector<uint64_t> seeds = {0};
};

// Full declarative description of one run.
struct ExperimentConfig {
  Dataset dataset = Dataset::eight_gaussians();
  TrainConfig train;
  std::vector<EvalSpec> evals;
  std::string output_dir = "runs";
};

Dataset dataset_from_json(const json& j);
json dataset_to_json(const Dataset& ds);

SolverSpec solver_from_json(const json& j);
json solver_to_json(const SolverSpec& s);

TrainConfig train_config_from_json(const json& j);
json train_config_to_json(const TrainConfig& t);

ExperimentConfig experiment_from_json(const json& j);
// Fully resolved (all defaults filled); this is the canonical form.
json experiment_to_json(const ExperimentConfig& c);

ExperimentConfig load_experiment_config(const std::string& path);

// FNV-1a 64 over the canonical serialization; hex string names the run dir.
std::string config_hash(const json& canonical);
std::string config_hash(const ExperimentConfig& c);

}  // namespace mixflow
