#pragma once

#include <optional>
#include <string>

#include "mixflow/config.hpp"

namespace mixflow {

// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitDivergence = 3;
inline constexpr int kExitBudget = 4;

struct TrainCmdOptions {
  std::string config_path;
  std::string out_override;
  std::optional<uint64_t> seed_override;
  bool deterministic = false;
  bool force = false;
  int export_dataset = 0;  // also write this many dataset rows as CSV
  bool quiet = false;
};

// Runs one training job into {output_dir}/{config-hash}/ and returns the
// exit code. A completed run directory is immutable: re-running the same
// hash is a no-op unless force is set.
int run_train_cmd(const TrainCmdOptions& opt, std::string* run_dir_out = nullptr);

struct SampleCmdOptions {
  std::string ckpt;
  std::string solver = "euler";
  int steps = 128;
  double rtol = 1e-5;
  double atol = 1e-5;
  int max_nfe = 1000000;
  double w = 0.0;
  std::string kappa_from = "none";  // none | dataset | file:<path>
  int n = 2048;
  uint64_t seed = 0;
  bool deterministic = false;
  bool raw_weights = false;  // default: EMA weights
  std::string out = "samples.csv";
  bool quiet = false;
};

int run_sample_cmd(const SampleCmdOptions& opt);

struct EvalCmdOptions {
  std::string ckpt;
  std::string metric = "curvature";
  int n = -1;  // -1 = metric default
  std::string solver = "euler";
  int steps = 128;
  double rtol = 1e-5;
  double atol = 1e-5;
  int max_nfe = 1000000;
  double w = 0.0;
  int t_grid = 128;
  std::string method = "exact";  // w2: exact | sliced
  int n_projections = 256;
  std::string samples_a, samples_b;  // w2 on existing CSV files
  uint64_t seed = 0;
  bool deterministic = false;
  bool raw_weights = false;
  std::string out = "report.json";
  bool quiet = false;
};

int run_eval_cmd(const EvalCmdOptions& opt);

struct SweepCmdOptions {
  std::string config_path;
  std::string out_override;
  bool deterministic = false;
  bool force = false;
  bool quiet = false;
};

int run_sweep_cmd(const SweepCmdOptions& opt);

// Helpers shared with tests.
void write_samples_csv(const std::string& path, std::span<const double> samples, int n, int d);
std::vector<double> read_samples_csv(const std::string& path, int* d_out);
SolverSpec make_solver_spec(const std::string& name, int steps, double rtol, double atol,
                            int max_nfe);

}  // namespace mixflow
