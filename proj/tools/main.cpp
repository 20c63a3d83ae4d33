#include <iostream>

#include <CLI11.hpp>

#include "mixflow/cli_lib.hpp"
#include "mixflow/solvers.hpp"

using namespace mixflow;

namespace {

int dispatch(const std::function<int()>& fn) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const InputError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const TrainingDivergence& e) {
    std::cerr << "divergence: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const BudgetExceeded& e) {
    std::cerr << "budget exceeded: " << e.what() << "\n";
    return kExitBudget;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  apply_thread_cap();

  CLI::App app{"rectified-flow lab: learnable forward couplings and mixture sources"};
  app.require_subcommand(1);

  TrainCmdOptions train_opt;
  uint64_t train_seed = 0;
  bool train_has_seed = false;
  auto* train = app.add_subcommand("train", "train a model from a config file");
  train->add_option("--config", train_opt.config_path, "experiment config (JSON)")->required();
  train->add_option("--out", train_opt.out_override, "override output_dir");
  train->add_option("--seed", train_seed, "override training seed")
      ->each([&](const std::string&) { train_has_seed = true; });
  train->add_flag("--deterministic", train_opt.deterministic,
                  "single-threaded, bit-reproducible run");
  train->add_flag("--force", train_opt.force, "re-run even if the run directory is complete");
  train->add_option("--export-dataset", train_opt.export_dataset,
                    "also write this many dataset rows to dataset.csv");
  train->add_flag("--quiet", train_opt.quiet, "suppress progress output");

  SampleCmdOptions sample_opt;
  auto* sample = app.add_subcommand("sample", "draw samples from a trained model");
  sample->add_option("--ckpt", sample_opt.ckpt, "checkpoint file")->required();
  sample->add_option("--solver", sample_opt.solver, "euler|heun2|rk45")
      ->check(CLI::IsMember({"euler", "heun2", "rk45"}));
  sample->add_option("--steps", sample_opt.steps, "fixed-step solver steps");
  sample->add_option("--rtol", sample_opt.rtol, "rk45 relative tolerance");
  sample->add_option("--atol", sample_opt.atol, "rk45 absolute tolerance");
  sample->add_option("--max-nfe", sample_opt.max_nfe, "rk45 evaluation budget");
  sample->add_option("--w", sample_opt.w, "mixture weight for the initial distribution");
  sample->add_option("--kappa-from", sample_opt.kappa_from, "none|dataset|file:<path>");
  sample->add_option("--n", sample_opt.n, "number of samples");
  sample->add_option("--seed", sample_opt.seed, "sampling seed");
  sample->add_flag("--deterministic", sample_opt.deterministic, "single-threaded sampling");
  sample->add_flag("--raw-weights", sample_opt.raw_weights, "use raw instead of EMA weights");
  sample->add_option("--out", sample_opt.out, "output CSV path");
  sample->add_flag("--quiet", sample_opt.quiet, "suppress output");

  EvalCmdOptions eval_opt;
  auto* eval = app.add_subcommand("eval", "evaluate a metric on a trained model");
  eval->add_option("--ckpt", eval_opt.ckpt, "checkpoint file");
  eval->add_option("--metric", eval_opt.metric, "curvature|doi|w2|straightness")->required();
  eval->add_option("--n", eval_opt.n, "sample/trajectory count (metric default if omitted)");
  eval->add_option("--solver", eval_opt.solver, "euler|heun2|rk45")
      ->check(CLI::IsMember({"euler", "heun2", "rk45"}));
  eval->add_option("--steps", eval_opt.steps, "fixed-step solver steps");
  eval->add_option("--rtol", eval_opt.rtol, "rk45 relative tolerance");
  eval->add_option("--atol", eval_opt.atol, "rk45 absolute tolerance");
  eval->add_option("--max-nfe", eval_opt.max_nfe, "rk45 evaluation budget");
  eval->add_option("--w", eval_opt.w, "mixture weight used when sampling for w2");
  eval->add_option("--t-grid", eval_opt.t_grid, "time grid size for doi");
  eval->add_option("--method", eval_opt.method, "w2 method: exact|sliced")
      ->check(CLI::IsMember({"exact", "sliced"}));
  eval->add_option("--n-projections", eval_opt.n_projections, "sliced w2 projections");
  eval->add_option("--samples-a", eval_opt.samples_a, "w2: first sample CSV");
  eval->add_option("--samples-b", eval_opt.samples_b, "w2: second sample CSV");
  eval->add_option("--seed", eval_opt.seed, "evaluation seed");
  eval->add_flag("--deterministic", eval_opt.deterministic, "single-threaded evaluation");
  eval->add_flag("--raw-weights", eval_opt.raw_weights, "use raw instead of EMA weights");
  eval->add_option("--out", eval_opt.out, "report JSON path");
  eval->add_flag("--quiet", eval_opt.quiet, "suppress output");

  SweepCmdOptions sweep_opt;
  auto* sweep = app.add_subcommand("sweep", "run a grid of cells and aggregate over seeds");
  sweep->add_option("--config", sweep_opt.config_path, "sweep config (JSON)")->required();
  sweep->add_option("--out", sweep_opt.out_override, "override output_dir");
  sweep->add_flag("--deterministic", sweep_opt.deterministic, "sequential, bit-reproducible");
  sweep->add_flag("--force", sweep_opt.force, "re-run cached training runs");
  sweep->add_flag("--quiet", sweep_opt.quiet, "suppress output");

  CLI11_PARSE(app, argc, argv);

  if (*train) {
    if (train_has_seed) train_opt.seed_override = train_seed;
    return dispatch([&] { return run_train_cmd(train_opt); });
  }
  if (*sample) return dispatch([&] { return run_sample_cmd(sample_opt); });
  if (*eval) return dispatch([&] { return run_eval_cmd(eval_opt); });
  if (*sweep) return dispatch([&] { return run_sweep_cmd(sweep_opt); });
  return 1;
}
