// Compares the serial reference kernels against the OpenMP paths:
// batch gradient accumulation, trajectory batches, and sliced W2.
#include <chrono>
#include <cstdio>
#include <vector>

#include "mixflow/flow.hpp"
#include "mixflow/metrics.hpp"
#include "mixflow/sampling.hpp"

using namespace mixflow;

namespace {

double now_s() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

template <class F>
double time_best(F&& f, int reps) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const double t0 = now_s();
    f();
    best = std::min(best, now_s() - t0);
  }
  return best;
}

struct ConstVelocity : Velocity {
  int d;
  explicit ConstVelocity(int d_) : d(d_) {}
  int dim() const override { return d; }
  void eval(std::span<const double>, double, std::span<double> out) const override {
    for (double& v : out) v = 1.0;
  }
};

}  // namespace

int main() {
  apply_thread_cap();
  std::printf("%-28s %12s %12s %8s\n", "kernel", "serial (s)", "openmp (s)", "speedup");

  // batch gradient accumulation
  {
    Dataset ds = Dataset::eight_gaussians();
    TrainConfig cfg;
    cfg.regime = Regime::MixFlow;
    cfg.batch_size = 256;
    cfg.v_hidden = {256, 256, 256};
    cfg.src_hidden = {128, 128};
    ModelSpec ms = make_model_spec(cfg, ds);
    FlowModel model = FlowModel::create(ms, 1);
    BatchDraw draw = draw_training_batch(cfg, ds, ms.kappa, 0);
    BatchWorkspace ws;
    auto run = [&](Exec exec) {
      model.params.zero_grads();
      accumulate_batch_gradients(model, draw, cfg.beta, cfg.kl_target, exec, ws);
    };
    const double ts = time_best([&] { run(Exec::Serial); }, 3);
    const double tp = time_best([&] { run(Exec::Parallel); }, 3);
    std::printf("%-28s %12.4f %12.4f %8.2fx\n", "batch_gradients b=256", ts, tp, ts / tp);
  }

  // trajectory batch (model-free field keeps the comparison solver-bound)
  {
    MlpSpec spec{2, {256, 256, 256}, 2, Activation::SiLU, 64};
    ParamStore store;
    register_mlp_params(store, "f", spec);
    Rng rng(7);
    init_mlp_params(store, "f", spec, rng);
    struct NetVelocity : Velocity {
      MlpParamsRef ref;
      MlpSpec spec;
      int dim() const override { return 2; }
      void eval(std::span<const double> x, double t, std::span<double> out) const override {
        static thread_local std::vector<double> scratch;
        mlp_eval(ref, spec, x, t, out, scratch);
      }
    } v;
    v.ref = resolve_mlp_params(store, "f", spec);
    v.spec = spec;
    const int n = 512;
    std::vector<double> inits(n * 2, 0.5), finals(n * 2);
    const SolverSpec solver = SolverSpec::euler(64);
    const double ts =
        time_best([&] { solve_endpoints(v, inits, n, solver, finals, Exec::Serial); }, 3);
    const double tp =
        time_best([&] { solve_endpoints(v, inits, n, solver, finals, Exec::Parallel); }, 3);
    std::printf("%-28s %12.4f %12.4f %8.2fx\n", "solve_endpoints n=512", ts, tp, ts / tp);
  }

  // curvature over a trivial field
  {
    ConstVelocity v(2);
    const double ts = time_best([&] { curvature(v, 2000, SolverSpec::euler(128), 1,
                                                 Exec::Serial); }, 3);
    const double tp = time_best([&] { curvature(v, 2000, SolverSpec::euler(128), 1,
                                                 Exec::Parallel); }, 3);
    std::printf("%-28s %12.4f %12.4f %8.2fx\n", "curvature n=2000", ts, tp, ts / tp);
  }
  return 0;
}
