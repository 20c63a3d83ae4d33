#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "mixflow/coupling.hpp"
#include "mixflow/param_store.hpp"
#include "mixflow/solvers.hpp"

namespace mixflow {

inline constexpr const char* kVelocityPrefix = "v";

// Everything needed to evaluate and continue training one model.
struct ModelSpec {
  int d = 2;
  Regime regime = Regime::MixFlow;
  KappaMode kappa;
  MlpSpec v_spec;
  MlpSpec src_spec;  // ignored when regime == Independent
  double ema_decay = 0.999;
};

struct FlowModel {
  ModelSpec spec;
  ParamStore params;
  EmaState ema;
  AdamState opt;
  uint64_t seed = 0;
  int64_t iteration = 0;

  // Registers and initializes all parameters. The velocity net comes first
  // in the flat layout, then the source predictor (and label embedding).
  static FlowModel create(const ModelSpec& spec, uint64_t seed);

  bool has_source() const { return spec.regime != Regime::Independent; }
};

// Velocity-field evaluation over raw or EMA weights; thread-safe.
class MlpVelocity : public Velocity {
 public:
  MlpVelocity(const FlowModel& model, bool use_ema);
  int dim() const override { return d_; }
  void eval(std::span<const double> x, double t, std::span<double> out) const override;

 private:
  MlpParamsRef ref_;
  MlpSpec spec_;
  int d_;
};

// Single evaluation convenience.
std::vector<double> velocity(const FlowModel& model, std::span<const double> x, double t,
                             bool use_ema = false);

// Squared residual of the straight-path velocity at one sampled time:
// ||x1 - x0 - v(x_t, t)||^2 with x_t = t*x1 + (1-t)*x0.
double per_example_loss(const Velocity& v, std::span<const double> x0,
                        std::span<const double> x1, double t);

struct TrainConfig {
  Regime regime = Regime::MixFlow;
  KappaKind kappa_kind = KappaKind::DataSample;
  double beta = 1e-5;
  int64_t iterations = 20000;
  int batch_size = 256;
  double lr = 2e-4;
  int64_t warmup_steps = 500;
  double ema_decay = 0.999;
  uint64_t seed = 0;
  KlTarget kl_target = KlTarget::UnmixedBase;

  double clip_grad_norm = 10.0;  // <= 0 disables clipping
  int64_t log_interval = 100;
  int64_t checkpoint_interval = 5000;
  Exec exec = Exec::Parallel;

  // architecture
  std::vector<int> v_hidden = {256, 256, 256};
  int time_embed_dim = 64;
  std::vector<int> src_hidden = {128, 128};
  Activation activation = Activation::SiLU;
  int label_embed_dim = 0;  // 0 = dataset dimension
  int kappa_noise_dim = 0;  // 0 = dataset dimension

  void validate() const;
};

// Resolves the model layout implied by a config and dataset.
ModelSpec make_model_spec(const TrainConfig& cfg, const Dataset& ds);

// All randomness of one iteration, drawn up front on the training thread so
// the loss kernel is pure. Per example the order is: (x1, label) from the
// dataset, then t, then w (MixFlow only), then the kappa noise (noise mode
// only), then eps.
struct BatchDraw {
  int n = 0, d = 0;
  std::vector<double> x1;
  std::vector<int> labels;
  std::vector<double> t, w;
  std::vector<double> kappa_noise;
  std::vector<double> eps;
};

BatchDraw draw_training_batch(const TrainConfig& cfg, const Dataset& ds, const KappaMode& mode,
                              int64_t iteration);

struct LossParts {
  double total = 0.0, recon = 0.0, kl = 0.0;
};

// Reusable buffers for the batch gradient kernel.
struct BatchWorkspace {
  std::vector<Tape> tapes;
  std::vector<double> chunk_grads;
  std::vector<double> chunk_recon, chunk_kl;
};

// Mean loss over the batch with gradients accumulated into model.params.
// Serial accumulates example by example straight into the store (the
// reference path); Parallel sums fixed-size chunks into private buffers and
// reduces them in chunk order, so the result is independent of the thread
// count.
LossParts accumulate_batch_gradients(FlowModel& model, const BatchDraw& draw, double beta,
                                     KlTarget kl_target, Exec exec, BatchWorkspace& ws,
                                     int64_t iteration = -1);

// Loss components on a freshly drawn batch without touching gradients.
LossParts mixflow_loss(FlowModel& model, const Dataset& ds, int batch_size, double beta,
                       KlTarget kl_target, Rng& rng);

struct HistoryRow {
  int64_t iter = 0;
  double recon = 0.0, kl = 0.0, beta = 0.0, lr = 0.0, wall_s = 0.0;
};

struct TrainResult {
  FlowModel model;
  std::vector<HistoryRow> history;
  bool diverged = false;
  int64_t diverged_at = -1;
};

struct TrainCallbacks {
  // Called at every checkpoint interval and after the final iteration.
  std::function<void(const FlowModel&, int64_t iteration)> on_checkpoint;
};

TrainResult train(const TrainConfig& cfg, const Dataset& ds, const TrainCallbacks& cb = {});

}  // namespace mixflow
