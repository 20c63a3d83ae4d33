#include "mixflow/flow.hpp"

#include <atomic>
#include <chrono>
#include <cmath>

#include "mixflow/distributions.hpp"

namespace mixflow {

FlowModel FlowModel::create(const ModelSpec& spec, uint64_t seed) {
  FlowModel m;
  m.spec = spec;
  m.seed = seed;
  Rng init_rng(mix_seed(seed, stream::kInit));
  register_mlp_params(m.params, kVelocityPrefix, spec.v_spec);
  init_mlp_params(m.params, kVelocityPrefix, spec.v_spec, init_rng);
  if (spec.regime != Regime::Independent) {
    register_source_params(m.params, spec.kappa, spec.src_spec);
    init_source_params(m.params, spec.kappa, spec.src_spec, init_rng);
  }
  m.ema = EmaState(m.params, spec.ema_decay);
  m.opt = AdamState(m.params);
  return m;
}

MlpVelocity::MlpVelocity(const FlowModel& model, bool use_ema)
    : spec_(model.spec.v_spec), d_(model.spec.d) {
  ref_ = use_ema ? resolve_mlp_params(model.params, model.ema, kVelocityPrefix, spec_)
                 : resolve_mlp_params(model.params, kVelocityPrefix, spec_);
}

void MlpVelocity::eval(std::span<const double> x, double t, std::span<double> out) const {
  static thread_local std::vector<double> scratch;
  mlp_eval(ref_, spec_, x,
           spec_.time_embed_dim > 0 ? std::optional<double>(t) : std::nullopt, out, scratch);
}

std::vector<double> velocity(const FlowModel& model, std::span<const double> x, double t,
                             bool use_ema) {
  MlpVelocity v(model, use_ema);
  std::vector<double> out(static_cast<size_t>(model.spec.d));
  v.eval(x, t, out);
  return out;
}

double per_example_loss(const Velocity& v, std::span<const double> x0,
                        std::span<const double> x1, double t) {
  const int d = static_cast<int>(x0.size());
  std::vector<double> xt(d), vel(d);
  interpolate_state(x0, x1, t, xt);
  v.eval(xt, t, vel);
  double s = 0.0;
  for (int i = 0; i < d; ++i) {
    const double r = x1[i] - x0[i] - vel[i];
    s += r * r;
  }
  if (!std::isfinite(s))
    throw TrainingDivergence("non-finite velocity output in loss", "", -1);
  return s;
}

void TrainConfig::validate() const {
  if (iterations < 0) throw ConfigError("iterations must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (beta < 0.0) throw ConfigError("beta must be >= 0");
  if (lr <= 0.0) throw ConfigError("lr must be > 0");
  if (warmup_steps < 0) throw ConfigError("warmup_steps must be >= 0");
  if (ema_decay < 0.0 || ema_decay >= 1.0) throw ConfigError("ema_decay must lie in [0,1)");
  if (time_embed_dim < 0 || time_embed_dim % 2 != 0)
    throw ConfigError("time_embed_dim must be even and >= 0");
}

ModelSpec make_model_spec(const TrainConfig& cfg, const Dataset& ds) {
  ModelSpec ms;
  ms.d = ds.d;
  ms.regime = cfg.regime;
  ms.ema_decay = cfg.ema_decay;
  switch (cfg.kappa_kind) {
    case KappaKind::DataSample:
      ms.kappa = KappaMode::data_sample();
      break;
    case KappaKind::ClassLabel:
      ms.kappa = KappaMode::class_label(ds.n_classes,
                                        cfg.label_embed_dim > 0 ? cfg.label_embed_dim : ds.d);
      break;
    case KappaKind::IndependentNoise:
      ms.kappa = KappaMode::independent_noise(cfg.kappa_noise_dim > 0 ? cfg.kappa_noise_dim
                                                                      : ds.d);
      break;
  }
  ms.v_spec = MlpSpec{ds.d, cfg.v_hidden, ds.d, cfg.activation, cfg.time_embed_dim};
  ms.src_spec = MlpSpec{ms.kappa.kappa_dim(ds.d), cfg.src_hidden, 2 * ds.d, cfg.activation, 0};
  ms.v_spec.validate();
  if (cfg.regime != Regime::Independent) ms.src_spec.validate();
  return ms;
}

BatchDraw draw_training_batch(const TrainConfig& cfg, const Dataset& ds, const KappaMode& mode,
                              int64_t iteration) {
  Rng rng(mix_seed(cfg.seed, stream::kTrain, static_cast<uint64_t>(iteration)));
  const int n = cfg.batch_size;
  const int d = ds.d;
  const bool want_w = cfg.regime == Regime::MixFlow;
  const bool want_noise =
      cfg.regime != Regime::Independent && mode.kind == KappaKind::IndependentNoise;
  BatchDraw b;
  b.n = n;
  b.d = d;
  b.x1.resize(static_cast<size_t>(n) * d);
  b.labels.resize(n);
  b.t.resize(n);
  b.w.assign(n, cfg.regime == Regime::KappaFC ? 1.0 : 0.0);
  if (want_noise) b.kappa_noise.resize(static_cast<size_t>(n) * mode.noise_dim);
  b.eps.resize(static_cast<size_t>(n) * d);
  for (int i = 0; i < n; ++i) {
    ds.draw(rng, {b.x1.data() + int64_t(i) * d, (size_t)d}, b.labels[i]);
    b.t[i] = rng.uniform();
    if (want_w) b.w[i] = rng.uniform();
    if (want_noise)
      rng.normal_fill({b.kappa_noise.data() + int64_t(i) * mode.noise_dim,
                       (size_t)mode.noise_dim});
    rng.normal_fill({b.eps.data() + int64_t(i) * d, (size_t)d});
  }
  return b;
}

namespace {

constexpr int kChunk = 32;

struct ExampleView {
  std::span<const double> x1, eps, kappa_noise;
  int label = 0;
  double t = 0.0, w = 0.0;
};

ExampleView example_view(const BatchDraw& b, const KappaMode& mode, int i) {
  ExampleView e;
  e.x1 = {b.x1.data() + int64_t(i) * b.d, (size_t)b.d};
  e.eps = {b.eps.data() + int64_t(i) * b.d, (size_t)b.d};
  if (!b.kappa_noise.empty())
    e.kappa_noise = {b.kappa_noise.data() + int64_t(i) * mode.noise_dim, (size_t)mode.noise_dim};
  e.label = b.labels[i];
  e.t = b.t[i];
  e.w = b.w[i];
  return e;
}

struct TapeBindings {
  MlpTapeParams v_params, src_params;
};

TapeBindings bind_model(FlowModel& model, double* grad_base) {
  TapeBindings b;
  b.v_params = bind_mlp_params(model.params, kVelocityPrefix, model.spec.v_spec, grad_base);
  if (model.has_source())
    b.src_params = bind_mlp_params(model.params, kSourcePrefix, model.spec.src_spec, grad_base);
  return b;
}

struct ExampleLoss {
  double recon = 0.0, kl = 0.0;
};

// Builds the full loss graph for one example and optionally backpropagates
// seed_scale (1/batch) through it.
ExampleLoss run_example(Tape& tape, FlowModel& model, const TapeBindings& bind,
                        double* grad_base, const ExampleView& in, double beta,
                        KlTarget kl_target, double seed_scale, bool do_backward) {
  tape.reset();
  const ModelSpec& ms = model.spec;
  const int d = ms.d;
  ExampleLoss out;
  NodeRef loss;

  if (ms.regime == Regime::Independent) {
    // x0 is the raw standard-normal draw; only theta is differentiable.
    std::vector<double> xt(d), diff(d);
    for (int i = 0; i < d; ++i) {
      xt[i] = in.t * in.x1[i] + (1.0 - in.t) * in.eps[i];
      diff[i] = in.x1[i] - in.eps[i];
    }
    NodeRef v = mlp_forward(tape, bind.v_params, ms.v_spec, tape.constant(xt),
                            ms.v_spec.time_embed_dim > 0 ? std::optional<double>(in.t)
                                                         : std::nullopt);
    NodeRef r = tape.lincomb(-1.0, v, 1.0, tape.constant(diff));
    NodeRef recon = tape.squared_norm(r);
    out.recon = tape.scalar(recon);
    loss = recon;
  } else {
    NodeRef kappa = build_kappa_node(tape, ms.kappa, model.params, in.x1,
                                     ms.kappa.kind == KappaKind::ClassLabel
                                         ? std::optional<int>(in.label)
                                         : std::nullopt,
                                     in.kappa_noise, grad_base);
    auto [mean, log_var] = predict_source_node(tape, bind.src_params, ms.src_spec, kappa);
    NodeRef mean_w = mean, log_var_w = log_var;
    if (ms.regime == Regime::MixFlow) {
      mean_w = mix_mean_node(tape, mean, in.w);
      log_var_w = mix_log_var_node(tape, log_var, in.w);
    }
    NodeRef x0 = sample_node(tape, mean_w, log_var_w, in.eps);
    std::vector<double> tx1(d);
    for (int i = 0; i < d; ++i) tx1[i] = in.t * in.x1[i];
    NodeRef xt = tape.lincomb(1.0 - in.t, x0, 1.0, tape.constant(tx1));
    NodeRef v = mlp_forward(tape, bind.v_params, ms.v_spec, xt,
                            ms.v_spec.time_embed_dim > 0 ? std::optional<double>(in.t)
                                                         : std::nullopt);
    NodeRef neg = tape.lincomb(-1.0, x0, -1.0, v);
    NodeRef r = tape.lincomb(1.0, neg, 1.0, tape.constant(in.x1));
    NodeRef recon = tape.squared_norm(r);
    NodeRef kl = kl_target == KlTarget::MixedDistribution
                     ? tape.kl_std_normal(mean_w, log_var_w)
                     : tape.kl_std_normal(mean, log_var);
    out.recon = tape.scalar(recon);
    out.kl = tape.scalar(kl);
    loss = tape.lincomb(1.0, recon, beta, kl);
  }

  if (!std::isfinite(out.recon) || !std::isfinite(out.kl))
    throw TrainingDivergence("non-finite per-example loss", "", -1);
  if (do_backward) tape.backward(loss, seed_scale);
  return out;
}

}  // namespace

LossParts accumulate_batch_gradients(FlowModel& model, const BatchDraw& draw, double beta,
                                     KlTarget kl_target, Exec exec, BatchWorkspace& ws,
                                     int64_t iteration) {
  const int n = draw.n;
  const double inv_n = 1.0 / n;
  LossParts lp;

  if (exec == Exec::Serial) {
    if (ws.tapes.empty()) ws.tapes.resize(1);
    TapeBindings bind = bind_model(model, nullptr);
    double recon_sum = 0.0, kl_sum = 0.0;
    for (int i = 0; i < n; ++i) {
      ExampleLoss el;
      try {
        el = run_example(ws.tapes[0], model, bind, nullptr,
                         example_view(draw, model.spec.kappa, i), beta, kl_target, inv_n, true);
      } catch (const TrainingDivergence& e) {
        throw TrainingDivergence(std::string(e.what()), e.param_name, iteration);
      }
      recon_sum += el.recon;
      kl_sum += el.kl;
    }
    lp.recon = recon_sum * inv_n;
    lp.kl = kl_sum * inv_n;
  } else {
    const int n_chunks = (n + kChunk - 1) / kChunk;
    const int64_t psize = model.params.total_size();
    if (static_cast<int>(ws.tapes.size()) < n_chunks) ws.tapes.resize(n_chunks);
    ws.chunk_grads.assign(static_cast<size_t>(n_chunks) * psize, 0.0);
    ws.chunk_recon.assign(n_chunks, 0.0);
    ws.chunk_kl.assign(n_chunks, 0.0);
    std::atomic<bool> bad{false};
#pragma omp parallel for schedule(dynamic)
    for (int c = 0; c < n_chunks; ++c) {
      double* gbase = ws.chunk_grads.data() + static_cast<int64_t>(c) * psize;
      TapeBindings bind = bind_model(model, gbase);
      double recon_sum = 0.0, kl_sum = 0.0;
      const int lo = c * kChunk, hi = std::min(n, lo + kChunk);
      for (int i = lo; i < hi && !bad.load(std::memory_order_relaxed); ++i) {
        try {
          ExampleLoss el = run_example(ws.tapes[c], model, bind, gbase,
                                       example_view(draw, model.spec.kappa, i), beta, kl_target,
                                       inv_n, true);
          recon_sum += el.recon;
          kl_sum += el.kl;
        } catch (const TrainingDivergence&) {
          bad.store(true, std::memory_order_relaxed);
        }
      }
      ws.chunk_recon[c] = recon_sum;
      ws.chunk_kl[c] = kl_sum;
    }
    if (bad.load()) throw TrainingDivergence("non-finite per-example loss", "", iteration);
    // Fixed chunk-order reduction: independent of thread count.
    double recon_sum = 0.0, kl_sum = 0.0;
    for (int c = 0; c < n_chunks; ++c) {
      model.params.accumulate_grads(
          {ws.chunk_grads.data() + static_cast<int64_t>(c) * psize, (size_t)psize});
      recon_sum += ws.chunk_recon[c];
      kl_sum += ws.chunk_kl[c];
    }
    lp.recon = recon_sum * inv_n;
    lp.kl = kl_sum * inv_n;
  }
  lp.total = lp.recon + beta * lp.kl;
  return lp;
}

LossParts mixflow_loss(FlowModel& model, const Dataset& ds, int batch_size, double beta,
                       KlTarget kl_target, Rng& rng) {
  // Same per-example draw order as training, but from the caller's stream.
  const KappaMode& mode = model.spec.kappa;
  const bool want_w = model.spec.regime == Regime::MixFlow;
  const bool want_noise =
      model.spec.regime != Regime::Independent && mode.kind == KappaKind::IndependentNoise;
  BatchDraw b;
  b.n = batch_size;
  b.d = ds.d;
  b.x1.resize(static_cast<size_t>(batch_size) * ds.d);
  b.labels.resize(batch_size);
  b.t.resize(batch_size);
  b.w.assign(batch_size, model.spec.regime == Regime::KappaFC ? 1.0 : 0.0);
  if (want_noise) b.kappa_noise.resize(static_cast<size_t>(batch_size) * mode.noise_dim);
  b.eps.resize(static_cast<size_t>(batch_size) * ds.d);
  for (int i = 0; i < batch_size; ++i) {
    ds.draw(rng, {b.x1.data() + int64_t(i) * ds.d, (size_t)ds.d}, b.labels[i]);
    b.t[i] = rng.uniform();
    if (want_w) b.w[i] = rng.uniform();
    if (want_noise)
      rng.normal_fill({b.kappa_noise.data() + int64_t(i) * mode.noise_dim,
                       (size_t)mode.noise_dim});
    rng.normal_fill({b.eps.data() + int64_t(i) * ds.d, (size_t)ds.d});
  }

  Tape tape;
  TapeBindings bind = bind_model(model, nullptr);
  double recon_sum = 0.0, kl_sum = 0.0;
  for (int i = 0; i < batch_size; ++i) {
    ExampleLoss el = run_example(tape, model, bind, nullptr, example_view(b, mode, i), beta,
                                 kl_target, 0.0, false);
    recon_sum += el.recon;
    kl_sum += el.kl;
  }
  LossParts lp;
  lp.recon = recon_sum / batch_size;
  lp.kl = kl_sum / batch_size;
  lp.total = lp.recon + beta * lp.kl;
  return lp;
}

TrainResult train(const TrainConfig& cfg, const Dataset& ds, const TrainCallbacks& cb) {
  cfg.validate();
  ModelSpec ms = make_model_spec(cfg, ds);
  FlowModel model = FlowModel::create(ms, cfg.seed);
  BatchWorkspace ws;
  TrainResult res;
  FlowModel last_good = model;
  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };

  try {
    for (int64_t it = 0; it < cfg.iterations; ++it) {
      BatchDraw draw = draw_training_batch(cfg, ds, ms.kappa, it);
      model.params.zero_grads();
      LossParts lp =
          accumulate_batch_gradients(model, draw, cfg.beta, cfg.kl_target, cfg.exec, ws, it);
      if (!std::isfinite(lp.total)) throw TrainingDivergence("non-finite batch loss", "", it);
      if (cfg.clip_grad_norm > 0.0) {
        const double norm = model.params.grad_norm();
        if (norm > cfg.clip_grad_norm) model.params.scale_grads(cfg.clip_grad_norm / norm);
      }
      const double lr = lr_schedule(it, cfg.warmup_steps, cfg.lr);
      try {
        adam_step(model.params, model.opt, lr);
      } catch (const TrainingDivergence& e) {
        throw TrainingDivergence(std::string(e.what()), e.param_name, it);
      }
      ema_update(model.ema, model.params);
      model.iteration = it + 1;

      if (cfg.log_interval > 0 && (it + 1) % cfg.log_interval == 0)
        res.history.push_back({it + 1, lp.recon, lp.kl, cfg.beta, lr, elapsed()});
      if (cfg.checkpoint_interval > 0 && (it + 1) % cfg.checkpoint_interval == 0) {
        last_good = model;
        if (cb.on_checkpoint && it + 1 < cfg.iterations) cb.on_checkpoint(model, it + 1);
      }
    }
  } catch (const TrainingDivergence& e) {
    res.model = std::move(last_good);
    res.diverged = true;
    res.diverged_at = e.iteration;
    return res;
  }
  if (cb.on_checkpoint) cb.on_checkpoint(model, cfg.iterations);
  res.model = std::move(model);
  return res;
}

}  // namespace mixflow
