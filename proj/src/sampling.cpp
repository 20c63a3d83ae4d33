#include "mixflow/sampling.hpp"

#include <chrono>
#include <cmath>
#include <exception>

#include "mixflow/distributions.hpp"

namespace mixflow {

std::vector<double> draw_init(const FlowModel& model, double w, const KappaInput& kappa,
                              Rng& rng) {
  const int d = model.spec.d;
  if (!kappa.given()) {
    std::vector<double> x(static_cast<size_t>(d));
    rng.normal_fill(x);
    return x;
  }
  if (!model.has_source())
    throw ConfigError("kappa given, but this model was trained with an independent coupling");
  if (w < 0.0 || w > 1.0) throw DomainError("w must lie in [0,1]");

  std::vector<double> kvec;
  if (model.spec.kappa.kind == KappaKind::ClassLabel) {
    if (!kappa.label.has_value()) throw InputError("model expects a class-label kappa");
    const auto& table = model.params.at(kEmbeddingName);
    const int dim = table.shape[1];
    if (*kappa.label < 0 || *kappa.label >= model.spec.kappa.num_classes)
      throw InputError("label out of range");
    const double* row = table.value.data() + static_cast<int64_t>(*kappa.label) * dim;
    kvec.assign(row, row + dim);
  } else {
    if (!kappa.vec.has_value()) throw InputError("model expects a vector kappa");
    kvec = *kappa.vec;
  }
  DiagGaussian base = predict_source(model.params, model.spec.src_spec, kvec);
  DiagGaussian mixed = mix(base, w);
  return sample(mixed, rng);
}

std::vector<double> sample_one(const FlowModel& model, double w, const KappaInput& kappa,
                               const SolverSpec& solver, Rng& rng, bool use_ema, int* nfe) {
  std::vector<double> init = draw_init(model, w, kappa, rng);
  MlpVelocity v(model, use_ema);
  std::vector<double> out(init.size());
  solve_endpoint(v, init, solver, out, nfe);
  return out;
}

SampleBatch sample_batch(const FlowModel& model, const SampleConfig& cfg, const Dataset& ds,
                         std::span<const double> file_kappa, std::span<const int> file_labels) {
  const int d = model.spec.d;
  SampleBatch out;
  out.n = cfg.n;
  out.d = d;
  out.samples.resize(static_cast<size_t>(cfg.n) * d);
  if (cfg.n == 0) return out;

  if (cfg.kappa_source != KappaSource::None && !model.has_source())
    throw ConfigError("kappa requested, but this model was trained with an independent coupling");

  if (cfg.kappa_source == KappaSource::File) {
    if (model.spec.kappa.kind == KappaKind::ClassLabel) {
      if (file_labels.empty()) throw InputError("no labels supplied for kappa");
    } else {
      const int kd = model.spec.kappa.kappa_dim(d);
      if (file_kappa.empty() || file_kappa.size() % static_cast<size_t>(kd) != 0)
        throw InputError("kappa file rows do not match the model's kappa dimension");
    }
  }

  MlpVelocity v(model, cfg.use_ema);
  std::vector<int64_t> nfes(cfg.n, 0);
  const auto t0 = std::chrono::steady_clock::now();
  std::exception_ptr eptr = nullptr;

  auto body = [&](int i) {
    Rng rng(mix_seed(cfg.seed, stream::kSample, static_cast<uint64_t>(i)));
    KappaInput kin;
    if (cfg.kappa_source == KappaSource::Dataset) {
      std::vector<double> x1(static_cast<size_t>(d));
      int label = 0;
      ds.draw(rng, x1, label);
      if (model.spec.kappa.kind == KappaKind::ClassLabel)
        kin.label = label;
      else if (model.spec.kappa.kind == KappaKind::DataSample)
        kin.vec = x1;
      else {
        std::vector<double> noise(static_cast<size_t>(model.spec.kappa.noise_dim));
        rng.normal_fill(noise);
        kin.vec = std::move(noise);
      }
    } else if (cfg.kappa_source == KappaSource::File) {
      if (model.spec.kappa.kind == KappaKind::ClassLabel) {
        kin.label = file_labels[i % file_labels.size()];
      } else {
        const int kd = model.spec.kappa.kappa_dim(d);
        const int rows = static_cast<int>(file_kappa.size()) / kd;
        const double* row = file_kappa.data() + static_cast<int64_t>(i % rows) * kd;
        kin.vec = std::vector<double>(row, row + kd);
      }
    }
    std::vector<double> init = draw_init(model, cfg.w, kin, rng);
    int nfe = 0;
    solve_endpoint(v, init, cfg.solver,
                   {out.samples.data() + int64_t(i) * d, (size_t)d}, &nfe);
    nfes[i] = nfe;
  };
  auto guarded = [&](int i) {
    try {
      body(i);
    } catch (...) {
#pragma omp critical(mixflow_sample_err)
      if (!eptr) eptr = std::current_exception();
    }
  };

  if (cfg.exec == Exec::Parallel) {
#pragma omp parallel for schedule(dynamic, 16)
    for (int i = 0; i < cfg.n; ++i) guarded(i);
  } else {
    for (int i = 0; i < cfg.n; ++i) guarded(i);
  }
  if (eptr) std::rethrow_exception(eptr);

  for (int64_t nfe : nfes) out.total_nfe += nfe;
  out.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

}  // namespace mixflow
