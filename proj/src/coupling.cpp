#include "mixflow/coupling.hpp"

#include <cmath>

namespace mixflow {

const char* kappa_name(KappaKind k) {
  switch (k) {
    case KappaKind::DataSample: return "sample";
    case KappaKind::ClassLabel: return "label";
    case KappaKind::IndependentNoise: return "noise";
  }
  return "sample";
}

KappaKind kappa_from_name(const std::string& name) {
  if (name == "sample") return KappaKind::DataSample;
  if (name == "label") return KappaKind::ClassLabel;
  if (name == "noise") return KappaKind::IndependentNoise;
  throw ConfigError("unknown kappa mode: " + name);
}

const char* regime_name(Regime r) {
  switch (r) {
    case Regime::Independent: return "independent";
    case Regime::KappaFC: return "kappa_fc";
    case Regime::MixFlow: return "mixflow";
  }
  return "independent";
}

Regime regime_from_name(const std::string& name) {
  if (name == "independent") return Regime::Independent;
  if (name == "kappa_fc") return Regime::KappaFC;
  if (name == "mixflow") return Regime::MixFlow;
  throw ConfigError("unknown regime: " + name);
}

const char* kl_target_name(KlTarget k) {
  return k == KlTarget::UnmixedBase ? "unmixed_base" : "mixed_distribution";
}

KlTarget kl_target_from_name(const std::string& name) {
  if (name == "unmixed_base") return KlTarget::UnmixedBase;
  if (name == "mixed_distribution") return KlTarget::MixedDistribution;
  throw ConfigError("unknown kl target: " + name);
}

int KappaMode::kappa_dim(int d) const {
  switch (kind) {
    case KappaKind::DataSample: return d;
    case KappaKind::ClassLabel: return embed_dim > 0 ? embed_dim : d;
    case KappaKind::IndependentNoise: return noise_dim > 0 ? noise_dim : d;
  }
  return d;
}

KappaMode KappaMode::class_label(int num_classes, int embed_dim) {
  if (num_classes <= 0) throw ConfigError("class_label kappa needs num_classes > 0");
  return {KappaKind::ClassLabel, num_classes, embed_dim, 0};
}

KappaMode KappaMode::independent_noise(int dim) {
  return {KappaKind::IndependentNoise, 0, 0, dim};
}

void register_source_params(ParamStore& store, const KappaMode& mode, const MlpSpec& src_spec) {
  register_mlp_params(store, kSourcePrefix, src_spec);
  if (mode.kind == KappaKind::ClassLabel)
    store.add(kEmbeddingName, {mode.num_classes, src_spec.input_dim});
}

void init_source_params(ParamStore& store, const KappaMode& mode, const MlpSpec& src_spec,
                        Rng& rng) {
  init_mlp_params(store, kSourcePrefix, src_spec, rng, /*zero_final_layer=*/true);
  if (mode.kind == KappaKind::ClassLabel) {
    auto& e = store.at(kEmbeddingName);
    std::fill(e.value.begin(), e.value.end(), 0.0);
  }
}

std::vector<double> build_kappa(const KappaMode& mode, const ParamStore& phi,
                                std::span<const double> x1, std::optional<int> label, Rng& rng) {
  switch (mode.kind) {
    case KappaKind::DataSample:
      return {x1.begin(), x1.end()};
    case KappaKind::ClassLabel: {
      if (!label.has_value()) throw InputError("class-label kappa requires a label");
      if (*label < 0 || *label >= mode.num_classes)
        throw InputError("label out of range: " + std::to_string(*label));
      const auto& table = phi.at(kEmbeddingName);
      const int dim = table.shape[1];
      const double* row = table.value.data() + static_cast<int64_t>(*label) * dim;
      return {row, row + dim};
    }
    case KappaKind::IndependentNoise: {
      if (mode.noise_dim <= 0) throw ConfigError("independent-noise kappa needs noise_dim > 0");
      std::vector<double> k(static_cast<size_t>(mode.noise_dim));
      rng.normal_fill(k);
      return k;
    }
  }
  return {};
}

DiagGaussian predict_source(const ParamStore& phi, const MlpSpec& src_spec,
                            std::span<const double> kappa) {
  if (static_cast<int>(kappa.size()) != src_spec.input_dim)
    throw ConfigError("kappa dimension does not match the source predictor input");
  std::vector<double> out = mlp_forward(phi, kSourcePrefix, src_spec, kappa);
  const int d = src_spec.output_dim / 2;
  DiagGaussian g;
  g.mean.assign(out.begin(), out.begin() + d);
  g.log_var.assign(out.begin() + d, out.end());
  return g;
}

NodeRef build_kappa_node(Tape& tape, const KappaMode& mode, ParamStore& phi,
                         std::span<const double> x1, std::optional<int> label,
                         std::span<const double> kappa_noise, double* grad_base) {
  switch (mode.kind) {
    case KappaKind::DataSample:
      return tape.constant(x1);
    case KappaKind::ClassLabel: {
      if (!label.has_value()) throw InputError("class-label kappa requires a label");
      auto& table = phi.at(kEmbeddingName);
      const int dim = table.shape[1];
      const int64_t ofs = static_cast<int64_t>(*label) * dim;
      double* gbase = grad_base ? grad_base + table.offset : table.grad.data();
      return tape.param(table.value.data() + ofs, gbase + ofs, dim);
    }
    case KappaKind::IndependentNoise:
      return tape.constant(kappa_noise);
  }
  throw ConfigError("bad kappa mode");
}

std::pair<NodeRef, NodeRef> predict_source_node(Tape& tape, const MlpTapeParams& src_params,
                                                const MlpSpec& src_spec, NodeRef kappa) {
  if (tape.size(kappa) != src_spec.input_dim)
    throw ConfigError("kappa dimension does not match the source predictor input");
  NodeRef out = mlp_forward(tape, src_params, src_spec, kappa);
  const int d = src_spec.output_dim / 2;
  return {tape.slice(out, 0, d), tape.slice(out, d, d)};
}

namespace {

// Shared by both draw_pair flavors; w drawn or supplied per example.
PairBatch draw_pair_impl(Regime regime, const KappaMode& mode, const ParamStore& phi,
                         const MlpSpec& src_spec, std::span<const double> x1_batch,
                         std::span<const int> labels, int d, Rng& rng,
                         std::span<const double> fixed_w) {
  const int n = static_cast<int>(labels.size());
  if (n == 0) throw InputError("draw_pair: empty batch");
  if (static_cast<int>(x1_batch.size()) != n * d) throw ShapeError("draw_pair: x1 batch shape");
  PairBatch out;
  out.n = n;
  out.d = d;
  out.kappa_dim = regime == Regime::Independent ? 0 : mode.kappa_dim(d);
  out.x0.resize(static_cast<size_t>(n) * d);
  out.x1.assign(x1_batch.begin(), x1_batch.end());
  out.kappa.assign(static_cast<size_t>(n) * out.kappa_dim, 0.0);
  out.w.assign(n, 0.0);
  out.label.assign(labels.begin(), labels.end());

  for (int i = 0; i < n; ++i) {
    std::span<const double> x1{x1_batch.data() + int64_t(i) * d, (size_t)d};
    std::span<double> x0{out.x0.data() + int64_t(i) * d, (size_t)d};
    if (regime == Regime::Independent) {
      rng.normal_fill(x0);
      continue;
    }
    double w = 1.0;
    if (regime == Regime::MixFlow) w = fixed_w.empty() ? rng.uniform() : fixed_w[i];
    std::vector<double> kappa =
        build_kappa(mode, phi, x1, mode.kind == KappaKind::ClassLabel
                                       ? std::optional<int>(labels[i])
                                       : std::nullopt,
                    rng);
    std::copy(kappa.begin(), kappa.end(), out.kappa.begin() + int64_t(i) * out.kappa_dim);
    DiagGaussian g = predict_source(phi, src_spec, kappa);
    if (regime == Regime::MixFlow) g = mix(g, w);
    out.w[i] = regime == Regime::MixFlow ? w : 1.0;
    std::vector<double> draw = sample(g, rng);
    std::copy(draw.begin(), draw.end(), x0.begin());
  }
  return out;
}

}  // namespace

PairBatch draw_pair(Regime regime, const KappaMode& mode, const ParamStore& phi,
                    const MlpSpec& src_spec, std::span<const double> x1_batch,
                    std::span<const int> labels, int d, Rng& rng) {
  return draw_pair_impl(regime, mode, phi, src_spec, x1_batch, labels, d, rng, {});
}

PairBatch draw_pair(Regime regime, const KappaMode& mode, const ParamStore& phi,
                    const MlpSpec& src_spec, const Dataset& ds, int n, Rng& rng) {
  std::vector<double> xs;
  std::vector<int> labels;
  ds.draw_batch(rng, n, xs, labels);
  return draw_pair_impl(regime, mode, phi, src_spec, xs, labels, ds.d, rng, {});
}

PairBatch draw_pair_given_w(Regime regime, const KappaMode& mode, const ParamStore& phi,
                            const MlpSpec& src_spec, std::span<const double> x1_batch,
                            std::span<const int> labels, int d, Rng& rng,
                            std::span<const double> w_values) {
  return draw_pair_impl(regime, mode, phi, src_spec, x1_batch, labels, d, rng, w_values);
}

}  // namespace mixflow
