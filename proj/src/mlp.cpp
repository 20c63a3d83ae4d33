#include "mixflow/mlp.hpp"

#include <cmath>

namespace mixflow {

const char* activation_name(Activation a) {
  switch (a) {
    case Activation::SiLU: return "silu";
    case Activation::ReLU: return "relu";
    case Activation::Tanh: return "tanh";
  }
  return "silu";
}

Activation activation_from_name(const std::string& name) {
  if (name == "silu") return Activation::SiLU;
  if (name == "relu") return Activation::ReLU;
  if (name == "tanh") return Activation::Tanh;
  throw ConfigError("unknown activation: " + name);
}

void MlpSpec::validate() const {
  if (input_dim <= 0) throw ConfigError("input_dim must be positive");
  if (output_dim <= 0) throw ConfigError("output_dim must be positive");
  for (int h : hidden_dims)
    if (h <= 0) throw ConfigError("hidden dims must be positive");
  if (time_embed_dim < 0) throw ConfigError("time_embed_dim must be >= 0");
  if (time_embed_dim % 2 != 0) throw ConfigError("time_embed_dim must be even");
}

std::vector<std::pair<int, int>> MlpSpec::layer_dims() const {
  std::vector<std::pair<int, int>> dims;
  int in = first_in();
  for (int h : hidden_dims) {
    dims.emplace_back(h, in);
    in = h;
  }
  dims.emplace_back(output_dim, in);
  return dims;
}

int64_t MlpSpec::param_count() const {
  int64_t n = 0;
  for (auto [rows, cols] : layer_dims()) n += int64_t(rows) * cols + rows;
  return n;
}

void time_embedding(double t, int dim, std::span<double> out) {
  const int half = dim / 2;
  for (int j = 0; j < half; ++j) {
    const double freq =
        half > 1 ? std::pow(1000.0, static_cast<double>(j) / (half - 1)) : 1.0;
    out[j] = std::sin(freq * t);
    out[half + j] = std::cos(freq * t);
  }
}

std::string layer_weight_name(const std::string& prefix, int layer) {
  return prefix + ".l" + std::to_string(layer) + ".W";
}
std::string layer_bias_name(const std::string& prefix, int layer) {
  return prefix + ".l" + std::to_string(layer) + ".b";
}

void register_mlp_params(ParamStore& store, const std::string& prefix, const MlpSpec& spec) {
  spec.validate();
  auto dims = spec.layer_dims();
  for (size_t l = 0; l < dims.size(); ++l) {
    store.add(layer_weight_name(prefix, static_cast<int>(l)), {dims[l].first, dims[l].second});
    store.add(layer_bias_name(prefix, static_cast<int>(l)), {dims[l].first});
  }
}

void init_mlp_params(ParamStore& store, const std::string& prefix, const MlpSpec& spec, Rng& rng,
                     bool zero_final_layer) {
  auto dims = spec.layer_dims();
  for (size_t l = 0; l < dims.size(); ++l) {
    auto& w = store.at(layer_weight_name(prefix, static_cast<int>(l)));
    auto& b = store.at(layer_bias_name(prefix, static_cast<int>(l)));
    const bool zero = zero_final_layer && l + 1 == dims.size();
    const double bound = std::sqrt(6.0 / dims[l].second);
    for (double& v : w.value) v = zero ? 0.0 : rng.uniform(-bound, bound);
    std::fill(b.value.begin(), b.value.end(), 0.0);
  }
}

MlpParamsRef resolve_mlp_params(const ParamStore& store, const std::string& prefix,
                                const MlpSpec& spec) {
  MlpParamsRef ref;
  for (int l = 0; l < spec.n_layers(); ++l) {
    ref.w.push_back(store.at(layer_weight_name(prefix, l)).value.data());
    ref.b.push_back(store.at(layer_bias_name(prefix, l)).value.data());
  }
  return ref;
}

MlpParamsRef resolve_mlp_params(const ParamStore& store, const EmaState& ema,
                                const std::string& prefix, const MlpSpec& spec) {
  MlpParamsRef ref;
  for (int l = 0; l < spec.n_layers(); ++l) {
    ref.w.push_back(ema.shadow.data() + store.at(layer_weight_name(prefix, l)).offset);
    ref.b.push_back(ema.shadow.data() + store.at(layer_bias_name(prefix, l)).offset);
  }
  return ref;
}

namespace {

// Same fixed-order dot product as the tape kernels.
inline double dot_fixed(const double* w, const double* x, int64_t n) {
  double acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  int64_t i = 0;
  for (; i + 8 <= n; i += 8)
    for (int k = 0; k < 8; ++k) acc[k] = std::fma(w[i + k], x[i + k], acc[k]);
  double tail = 0.0;
  for (; i < n; ++i) tail = std::fma(w[i], x[i], tail);
  return (((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]))) +
         tail;
}

inline void apply_activation(Activation a, std::span<double> v) {
  switch (a) {
    case Activation::SiLU:
      for (double& x : v) x = x / (1.0 + std::exp(-x));
      break;
    case Activation::ReLU:
      for (double& x : v) x = x > 0.0 ? x : 0.0;
      break;
    case Activation::Tanh:
      for (double& x : v) x = std::tanh(x);
      break;
  }
}

}  // namespace

size_t mlp_scratch_size(const MlpSpec& spec) {
  int maxw = spec.first_in();
  for (int h : spec.hidden_dims) maxw = std::max(maxw, h);
  maxw = std::max(maxw, spec.output_dim);
  return 2 * static_cast<size_t>(maxw);
}

void mlp_eval(const MlpParamsRef& params, const MlpSpec& spec, std::span<const double> x,
              std::optional<double> t, std::span<double> out, std::vector<double>& scratch) {
  if (static_cast<int>(x.size()) != spec.input_dim) throw ShapeError("mlp input size mismatch");
  if (static_cast<int>(out.size()) != spec.output_dim) throw ShapeError("mlp output size mismatch");
  if (t.has_value() != (spec.time_embed_dim > 0))
    throw ConfigError("time input must be supplied exactly when time_embed_dim > 0");
  scratch.resize(mlp_scratch_size(spec));
  const size_t half = scratch.size() / 2;
  double* cur = scratch.data();
  double* nxt = scratch.data() + half;

  std::copy(x.begin(), x.end(), cur);
  if (spec.time_embed_dim > 0)
    time_embedding(*t, spec.time_embed_dim, {cur + spec.input_dim, (size_t)spec.time_embed_dim});

  auto dims = spec.layer_dims();
  for (size_t l = 0; l < dims.size(); ++l) {
    const auto [rows, cols] = dims[l];
    const double* W = params.w[l];
    const double* b = params.b[l];
    for (int o = 0; o < rows; ++o) nxt[o] = b[o] + dot_fixed(W + int64_t(o) * cols, cur, cols);
    if (l + 1 < dims.size()) apply_activation(spec.activation, {nxt, (size_t)rows});
    std::swap(cur, nxt);
  }
  std::copy(cur, cur + spec.output_dim, out.begin());
}

std::vector<double> mlp_forward(const ParamStore& store, const std::string& prefix,
                                const MlpSpec& spec, std::span<const double> x,
                                std::optional<double> t) {
  MlpParamsRef ref = resolve_mlp_params(store, prefix, spec);
  std::vector<double> out(static_cast<size_t>(spec.output_dim));
  std::vector<double> scratch;
  mlp_eval(ref, spec, x, t, out, scratch);
  return out;
}

MlpTapeParams bind_mlp_params(ParamStore& store, const std::string& prefix, const MlpSpec& spec,
                              double* grad_base) {
  MlpTapeParams p;
  auto dims = spec.layer_dims();
  for (size_t l = 0; l < dims.size(); ++l) {
    auto& w = store.at(layer_weight_name(prefix, static_cast<int>(l)));
    auto& b = store.at(layer_bias_name(prefix, static_cast<int>(l)));
    MlpTapeParams::Layer layer;
    layer.w = w.value.data();
    layer.b = b.value.data();
    layer.gw = grad_base ? grad_base + w.offset : w.grad.data();
    layer.gb = grad_base ? grad_base + b.offset : b.grad.data();
    layer.rows = dims[l].first;
    layer.cols = dims[l].second;
    p.layers.push_back(layer);
  }
  return p;
}

NodeRef mlp_forward(Tape& tape, const MlpTapeParams& params, const MlpSpec& spec, NodeRef x,
                    std::optional<double> t) {
  if (t.has_value() != (spec.time_embed_dim > 0))
    throw ConfigError("time input must be supplied exactly when time_embed_dim > 0");
  NodeRef h = x;
  if (spec.time_embed_dim > 0) {
    std::vector<double> emb(static_cast<size_t>(spec.time_embed_dim));
    time_embedding(*t, spec.time_embed_dim, emb);
    h = tape.concat(h, tape.constant(emb));
  }
  for (size_t l = 0; l < params.layers.size(); ++l) {
    const auto& layer = params.layers[l];
    NodeRef w = tape.param(layer.w, layer.gw, int64_t(layer.rows) * layer.cols);
    NodeRef b = tape.param(layer.b, layer.gb, layer.rows);
    h = tape.linear(w, b, h, layer.rows, layer.cols);
    if (l + 1 < params.layers.size()) {
      switch (spec.activation) {
        case Activation::SiLU: h = tape.silu(h); break;
        case Activation::ReLU: h = tape.relu(h); break;
        case Activation::Tanh: h = tape.tanh(h); break;
      }
    }
  }
  return h;
}

}  // namespace mixflow
