#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mixflow/param_store.hpp"
#include "mixflow/rng.hpp"
#include "mixflow/tape.hpp"

namespace mixflow {

enum class Activation : uint8_t { SiLU, ReLU, Tanh };

const char* activation_name(Activation a);
Activation activation_from_name(const std::string& name);

// Fully-connected network description. When time_embed_dim > 0 the scalar
// time input is mapped through a sinusoidal embedding of that width and
// concatenated to x in front of the first layer.
struct MlpSpec {
  int input_dim = 0;
  std::vector<int> hidden_dims;
  int output_dim = 0;
  Activation activation = Activation::SiLU;
  int time_embed_dim = 0;

  void validate() const;
  int first_in() const { return input_dim + time_embed_dim; }
  // (rows, cols) per layer, hidden layers then the final linear.
  std::vector<std::pair<int, int>> layer_dims() const;
  int64_t param_count() const;
  int n_layers() const { return static_cast<int>(hidden_dims.size()) + 1; }
};

// Sinusoidal embedding, sin half then cos half, frequencies geometric
// from 1 to 1000.
void time_embedding(double t, int dim, std::span<double> out);

std::string layer_weight_name(const std::string& prefix, int layer);
std::string layer_bias_name(const std::string& prefix, int layer);

void register_mlp_params(ParamStore& store, const std::string& prefix, const MlpSpec& spec);

// Kaiming-uniform fan-in for weights, zero biases. zero_final_layer forces
// the last linear (weights and bias) to zero.
void init_mlp_params(ParamStore& store, const std::string& prefix, const MlpSpec& spec, Rng& rng,
                     bool zero_final_layer = false);

// Resolved value pointers for allocation-free evaluation. Works over raw
// parameters or an EMA shadow.
struct MlpParamsRef {
  std::vector<const double*> w, b;
};
MlpParamsRef resolve_mlp_params(const ParamStore& store, const std::string& prefix,
                                const MlpSpec& spec);
MlpParamsRef resolve_mlp_params(const ParamStore& store, const EmaState& ema,
                                const std::string& prefix, const MlpSpec& spec);

size_t mlp_scratch_size(const MlpSpec& spec);

// Pure forward pass; thread-safe with caller-owned scratch.
void mlp_eval(const MlpParamsRef& params, const MlpSpec& spec, std::span<const double> x,
              std::optional<double> t, std::span<double> out, std::vector<double>& scratch);

// Allocating convenience wrapper over mlp_eval.
std::vector<double> mlp_forward(const ParamStore& store, const std::string& prefix,
                                const MlpSpec& spec, std::span<const double> x,
                                std::optional<double> t = std::nullopt);

// Parameter bindings for the taped forward pass; grads may point into a
// chunk-local buffer instead of the store's own grad arrays.
struct MlpTapeParams {
  struct Layer {
    const double* w;
    double* gw;
    const double* b;
    double* gb;
    int rows, cols;
  };
  std::vector<Layer> layers;
};

// grad_base == nullptr routes gradients into the store's grad arrays;
// otherwise into grad_base (flat buffer with the store's layout).
MlpTapeParams bind_mlp_params(ParamStore& store, const std::string& prefix, const MlpSpec& spec,
                              double* grad_base = nullptr);

NodeRef mlp_forward(Tape& tape, const MlpTapeParams& params, const MlpSpec& spec, NodeRef x,
                    std::optional<double> t = std::nullopt);

}  // namespace mixflow
