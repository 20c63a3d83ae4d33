#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mixflow/data.hpp"
#include "mixflow/distributions.hpp"
#include "mixflow/mlp.hpp"

namespace mixflow {

enum class KappaKind : uint8_t { DataSample, ClassLabel, IndependentNoise };

const char* kappa_name(KappaKind k);
KappaKind kappa_from_name(const std::string& name);

// Conditioning-signal description. DataSample feeds x1 itself; ClassLabel
// routes an integer through a learnable embedding table; IndependentNoise
// draws a standard normal independent of x1.
struct KappaMode {
  KappaKind kind = KappaKind::DataSample;
  int num_classes = 0;  // ClassLabel
  int embed_dim = 0;    // ClassLabel; defaults to d
  int noise_dim = 0;    // IndependentNoise; defaults to d

  int kappa_dim(int d) const;
  static KappaMode data_sample() { return {KappaKind::DataSample, 0, 0, 0}; }
  static KappaMode class_label(int num_classes, int embed_dim);
  static KappaMode independent_noise(int dim);
};

enum class Regime : uint8_t { Independent, KappaFC, MixFlow };

const char* regime_name(Regime r);
Regime regime_from_name(const std::string& name);

enum class KlTarget : uint8_t { UnmixedBase, MixedDistribution };

const char* kl_target_name(KlTarget k);
KlTarget kl_target_from_name(const std::string& name);

inline constexpr const char* kSourcePrefix = "src";
inline constexpr const char* kEmbeddingName = "src.embed";

// Registers the source predictor parameters (and the label embedding table
// when applicable) into the store.
void register_source_params(ParamStore& store, const KappaMode& mode, const MlpSpec& src_spec);

// Kaiming-uniform hidden layers; the final layer and the embedding table
// start at zero so the predicted source is exactly N(0, I) for every kappa.
void init_source_params(ParamStore& store, const KappaMode& mode, const MlpSpec& src_spec,
                        Rng& rng);

// Pure kappa construction over frozen parameters. label must be present
// exactly in ClassLabel mode. IndependentNoise consumes noise_dim normals.
std::vector<double> build_kappa(const KappaMode& mode, const ParamStore& phi,
                                std::span<const double> x1, std::optional<int> label, Rng& rng);

// Pure source prediction: maps kappa to 2d outputs split as (mean, log_var).
DiagGaussian predict_source(const ParamStore& phi, const MlpSpec& src_spec,
                            std::span<const double> kappa);

// Taped kappa node. For ClassLabel the node is the embedding row and
// gradients reach the table; embed_grad_base routes them (nullptr = store
// grads). kappa_noise supplies the IndependentNoise draw.
NodeRef build_kappa_node(Tape& tape, const KappaMode& mode, ParamStore& phi,
                         std::span<const double> x1, std::optional<int> label,
                         std::span<const double> kappa_noise, double* grad_base = nullptr);

// Taped source prediction: returns (mean, log_var) nodes of length d.
std::pair<NodeRef, NodeRef> predict_source_node(Tape& tape, const MlpTapeParams& src_params,
                                                const MlpSpec& src_spec, NodeRef kappa);

// One coupled batch: x0/x1 row-major n x d, kappa n x kappa_dim, and the
// mixture weight per example (0 for Independent, 1 for KappaFC).
struct PairBatch {
  int n = 0, d = 0, kappa_dim = 0;
  std::vector<double> x0, x1, kappa, w;
  std::vector<int> label;
};

// Draws (x0, x1, kappa, w) over frozen parameters for a pre-drawn batch of
// (x1, label). Independent: x0 ~ N(0,I). KappaFC: x0 ~ q(x0|kappa), w = 1.
// MixFlow: w ~ U(0,1) per example, x0 from the Gaussian interpolant.
PairBatch draw_pair(Regime regime, const KappaMode& mode, const ParamStore& phi,
                    const MlpSpec& src_spec, std::span<const double> x1_batch,
                    std::span<const int> labels, int d, Rng& rng);

// Convenience: draws the (x1, label) batch from a dataset first.
PairBatch draw_pair(Regime regime, const KappaMode& mode, const ParamStore& phi,
                    const MlpSpec& src_spec, const Dataset& ds, int n, Rng& rng);

// Same draw with the mixture weights pinned per example (test hook for the
// w=0 / w=1 endpoint identities).
PairBatch draw_pair_given_w(Regime regime, const KappaMode& mode, const ParamStore& phi,
                            const MlpSpec& src_spec, std::span<const double> x1_batch,
                            std::span<const int> labels, int d, Rng& rng,
                            std::span<const double> w_values);

}  // namespace mixflow
