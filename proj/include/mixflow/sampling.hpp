#pragma once

#include <optional>
#include <span>
#include <vector>

#include "mixflow/flow.hpp"

namespace mixflow {

// Conditioning input for one generated sample. Exactly one of vec/label is
// meaningful, matching the model's kappa mode; empty = unconditional.
struct KappaInput {
  std::optional<std::vector<double>> vec;  // DataSample / IndependentNoise
  std::optional<int> label;                // ClassLabel
  bool given() const { return vec.has_value() || label.has_value(); }
};

// Draws x_init from N(w*mu, w*var + (1-w)) when kappa is given, from
// N(0, I) otherwise; consumes d normals either way.
std::vector<double> draw_init(const FlowModel& model, double w, const KappaInput& kappa,
                              Rng& rng);

// One sample: init per the branching above, then integrate the field.
std::vector<double> sample_one(const FlowModel& model, double w, const KappaInput& kappa,
                               const SolverSpec& solver, Rng& rng, bool use_ema = true,
                               int* nfe = nullptr);

// Where sampling-time kappas come from.
enum class KappaSource : uint8_t { None, Dataset, File };

struct SampleConfig {
  int n = 0;
  double w = 0.0;
  KappaSource kappa_source = KappaSource::None;
  SolverSpec solver = SolverSpec::euler(128);
  uint64_t seed = 0;
  bool use_ema = true;
  Exec exec = Exec::Parallel;
};

struct SampleBatch {
  int n = 0, d = 0;
  std::vector<double> samples;  // n x d
  int64_t total_nfe = 0;
  double wall_s = 0.0;
};

// n independent trajectories with per-trajectory streams derived from
// (seed, index); results do not depend on thread count. Dataset-sourced
// kappas draw (x1, label) per trajectory; file-sourced kappas cycle through
// the provided rows/labels.
SampleBatch sample_batch(const FlowModel& model, const SampleConfig& cfg, const Dataset& ds,
                         std::span<const double> file_kappa = {},
                         std::span<const int> file_labels = {});

}  // namespace mixflow
