#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "mixflow/common.hpp"

namespace mixflow {

struct ParamEntry {
  std::string name;
  std::vector<int> shape;
  std::vector<double> value;
  std::vector<double> grad;
  int64_t offset = 0;  // position in the flattened parameter vector
};

// Flat, named collection of trainable arrays with paired gradient buffers.
// Entry order is insertion order and defines the flat layout used by the
// optimizer, the EMA shadow, and chunked gradient buffers.
class ParamStore {
 public:
  int add(const std::string& name, std::vector<int> shape);

  bool has(const std::string& name) const { return index_.count(name) != 0; }
  ParamEntry& at(const std::string& name);
  const ParamEntry& at(const std::string& name) const;

  std::vector<ParamEntry>& entries() { return entries_; }
  const std::vector<ParamEntry>& entries() const { return entries_; }

  int64_t total_size() const { return total_size_; }

  void zero_grads();

  // Adds a flat gradient buffer (layout per entry offsets) into the grads.
  void accumulate_grads(std::span<const double> flat);

  // Global L2 norm of all gradients.
  double grad_norm() const;
  void scale_grads(double s);

 private:
  std::vector<ParamEntry> entries_;
  std::unordered_map<std::string, int> index_;
  int64_t total_size_ = 0;
};

// Adam first/second moment buffers, flat layout mirroring a ParamStore.
struct AdamState {
  explicit AdamState(const ParamStore& store)
      : step(0), m(store.total_size(), 0.0), v(store.total_size(), 0.0) {}
  AdamState() = default;
  int64_t step = 0;
  std::vector<double> m, v;
};

// Bias-corrected Adam update in place; throws TrainingDivergence naming the
// offending parameter if any gradient element is non-finite.
void adam_step(ParamStore& params, AdamState& state, double lr, double beta1 = 0.9,
               double beta2 = 0.999, double eps = 1e-8);

// Exponential moving average of the parameter values.
struct EmaState {
  EmaState() = default;
  EmaState(const ParamStore& store, double decay);
  double decay = 0.999;
  std::vector<double> shadow;  // flat layout mirroring the tracked store

  std::span<const double> shadow_of(const ParamEntry& e) const {
    return {shadow.data() + e.offset, e.value.size()};
  }
};

void ema_update(EmaState& ema, const ParamStore& params);

// Linear warmup to base_lr over warmup_steps, then constant.
double lr_schedule(int64_t step, int64_t warmup_steps, double base_lr);

}  // namespace mixflow
