#include "mixflow/param_store.hpp"

#include <cmath>

namespace mixflow {

int ParamStore::add(const std::string& name, std::vector<int> shape) {
  if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
  int64_t n = 1;
  for (int s : shape) {
    if (s <= 0) throw ShapeError("non-positive dimension in parameter " + name);
    n *= s;
  }
  ParamEntry e;
  e.name = name;
  e.shape = std::move(shape);
  e.value.assign(static_cast<size_t>(n), 0.0);
  e.grad.assign(static_cast<size_t>(n), 0.0);
  e.offset = total_size_;
  total_size_ += n;
  entries_.push_back(std::move(e));
  index_[name] = static_cast<int>(entries_.size()) - 1;
  return index_[name];
}

ParamEntry& ParamStore::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("missing parameter: " + name);
  return entries_[it->second];
}

const ParamEntry& ParamStore::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("missing parameter: " + name);
  return entries_[it->second];
}

void ParamStore::zero_grads() {
  for (auto& e : entries_) std::fill(e.grad.begin(), e.grad.end(), 0.0);
}

void ParamStore::accumulate_grads(std::span<const double> flat) {
  if (static_cast<int64_t>(flat.size()) != total_size_)
    throw ShapeError("flat gradient buffer size mismatch");
  for (auto& e : entries_) {
    const double* src = flat.data() + e.offset;
    for (size_t i = 0; i < e.grad.size(); ++i) e.grad[i] += src[i];
  }
}

double ParamStore::grad_norm() const {
  double s = 0.0;
  for (const auto& e : entries_)
    for (double g : e.grad) s += g * g;
  return std::sqrt(s);
}

void ParamStore::scale_grads(double sc) {
  for (auto& e : entries_)
    for (double& g : e.grad) g *= sc;
}

void adam_step(ParamStore& params, AdamState& state, double lr, double beta1, double beta2,
               double eps) {
  if (static_cast<int64_t>(state.m.size()) != params.total_size())
    throw ShapeError("adam state size mismatch");
  state.step += 1;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
  for (auto& e : params.entries()) {
    double* m = state.m.data() + e.offset;
    double* v = state.v.data() + e.offset;
    for (size_t i = 0; i < e.value.size(); ++i) {
      const double g = e.grad[i];
      if (!std::isfinite(g))
        throw TrainingDivergence("non-finite gradient in " + e.name, e.name, state.step);
      m[i] = beta1 * m[i] + (1.0 - beta1) * g;
      v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      e.value[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

EmaState::EmaState(const ParamStore& store, double decay_) : decay(decay_) {
  shadow.resize(static_cast<size_t>(store.total_size()));
  for (const auto& e : store.entries())
    std::copy(e.value.begin(), e.value.end(), shadow.begin() + e.offset);
}

void ema_update(EmaState& ema, const ParamStore& params) {
  if (static_cast<int64_t>(ema.shadow.size()) != params.total_size())
    throw ConfigError("ema shadow size does not mirror the parameter store");
  const double d = ema.decay;
  for (const auto& e : params.entries()) {
    double* s = ema.shadow.data() + e.offset;
    for (size_t i = 0; i < e.value.size(); ++i) s[i] = d * s[i] + (1.0 - d) * e.value[i];
  }
}

double lr_schedule(int64_t step, int64_t warmup_steps, double base_lr) {
  if (warmup_steps < 0) throw ConfigError("warmup_steps must be >= 0");
  if (warmup_steps == 0 || step >= warmup_steps) return base_lr;
  return base_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
}

}  // namespace mixflow
