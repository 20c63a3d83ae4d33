#include "mixflow/distributions.hpp"

#include <cmath>

#include "mixflow/common.hpp"

namespace mixflow {

namespace {
inline double clamp_lv(double lv) {
  return lv < kLogVarMin ? kLogVarMin : (lv > kLogVarMax ? kLogVarMax : lv);
}
}  // namespace

std::vector<double> sample(const DiagGaussian& g, Rng& rng) {
  std::vector<double> out(g.mean.size());
  for (size_t i = 0; i < out.size(); ++i)
    out[i] = g.mean[i] + std::exp(0.5 * clamp_lv(g.log_var[i])) * rng.normal();
  return out;
}

DiagGaussian mix(const DiagGaussian& base, double w) {
  if (w < 0.0 || w > 1.0) throw DomainError("mix: w must lie in [0,1]");
  DiagGaussian out;
  out.mean.resize(base.mean.size());
  out.log_var.resize(base.log_var.size());
  for (size_t i = 0; i < base.mean.size(); ++i) {
    out.mean[i] = w * base.mean[i];
    out.log_var[i] = std::log(w * std::exp(clamp_lv(base.log_var[i])) + (1.0 - w));
  }
  return out;
}

double kl_to_standard(const DiagGaussian& g) {
  double s = 0.0;
  for (size_t i = 0; i < g.mean.size(); ++i)
    s += std::exp(g.log_var[i]) + g.mean[i] * g.mean[i] - 1.0 - g.log_var[i];
  return 0.5 * s;
}

void interpolate_state(std::span<const double> x0, std::span<const double> x1, double t,
                       std::span<double> out) {
  if (t < 0.0 || t > 1.0) throw DomainError("interpolate_state: t must lie in [0,1]");
  if (x0.size() != x1.size() || out.size() != x0.size())
    throw ShapeError("interpolate_state: size mismatch");
  for (size_t i = 0; i < x0.size(); ++i) out[i] = t * x1[i] + (1.0 - t) * x0[i];
}

std::vector<double> interpolate_state(std::span<const double> x0, std::span<const double> x1,
                                      double t) {
  std::vector<double> out(x0.size());
  interpolate_state(x0, x1, t, out);
  return out;
}

NodeRef sample_node(Tape& tape, NodeRef mean, NodeRef log_var, std::span<const double> eps) {
  return tape.reparam(mean, log_var, tape.constant(eps));
}

NodeRef mix_mean_node(Tape& tape, NodeRef mean, double w) {
  if (w < 0.0 || w > 1.0) throw DomainError("mix: w must lie in [0,1]");
  return tape.lincomb(w, mean);
}

NodeRef mix_log_var_node(Tape& tape, NodeRef log_var, double w) {
  if (w < 0.0 || w > 1.0) throw DomainError("mix: w must lie in [0,1]");
  return tape.mix_log_var(log_var, w);
}

}  // namespace mixflow
