#pragma once

#include <span>
#include <vector>

#include "mixflow/rng.hpp"
#include "mixflow/tape.hpp"

namespace mixflow {

// N(mean, diag(exp(log_var))). Storing the log-variance keeps the implied
// variance positive without constraints.
struct DiagGaussian {
  std::vector<double> mean;
  std::vector<double> log_var;
  int d() const { return static_cast<int>(mean.size()); }
};

// mu + sigma * eps with eps ~ N(0, I). Pure draw over frozen parameters;
// the differentiable path is sample_node below.
std::vector<double> sample(const DiagGaussian& g, Rng& rng);

// Gaussian interpolant: N(w*mu, w*var + (1-w)). w=0 gives N(0, I) exactly,
// w=1 gives the base exactly.
DiagGaussian mix(const DiagGaussian& base, double w);

// 0.5 * sum(var + mu^2 - 1 - log var) against N(0, I).
double kl_to_standard(const DiagGaussian& g);

// t*x1 + (1-t)*x0 for t in [0,1].
std::vector<double> interpolate_state(std::span<const double> x0, std::span<const double> x1,
                                      double t);
void interpolate_state(std::span<const double> x0, std::span<const double> x1, double t,
                       std::span<double> out);

// Taped counterparts; gradients reach mean/log_var producers.
NodeRef sample_node(Tape& tape, NodeRef mean, NodeRef log_var, std::span<const double> eps);
NodeRef mix_mean_node(Tape& tape, NodeRef mean, double w);
NodeRef mix_log_var_node(Tape& tape, NodeRef log_var, double w);

}  // namespace mixflow
