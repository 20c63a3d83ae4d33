#pragma once

#include <functional>
#include <span>
#include <vector>

#include "mixflow/rng.hpp"
#include "mixflow/solvers.hpp"

namespace mixflow {

struct CurvatureReport {
  double mean_curvature = 0.0;
  int n_trajectories = 0;
  SolverSpec solver = SolverSpec::euler(128);
  // Mean squared chord deviation at each grid point t_k, k = 0..steps-1.
  std::vector<double> per_t_profile;
};

// Generative-path curvature: draw x0 ~ N(0,I), integrate to x1, then
// average ||x1 - x0 - v(x_t, t)||^2 over the trajectory's own grid points
// (the final point t=1 is excluded; the profile has `steps` entries).
// Defaults follow the standard protocol: n = 10000, Euler with 128 steps.
CurvatureReport curvature(const Velocity& v, int n, const SolverSpec& solver, uint64_t seed,
                          Exec exec = Exec::Parallel);

// Draws one (x0, x1) pair from the coupling under test.
using PairSampler = std::function<void(Rng&, std::span<double> x0, std::span<double> x1)>;

// Forward-path intersection measure: Monte-Carlo average of
// ||x1 - x0 - v(x_t, t)||^2 with x_t = t*x1 + (1-t)*x0 over n pairs and
// t_grid midpoint times. Unlike curvature, x_t comes from the forward
// interpolation, not from integrated trajectories.
double degree_of_intersection(const Velocity& v, const PairSampler& pairs, int d, int n,
                              int t_grid, uint64_t seed, Exec exec = Exec::Parallel);

enum class W2Method : uint8_t { ExactAssignment, Sliced };

// Empirical 2-Wasserstein distance between sample sets (row-major n x d).
// ExactAssignment solves the balanced assignment problem on squared
// Euclidean costs (n == m <= 4096) and returns sqrt(mean matched cost).
// Sliced averages 1-D W2^2 over random unit projections, scaled by d so it
// is consistent with the exact value on isotropic Gaussians.
double wasserstein2(std::span<const double> a, std::span<const double> b, int d, W2Method method,
                    int n_projections = 256, uint64_t seed = 0);

// Mean squared deviation of the discrete trajectory velocity from the
// chord x1 - x0.
double straightness_profile(const Trajectory& traj);

// Exact optimal assignment cost (sum of costs) for a dense n x n matrix;
// exposed for testing against brute force.
double solve_assignment(const std::vector<double>& cost, int n, std::vector<int>* row_to_col);

}  // namespace mixflow
