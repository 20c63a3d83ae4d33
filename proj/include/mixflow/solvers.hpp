#pragma once

#include <span>
#include <string>
#include <vector>

#include "mixflow/common.hpp"

namespace mixflow {

// Velocity field interface. eval must be thread-safe for frozen weights so
// trajectory batches can run in parallel.
struct Velocity {
  virtual ~Velocity() = default;
  virtual int dim() const = 0;
  virtual void eval(std::span<const double> x, double t, std::span<double> out) const = 0;
};

enum class SolverKind : uint8_t { Euler, Heun2, Rk45 };

const char* solver_name(SolverKind k);
SolverKind solver_from_name(const std::string& name);

struct SolverSpec {
  SolverKind kind = SolverKind::Euler;
  int steps = 128;          // fixed-step solvers
  double rtol = 1e-5;       // rk45
  double atol = 1e-5;       // rk45
  int max_nfe = 1000000;    // rk45 budget

  static SolverSpec euler(int steps);
  static SolverSpec heun2(int steps);
  static SolverSpec rk45(double rtol = 1e-5, double atol = 1e-5, int max_nfe = 1000000);

  // Euler costs steps evaluations; Heun2 runs steps-1 two-evaluation steps
  // plus a final plain Euler step, costing 2*steps - 1.
  int fixed_nfe() const;
  void validate() const;
};

// Integration record from t=0 to t=1. states is row-major (k+1) x d.
struct Trajectory {
  std::vector<double> times;
  std::vector<double> states;
  int d = 0;
  int nfe = 0;

  int n_points() const { return static_cast<int>(times.size()); }
  std::span<const double> state(int i) const {
    return {states.data() + static_cast<int64_t>(i) * d, static_cast<size_t>(d)};
  }
  std::span<const double> initial() const { return state(0); }
  std::span<const double> final_state() const { return state(n_points() - 1); }
};

// Adaptive solver ran out of evaluation budget; carries what it got.
struct BudgetExceeded : std::runtime_error {
  BudgetExceeded(const std::string& msg, Trajectory partial_)
      : std::runtime_error(msg), partial(std::move(partial_)) {}
  Trajectory partial;
};

// Integrates dx/dt = v(x, t) forward from x_init, recording every accepted
// grid point.
Trajectory solve(const Velocity& v, std::span<const double> x_init, const SolverSpec& spec);

// Endpoint-only integration for large sweeps.
void solve_endpoint(const Velocity& v, std::span<const double> x_init, const SolverSpec& spec,
                    std::span<double> out, int* nfe = nullptr);

// Integrates n trajectories with inits row-major n x d into finals (n x d).
// Items are independent; results do not depend on the execution policy or
// thread count.
void solve_endpoints(const Velocity& v, std::span<const double> inits, int n,
                     const SolverSpec& spec, std::span<double> finals, Exec exec,
                     std::vector<int>* nfes = nullptr);

}  // namespace mixflow
