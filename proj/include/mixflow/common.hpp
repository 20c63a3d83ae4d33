#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>

namespace mixflow {

// Bad user-supplied configuration (missing parameter, invalid field, ...).
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Array dimensions do not line up.
struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad runtime input (missing label, size mismatch between sample sets, ...).
struct InputError : std::runtime_error {
  explicit InputError(const std::string& msg) : std::runtime_error(msg) {}
};

// Argument outside its mathematical domain (w or t outside [0,1]).
struct DomainError : InputError {
  explicit DomainError(const std::string& msg) : InputError(msg) {}
};

// API misuse (backward called twice on one tape, ...).
struct UsageError : std::logic_error {
  explicit UsageError(const std::string& msg) : std::logic_error(msg) {}
};

// Non-finite value encountered while training.
struct TrainingDivergence : std::runtime_error {
  TrainingDivergence(const std::string& msg, std::string param, int64_t iteration)
      : std::runtime_error(msg), param_name(std::move(param)), iteration(iteration) {}
  std::string param_name;
  int64_t iteration = -1;
};

// Execution policy for the data-parallel kernels. Serial is the reference
// path used by tests and by deterministic mode; Parallel runs the same
// per-item code under OpenMP with a thread-count-independent reduction order.
enum class Exec { Serial, Parallel };

// Worker cap: MIXFLOW_THREADS if set, else the OpenMP default.
int thread_cap();

// Applies the cap to the OpenMP runtime. Called once by entry points.
void apply_thread_cap();

inline bool approx_rel(double a, double b, double tol) {
  double scale = std::max({1.0, a < 0 ? -a : a, b < 0 ? -b : b});
  double d = a - b;
  return (d < 0 ? -d : d) <= tol * scale;
}

}  // namespace mixflow
