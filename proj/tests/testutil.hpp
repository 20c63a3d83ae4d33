#pragma once

#include <functional>
#include <vector>

#include "mixflow/rng.hpp"
#include "mixflow/tape.hpp"

namespace mixflow::testutil {

struct ParamHandle {
  const double* value;
  double* grad;
  int64_t len;
};

// Builds a scalar loss node over the given leaves.
using BuildFn = std::function<NodeRef(Tape&, const std::vector<ParamHandle>&)>;

// Central finite differences against the tape's reverse-mode gradients.
// Returns the worst relative error over all parameter elements.
inline double gradcheck(const BuildFn& build, std::vector<std::vector<double>>& params,
                        double h = 1e-5) {
  std::vector<std::vector<double>> grads;
  for (auto& p : params) grads.emplace_back(p.size(), 0.0);

  auto handles = [&] {
    std::vector<ParamHandle> hs;
    for (size_t i = 0; i < params.size(); ++i)
      hs.push_back({params[i].data(), grads[i].data(), static_cast<int64_t>(params[i].size())});
    return hs;
  };

  {
    Tape tape;
    NodeRef loss = build(tape, handles());
    tape.backward(loss);
  }

  auto eval = [&] {
    Tape tape;
    return tape.scalar(build(tape, handles()));
  };

  double worst = 0.0;
  for (size_t p = 0; p < params.size(); ++p) {
    for (size_t i = 0; i < params[p].size(); ++i) {
      const double saved = params[p][i];
      params[p][i] = saved + h;
      const double fp = eval();
      params[p][i] = saved - h;
      const double fm = eval();
      params[p][i] = saved;
      const double fd = (fp - fm) / (2.0 * h);
      const double an = grads[p][i];
      const double scale = std::max({1.0, std::abs(fd), std::abs(an)});
      worst = std::max(worst, std::abs(fd - an) / scale);
    }
  }
  return worst;
}

inline std::vector<double> random_vec(Rng& rng, size_t n, double lo = -1.5, double hi = 1.5) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

}  // namespace mixflow::testutil
