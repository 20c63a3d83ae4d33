#include "mixflow/solvers.hpp"

#include <cmath>

namespace mixflow {

const char* solver_name(SolverKind k) {
  switch (k) {
    case SolverKind::Euler: return "euler";
    case SolverKind::Heun2: return "heun2";
    case SolverKind::Rk45: return "rk45";
  }
  return "euler";
}

SolverKind solver_from_name(const std::string& name) {
  if (name == "euler") return SolverKind::Euler;
  if (name == "heun2") return SolverKind::Heun2;
  if (name == "rk45") return SolverKind::Rk45;
  throw ConfigError("unknown solver: " + name);
}

SolverSpec SolverSpec::euler(int steps) {
  SolverSpec s;
  s.kind = SolverKind::Euler;
  s.steps = steps;
  s.validate();
  return s;
}

SolverSpec SolverSpec::heun2(int steps) {
  SolverSpec s;
  s.kind = SolverKind::Heun2;
  s.steps = steps;
  s.validate();
  return s;
}

SolverSpec SolverSpec::rk45(double rtol, double atol, int max_nfe) {
  SolverSpec s;
  s.kind = SolverKind::Rk45;
  s.rtol = rtol;
  s.atol = atol;
  s.max_nfe = max_nfe;
  s.validate();
  return s;
}

void SolverSpec::validate() const {
  if (kind != SolverKind::Rk45 && steps < 1) throw ConfigError("solver steps must be >= 1");
  if (kind == SolverKind::Rk45 && (rtol <= 0.0 || atol <= 0.0))
    throw ConfigError("rk45 tolerances must be positive");
}

int SolverSpec::fixed_nfe() const {
  switch (kind) {
    case SolverKind::Euler: return steps;
    case SolverKind::Heun2: return 2 * steps - 1;
    case SolverKind::Rk45: throw ConfigError("rk45 NFE is adaptive");
  }
  return 0;
}

namespace {

void check_finite(std::span<const double> x) {
  for (double v : x)
    if (!std::isfinite(v)) throw InputError("non-finite state in solver");
}

struct StepRecorder {
  Trajectory* traj = nullptr;  // null in endpoint mode
  void record(double t, std::span<const double> x) {
    if (!traj) return;
    traj->times.push_back(t);
    traj->states.insert(traj->states.end(), x.begin(), x.end());
  }
};

void integrate_fixed(const Velocity& v, std::span<const double> x_init, const SolverSpec& spec,
                     StepRecorder rec, std::span<double> out, int& nfe) {
  const int d = static_cast<int>(x_init.size());
  const int n = spec.steps;
  const double h = 1.0 / n;
  std::vector<double> x(x_init.begin(), x_init.end());
  std::vector<double> k1(d), k2(d), xm(d);
  rec.record(0.0, x);
  nfe = 0;
  for (int s = 0; s < n; ++s) {
    const double t = static_cast<double>(s) / n;
    v.eval(x, t, k1);
    ++nfe;
    const bool heun_step = spec.kind == SolverKind::Heun2 && s + 1 < n;
    if (heun_step) {
      for (int i = 0; i < d; ++i) xm[i] = x[i] + h * k1[i];
      v.eval(xm, t + h, k2);
      ++nfe;
      for (int i = 0; i < d; ++i) x[i] += 0.5 * h * (k1[i] + k2[i]);
    } else {
      for (int i = 0; i < d; ++i) x[i] += h * k1[i];
    }
    rec.record(static_cast<double>(s + 1) / n, x);
  }
  std::copy(x.begin(), x.end(), out.begin());
}

// Dormand-Prince 5(4) coefficients.
constexpr double kA21 = 1.0 / 5;
constexpr double kA31 = 3.0 / 40, kA32 = 9.0 / 40;
constexpr double kA41 = 44.0 / 45, kA42 = -56.0 / 15, kA43 = 32.0 / 9;
constexpr double kA51 = 19372.0 / 6561, kA52 = -25360.0 / 2187, kA53 = 64448.0 / 6561,
                 kA54 = -212.0 / 729;
constexpr double kA61 = 9017.0 / 3168, kA62 = -355.0 / 33, kA63 = 46732.0 / 5247,
                 kA64 = 49.0 / 176, kA65 = -5103.0 / 18656;
constexpr double kB1 = 35.0 / 384, kB3 = 500.0 / 1113, kB4 = 125.0 / 192, kB5 = -2187.0 / 6784,
                 kB6 = 11.0 / 84;
// 4th-order weights for the error estimate.
constexpr double kE1 = 5179.0 / 57600, kE3 = 7571.0 / 16695, kE4 = 393.0 / 640,
                 kE5 = -92097.0 / 339200, kE6 = 187.0 / 2100, kE7 = 1.0 / 40;
constexpr double kC2 = 1.0 / 5, kC3 = 3.0 / 10, kC4 = 4.0 / 5, kC5 = 8.0 / 9;

void integrate_rk45(const Velocity& v, std::span<const double> x_init, const SolverSpec& spec,
                    StepRecorder rec, std::span<double> out, int& nfe) {
  const int d = static_cast<int>(x_init.size());
  std::vector<double> x(x_init.begin(), x_init.end());
  std::vector<double> k1(d), k2(d), k3(d), k4(d), k5(d), k6(d), k7(d), xs(d), x5(d);
  double t = 0.0;
  double h = 0.01;
  rec.record(0.0, x);
  nfe = 0;

  auto budget = [&](Trajectory&& partial) {
    throw BudgetExceeded("rk45 exceeded max_nfe=" + std::to_string(spec.max_nfe),
                         std::move(partial));
  };
  auto partial_traj = [&]() {
    Trajectory tr;
    if (rec.traj) tr = *rec.traj;
    tr.d = d;
    tr.nfe = nfe;
    return tr;
  };

  v.eval(x, t, k1);  // FSAL seed
  ++nfe;
  while (t < 1.0) {
    if (nfe >= spec.max_nfe) budget(partial_traj());
    if (t + h > 1.0) h = 1.0 - t;

    auto stage = [&](std::span<double> k, double c, auto... terms) {
      auto pairs = std::initializer_list<std::pair<double, const std::vector<double>*>>{terms...};
      for (int i = 0; i < d; ++i) {
        double acc = x[i];
        for (auto& [coef, vec] : pairs) acc += h * coef * (*vec)[i];
        xs[i] = acc;
      }
      v.eval(xs, t + c * h, k);
      ++nfe;
    };
    stage(k2, kC2, std::make_pair(kA21, &k1));
    stage(k3, kC3, std::make_pair(kA31, &k1), std::make_pair(kA32, &k2));
    stage(k4, kC4, std::make_pair(kA41, &k1), std::make_pair(kA42, &k2),
          std::make_pair(kA43, &k3));
    stage(k5, kC5, std::make_pair(kA51, &k1), std::make_pair(kA52, &k2),
          std::make_pair(kA53, &k3), std::make_pair(kA54, &k4));
    stage(k6, 1.0, std::make_pair(kA61, &k1), std::make_pair(kA62, &k2),
          std::make_pair(kA63, &k3), std::make_pair(kA64, &k4), std::make_pair(kA65, &k5));
    for (int i = 0; i < d; ++i)
      x5[i] = x[i] + h * (kB1 * k1[i] + kB3 * k3[i] + kB4 * k4[i] + kB5 * k5[i] + kB6 * k6[i]);
    v.eval(x5, t + h, k7);
    ++nfe;

    // scaled RMS error between the 5th and 4th order solutions
    double err = 0.0;
    for (int i = 0; i < d; ++i) {
      const double x4 = x[i] + h * (kE1 * k1[i] + kE3 * k3[i] + kE4 * k4[i] + kE5 * k5[i] +
                                    kE6 * k6[i] + kE7 * k7[i]);
      const double scale =
          spec.atol + spec.rtol * std::max(std::abs(x[i]), std::abs(x5[i]));
      const double e = (x5[i] - x4) / scale;
      err += e * e;
    }
    err = std::sqrt(err / d);

    if (err <= 1.0) {
      t += h;
      if (1.0 - t < 1e-12) t = 1.0;  // snap so times end exactly at 1
      std::copy(x5.begin(), x5.end(), x.begin());
      std::copy(k7.begin(), k7.end(), k1.begin());  // FSAL
      rec.record(t, x);
    }
    const double factor =
        err <= 0.0 ? 5.0 : std::min(5.0, std::max(0.2, 0.9 * std::pow(err, -0.2)));
    h *= factor;
    if (t + h > 1.0) h = 1.0 - t;
    if (h <= 1e-14 && t < 1.0) {
      if (nfe >= spec.max_nfe) budget(partial_traj());
      h = 1e-14;
    }
  }
  std::copy(x.begin(), x.end(), out.begin());
}

}  // namespace

Trajectory solve(const Velocity& v, std::span<const double> x_init, const SolverSpec& spec) {
  spec.validate();
  check_finite(x_init);
  if (static_cast<int>(x_init.size()) != v.dim())
    throw ShapeError("solver initial state dimension mismatch");
  Trajectory traj;
  traj.d = static_cast<int>(x_init.size());
  StepRecorder rec{&traj};
  std::vector<double> out(x_init.size());
  int nfe = 0;
  if (spec.kind == SolverKind::Rk45)
    integrate_rk45(v, x_init, spec, rec, out, nfe);
  else
    integrate_fixed(v, x_init, spec, rec, out, nfe);
  traj.nfe = nfe;
  return traj;
}

void solve_endpoint(const Velocity& v, std::span<const double> x_init, const SolverSpec& spec,
                    std::span<double> out, int* nfe_out) {
  spec.validate();
  check_finite(x_init);
  int nfe = 0;
  if (spec.kind == SolverKind::Rk45)
    integrate_rk45(v, x_init, spec, StepRecorder{}, out, nfe);
  else
    integrate_fixed(v, x_init, spec, StepRecorder{}, out, nfe);
  if (nfe_out) *nfe_out = nfe;
}

void solve_endpoints(const Velocity& v, std::span<const double> inits, int n,
                     const SolverSpec& spec, std::span<double> finals, Exec exec,
                     std::vector<int>* nfes) {
  const int d = v.dim();
  if (nfes) nfes->assign(n, 0);
  auto body = [&](int i) {
    int nfe = 0;
    solve_endpoint(v, {inits.data() + int64_t(i) * d, (size_t)d}, spec,
                   {finals.data() + int64_t(i) * d, (size_t)d}, &nfe);
    if (nfes) (*nfes)[i] = nfe;
  };
  if (exec == Exec::Parallel) {
#pragma omp parallel for schedule(dynamic, 16)
    for (int i = 0; i < n; ++i) body(i);
  } else {
    for (int i = 0; i < n; ++i) body(i);
  }
}

}  // namespace mixflow
