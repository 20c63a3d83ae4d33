#include "mixflow/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <exception>

namespace mixflow {

namespace {

template <class F>
void run_indexed(int n, Exec exec, F&& f) {
  std::exception_ptr eptr = nullptr;
  auto guarded = [&](int i) {
    try {
      f(i);
    } catch (...) {
#pragma omp critical(mixflow_metric_err)
      if (!eptr) eptr = std::current_exception();
    }
  };
  if (exec == Exec::Parallel) {
#pragma omp parallel for schedule(dynamic, 8)
    for (int i = 0; i < n; ++i) guarded(i);
  } else {
    for (int i = 0; i < n; ++i) guarded(i);
  }
  if (eptr) std::rethrow_exception(eptr);
}

}  // namespace

CurvatureReport curvature(const Velocity& v, int n, const SolverSpec& solver, uint64_t seed,
                          Exec exec) {
  if (n < 1) throw InputError("curvature needs n >= 1");
  solver.validate();
  const int d = v.dim();
  const bool fixed_grid = solver.kind != SolverKind::Rk45;
  const int profile_len = fixed_grid ? solver.steps : 0;

  // Per-trajectory slots reduced in index order, so the result does not
  // depend on the execution policy.
  std::vector<double> traj_mean(n, 0.0);
  std::vector<double> profile_acc(static_cast<size_t>(n) * std::max(profile_len, 1), 0.0);

  run_indexed(n, exec, [&](int i) {
    Rng rng(mix_seed(seed, stream::kMetric, static_cast<uint64_t>(i)));
    std::vector<double> x0(static_cast<size_t>(d));
    rng.normal_fill(x0);
    Trajectory traj = solve(v, x0, solver);
    std::span<const double> x1 = traj.final_state();
    std::vector<double> vel(static_cast<size_t>(d));
    const int pts = traj.n_points() - 1;  // exclude the endpoint
    double sum = 0.0;
    for (int k = 0; k < pts; ++k) {
      v.eval(traj.state(k), traj.times[k], vel);
      double r2 = 0.0;
      for (int c = 0; c < d; ++c) {
        const double r = x1[c] - x0[c] - vel[c];
        r2 += r * r;
      }
      sum += r2;
      if (fixed_grid) profile_acc[static_cast<size_t>(i) * profile_len + k] = r2;
    }
    traj_mean[i] = sum / pts;
  });

  CurvatureReport rep;
  rep.n_trajectories = n;
  rep.solver = solver;
  double total = 0.0;
  for (int i = 0; i < n; ++i) total += traj_mean[i];
  rep.mean_curvature = total / n;
  if (fixed_grid) {
    rep.per_t_profile.assign(profile_len, 0.0);
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < profile_len; ++k)
        rep.per_t_profile[k] += profile_acc[static_cast<size_t>(i) * profile_len + k];
    for (double& p : rep.per_t_profile) p /= n;
  }
  if (!std::isfinite(rep.mean_curvature))
    throw InputError("curvature is non-finite; the model weights look invalid");
  return rep;
}

double degree_of_intersection(const Velocity& v, const PairSampler& pairs, int d, int n,
                              int t_grid, uint64_t seed, Exec exec) {
  if (n < 1 || t_grid < 1) throw InputError("degree_of_intersection needs n, t_grid >= 1");
  std::vector<double> pair_mean(n, 0.0);
  run_indexed(n, exec, [&](int i) {
    Rng rng(mix_seed(seed, stream::kMetric, static_cast<uint64_t>(i)));
    std::vector<double> x0(static_cast<size_t>(d)), x1(static_cast<size_t>(d));
    std::vector<double> xt(static_cast<size_t>(d)), vel(static_cast<size_t>(d));
    pairs(rng, x0, x1);
    double sum = 0.0;
    for (int j = 0; j < t_grid; ++j) {
      const double t = (j + 0.5) / t_grid;  // midpoint rule for the dt integral
      for (int c = 0; c < d; ++c) xt[c] = t * x1[c] + (1.0 - t) * x0[c];
      v.eval(xt, t, vel);
      double r2 = 0.0;
      for (int c = 0; c < d; ++c) {
        const double r = x1[c] - x0[c] - vel[c];
        r2 += r * r;
      }
      sum += r2;
    }
    pair_mean[i] = sum / t_grid;
  });
  double total = 0.0;
  for (int i = 0; i < n; ++i) total += pair_mean[i];
  const double result = total / n;
  if (!std::isfinite(result))
    throw InputError("degree of intersection is non-finite; the model weights look invalid");
  return result;
}

double solve_assignment(const std::vector<double>& cost, int n, std::vector<int>* row_to_col) {
  // Hungarian algorithm with potentials, O(n^3), 1-based internally.
  constexpr double kInf = 1e300;
  std::vector<double> u(n + 1, 0.0), vpot(n + 1, 0.0), minv(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), kInf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      int j1 = 0;
      double delta = kInf;
      const double* row = cost.data() + static_cast<int64_t>(i0 - 1) * n;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = row[j - 1] - u[i0] - vpot[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          vpot[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  double total = 0.0;
  if (row_to_col) row_to_col->assign(n, -1);
  for (int j = 1; j <= n; ++j) {
    total += cost[static_cast<int64_t>(p[j] - 1) * n + (j - 1)];
    if (row_to_col) (*row_to_col)[p[j] - 1] = j - 1;
  }
  return total;
}

namespace {

// Squared 2-Wasserstein between 1-D empirical measures with uniform
// weights; inputs must be sorted. Piecewise-constant quantile sweep, so
// unequal sizes are fine.
double w2sq_1d_sorted(std::span<const double> a, std::span<const double> b) {
  const size_t n = a.size(), m = b.size();
  if (n == m) {
    double s = 0.0;
    for (size_t i = 0; i < n; ++i) {
      const double diff = a[i] - b[i];
      s += diff * diff;
    }
    return s / n;
  }
  double s = 0.0;
  size_t i = 0, j = 0;
  double p = 0.0;
  while (i < n && j < m) {
    const double pa = static_cast<double>(i + 1) / n;
    const double pb = static_cast<double>(j + 1) / m;
    const double q = std::min(pa, pb);
    const double diff = a[i] - b[j];
    s += diff * diff * (q - p);
    p = q;
    if (pa <= q + 1e-18) ++i;
    if (pb <= q + 1e-18) ++j;
  }
  return s;
}

double exact_w2(std::span<const double> a, std::span<const double> b, int d, int n) {
  if (d == 1) {
    std::vector<double> sa(a.begin(), a.end()), sb(b.begin(), b.end());
    std::sort(sa.begin(), sa.end());
    std::sort(sb.begin(), sb.end());
    return std::sqrt(w2sq_1d_sorted(sa, sb));
  }
  std::vector<double> cost(static_cast<size_t>(n) * n);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    const double* ai = a.data() + static_cast<int64_t>(i) * d;
    double* row = cost.data() + static_cast<int64_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const double* bj = b.data() + static_cast<int64_t>(j) * d;
      double s = 0.0;
      for (int c = 0; c < d; ++c) {
        const double diff = ai[c] - bj[c];
        s += diff * diff;
      }
      row[j] = s;
    }
  }
  const double total = solve_assignment(cost, n, nullptr);
  return std::sqrt(total / n);
}

}  // namespace

double wasserstein2(std::span<const double> a, std::span<const double> b, int d, W2Method method,
                    int n_projections, uint64_t seed) {
  if (d < 1) throw InputError("wasserstein2: d must be >= 1");
  if (a.size() % d != 0 || b.size() % d != 0)
    throw InputError("wasserstein2: sample arrays are not multiples of d");
  const int n = static_cast<int>(a.size()) / d;
  const int m = static_cast<int>(b.size()) / d;
  if (n == 0 || m == 0) throw InputError("wasserstein2: empty sample set");

  if (method == W2Method::ExactAssignment) {
    if (n != m) throw InputError("exact assignment requires equally sized sample sets");
    if (n > 4096) throw InputError("exact assignment supports at most 4096 samples");
    // Canonical argument order makes the distance exactly symmetric.
    const bool swap = std::lexicographical_compare(b.begin(), b.end(), a.begin(), a.end());
    return swap ? exact_w2(b, a, d, n) : exact_w2(a, b, d, n);
  }

  if (n_projections < 1) throw InputError("sliced w2 needs n_projections >= 1");
  Rng rng(mix_seed(seed, stream::kMetric, 0x51ced));
  std::vector<double> dir(static_cast<size_t>(d));
  std::vector<double> pa(static_cast<size_t>(n)), pb(static_cast<size_t>(m));
  double acc = 0.0;
  for (int k = 0; k < n_projections; ++k) {
    double norm = 0.0;
    do {
      for (int c = 0; c < d; ++c) dir[c] = rng.normal();
      norm = 0.0;
      for (int c = 0; c < d; ++c) norm += dir[c] * dir[c];
    } while (norm < 1e-12);
    norm = std::sqrt(norm);
    for (int c = 0; c < d; ++c) dir[c] /= norm;
    for (int i = 0; i < n; ++i) {
      const double* ai = a.data() + static_cast<int64_t>(i) * d;
      double s = 0.0;
      for (int c = 0; c < d; ++c) s += ai[c] * dir[c];
      pa[i] = s;
    }
    for (int j = 0; j < m; ++j) {
      const double* bj = b.data() + static_cast<int64_t>(j) * d;
      double s = 0.0;
      for (int c = 0; c < d; ++c) s += bj[c] * dir[c];
      pb[j] = s;
    }
    std::sort(pa.begin(), pa.end());
    std::sort(pb.begin(), pb.end());
    acc += w2sq_1d_sorted(pa, pb);
  }
  // Scaled by d so isotropic-Gaussian pairs match the exact distance.
  return std::sqrt(d * acc / n_projections);
}

double straightness_profile(const Trajectory& traj) {
  if (traj.n_points() < 2) throw InputError("straightness needs at least two points");
  const int d = traj.d;
  std::span<const double> x0 = traj.initial();
  std::span<const double> x1 = traj.final_state();
  double total = 0.0;
  const int segs = traj.n_points() - 1;
  for (int k = 0; k < segs; ++k) {
    const double dt = traj.times[k + 1] - traj.times[k];
    std::span<const double> s0 = traj.state(k);
    std::span<const double> s1 = traj.state(k + 1);
    double r2 = 0.0;
    for (int c = 0; c < d; ++c) {
      const double vel = (s1[c] - s0[c]) / dt;
      const double r = vel - (x1[c] - x0[c]);
      r2 += r * r;
    }
    total += r2;
  }
  return total / segs;
}

}  // namespace mixflow
