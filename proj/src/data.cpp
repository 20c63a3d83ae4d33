#include "mixflow/data.hpp"

#include <cmath>
#include <numbers>

#include "mixflow/common.hpp"

namespace mixflow {

const char* dataset_name(DatasetKind k) {
  switch (k) {
    case DatasetKind::EightGaussians: return "eight_gaussians";
    case DatasetKind::TwoMoons: return "two_moons";
    case DatasetKind::Checkerboard: return "checkerboard";
    case DatasetKind::GaussianShift: return "gaussian_shift";
  }
  return "eight_gaussians";
}

DatasetKind dataset_from_name(const std::string& name) {
  if (name == "eight_gaussians") return DatasetKind::EightGaussians;
  if (name == "two_moons") return DatasetKind::TwoMoons;
  if (name == "checkerboard") return DatasetKind::Checkerboard;
  if (name == "gaussian_shift") return DatasetKind::GaussianShift;
  throw ConfigError("unknown dataset: " + name);
}

Dataset Dataset::eight_gaussians() { return {DatasetKind::EightGaussians, 2, 8, {}}; }
Dataset Dataset::two_moons() { return {DatasetKind::TwoMoons, 2, 2, {}}; }
Dataset Dataset::checkerboard() { return {DatasetKind::Checkerboard, 2, 2, {}}; }

Dataset Dataset::gaussian_shift(std::vector<double> mu) {
  Dataset ds;
  ds.kind = DatasetKind::GaussianShift;
  ds.d = static_cast<int>(mu.size());
  ds.n_classes = 1;
  ds.shift_mu = std::move(mu);
  return ds;
}

std::vector<std::array<double, 2>> Dataset::eight_gaussian_modes() {
  std::vector<std::array<double, 2>> modes;
  for (int k = 0; k < 8; ++k) {
    const double a = 2.0 * std::numbers::pi * k / 8.0;
    modes.push_back({4.0 * std::cos(a), 4.0 * std::sin(a)});
  }
  return modes;
}

void Dataset::draw(Rng& rng, std::span<double> x, int& label) const {
  if (static_cast<int>(x.size()) != d) throw ShapeError("dataset draw: wrong dimension");
  switch (kind) {
    case DatasetKind::EightGaussians: {
      const int mode = rng.uniform_int(8);
      const double a = 2.0 * std::numbers::pi * mode / 8.0;
      x[0] = 4.0 * std::cos(a) + 0.3 * rng.normal();
      x[1] = 4.0 * std::sin(a) + 0.3 * rng.normal();
      label = mode;
      break;
    }
    case DatasetKind::TwoMoons: {
      const int cls = rng.uniform() < 0.5 ? 0 : 1;
      const double a = std::numbers::pi * rng.uniform();
      if (cls == 0) {
        x[0] = std::cos(a);
        x[1] = std::sin(a);
      } else {
        x[0] = 1.0 - std::cos(a);
        x[1] = 0.5 - std::sin(a);
      }
      x[0] += 0.1 * rng.normal();
      x[1] += 0.1 * rng.normal();
      label = cls;
      break;
    }
    case DatasetKind::Checkerboard: {
      // 4x4 board on [-4,4]^2; points live in the 8 cells with even i+j.
      // Within those cells the row and column parities agree, so the label
      // is that shared parity.
      const int cell = rng.uniform_int(8);
      const int i = cell / 2;                      // row 0..3
      const int j = 2 * (cell % 2) + (i % 2);      // column with (i+j) even
      x[0] = -4.0 + 2.0 * j + 2.0 * rng.uniform();
      x[1] = -4.0 + 2.0 * i + 2.0 * rng.uniform();
      label = i % 2;
      break;
    }
    case DatasetKind::GaussianShift: {
      for (int k = 0; k < d; ++k) x[k] = shift_mu[k] + rng.normal();
      label = 0;
      break;
    }
  }
}

void Dataset::draw_batch(Rng& rng, int batch_size, std::vector<double>& xs,
                         std::vector<int>& labels) const {
  xs.resize(static_cast<size_t>(batch_size) * d);
  labels.resize(batch_size);
  for (int i = 0; i < batch_size; ++i) draw(rng, {xs.data() + int64_t(i) * d, (size_t)d}, labels[i]);
}

int nearest_mode(std::span<const double> x, const std::vector<std::array<double, 2>>& modes) {
  int best = 0;
  double best_d = 1e300;
  for (size_t k = 0; k < modes.size(); ++k) {
    const double dx = x[0] - modes[k][0];
    const double dy = x[1] - modes[k][1];
    const double dist = dx * dx + dy * dy;
    if (dist < best_d) {
      best_d = dist;
      best = static_cast<int>(k);
    }
  }
  return best;
}

}  // namespace mixflow
