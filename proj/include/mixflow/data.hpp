#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "mixflow/rng.hpp"

namespace mixflow {

enum class DatasetKind : uint8_t { EightGaussians, TwoMoons, Checkerboard, GaussianShift };

const char* dataset_name(DatasetKind k);
DatasetKind dataset_from_name(const std::string& name);

// Synthetic (x1, label) generators. All draws are i.i.d. and fully
// determined by the Rng handed in.
struct Dataset {
  DatasetKind kind = DatasetKind::EightGaussians;
  int d = 2;
  int n_classes = 1;
  std::vector<double> shift_mu;  // GaussianShift only

  static Dataset eight_gaussians();
  static Dataset two_moons();
  static Dataset checkerboard();
  static Dataset gaussian_shift(std::vector<double> mu);

  void draw(Rng& rng, std::span<double> x, int& label) const;
  void draw_batch(Rng& rng, int batch_size, std::vector<double>& xs,
                  std::vector<int>& labels) const;

  // Mode centers of the eight-Gaussians layout (radius 4, angles 2*pi*k/8);
  // used by nearest-mode checks.
  static std::vector<std::array<double, 2>> eight_gaussian_modes();
};

int nearest_mode(std::span<const double> x, const std::vector<std::array<double, 2>>& modes);

}  // namespace mixflow
