// Copyright (c) 2026 volreg contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "volreg/detect.hpp"
#include "volreg/grid.hpp"

namespace volreg {

/// Fixed-length unit-norm descriptor vector.
using Descriptor = Eigen::VectorXd;

bool is_unit_norm(const Descriptor& d, double tol = 1e-6);

/// A (2s+1)^3 density sample around a corner, optionally in a rotated frame.
struct Neighborhood {
  int radius = 3;
  int corner_id = -1;
  std::array<double, 3> orientation{0.0, 0.0, 0.0};  // tx, ty, tz
  std::vector<double> values;                        // x-fastest, edge (2s+1)

  int edge() const { return 2 * radius + 1; }
};

/// Identity orientation copies the axis-aligned subgrid exactly. Any other
/// orientation resamples trilinearly on the rotated lattice: output cell
/// (a,b,c) in [-s,s]^3 samples at corner + Rz(tz)Ry(ty)Rx(tx) * spacing*(a,b,c).
/// Throws ExcludedCornerError when the needed support leaves the grid (the
/// subgrid cube for identity, the radius s*sqrt(3) sampling sphere otherwise).
Neighborhood extract_neighborhood(const DensityGrid& g, const Corner& c, int radius,
                                  const std::array<double, 3>& orientation);

/// True when the rotated sampling sphere of radius s*sqrt(3) cells around the
/// corner's cell stays inside the grid.
bool neighborhood_fits(const DensityGrid& g, const std::array<int, 3>& index, int radius);

/// Corner-labeled neighborhood dataset for contrastive training.
struct TrainingSet {
  int radius = 3;
  int num_corners = 0;                    // corner ids are 0..num_corners-1
  std::vector<Neighborhood> items;
  std::vector<std::vector<int>> by_corner;  // item indices grouped by corner id

  void rebuild_index();
  void validate() const;
};

/// Multiples of `step` inside (-pi, pi], ascending. step = 2*pi yields {0}.
std::vector<double> angle_lattice(double step);

/// Detects corners in every scene (multi-scale, per `harris`/`levels`/
/// `blur_sigma`), assigns global corner ids in detection order, and emits one
/// neighborhood per (tx, ty, tz) on the angle lattice for each corner, sampled
/// from the corner's own pyramid level. Throws DatasetError with fewer than
/// two corners overall.
TrainingSet synthesize_training_set(const std::vector<DensityGrid>& scenes,
                                    const HarrisConfig& harris, int levels,
                                    double blur_sigma, int radius, double angle_step);

/// Splits by corner id: every item of a held-out corner moves to the second
/// set. Fraction is the held-out share; selection is seeded.
std::pair<TrainingSet, TrainingSet> split_training_set(const TrainingSet& ts,
                                                       double holdout_fraction,
                                                       std::uint64_t seed);

// Dataset files: neighborhoods are stacked into one VGRD grid of dims
// (edge, edge, edge * count) at "<dir>/data.vgrd"; "<dir>/index.json" holds
// [{corner_id, orientation, offset}] where offset is the z-slab index.
void save_training_set(const TrainingSet& ts, const std::filesystem::path& dir);
TrainingSet load_training_set(const std::filesystem::path& dir);

}  // namespace volreg
