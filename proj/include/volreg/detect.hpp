// Copyright (c) 2026 volreg contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <vector>

#include "volreg/grid.hpp"

namespace volreg {

/// Parameters of the 3D Harris corner detector.
struct HarrisConfig {
  double k = 0.06;             // trace coefficient in det(M) - k*tr(M)^2
  int window_radius = 2;       // half-width of the structure-tensor window
  int nms_radius = 2;          // half-width of the non-maximum suppression cube
  double response_floor = 0.01;  // keep cells with H >= floor * (level max)
  int border_margin = 6;       // discard corners closer than this to any face,
                               // so descriptor neighborhoods always fit

  void validate() const;
};

/// A detected interest point.
struct Corner {
  Vec3 position = Vec3::Zero();   // world coordinates at its pyramid level
  int level = 0;                  // pyramid level index
  double response = 0.0;          // Harris response (per-level normalized input)
  std::array<int, 3> grid_index{0, 0, 0};
};

struct GradientGrids {
  DensityGrid gx, gy, gz;
};

/// 3D Sobel gradients: the derivative axis uses taps (-1, 0, +1) (so a ramp
/// g(i,j,k) = i gives Gx = +32 in the interior) and the two cross axes use
/// the smoothing taps (1, 2, 1). Replicate boundary keeps the output dims
/// equal to the input dims. Requires every dim >= 3.
GradientGrids sobel_gradients(const DensityGrid& g);

/// Harris response per cell: M is the 3x3 structure tensor summed over the
/// uniform cube window of radius cfg.window_radius (clipped at the grid
/// boundary) and the response is det(M) - k * tr(M)^2. All sums run in
/// double precision.
DensityGrid harris_response(const DensityGrid& gx, const DensityGrid& gy,
                            const DensityGrid& gz, const HarrisConfig& cfg);

/// Full multi-scale detection. Each level is normalized by its max |density|
/// first (Eq. det - k*tr^2 is not homogeneous in 3D, so this is what makes
/// detection invariant to uniform density scaling), then Sobel -> Harris ->
/// relative threshold -> strict-maximum NMS -> border margin filter.
/// The result is sorted by (level, i, j, k); grid indices are converted to
/// world coordinates with the level's spacing and origin.
std::vector<Corner> detect_corners(const GridPyramid& pyr, const HarrisConfig& cfg);

}  // namespace volreg
