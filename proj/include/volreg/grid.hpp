// Copyright (c) 2026 volreg contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace volreg {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Dense 3D scalar field on a uniform grid with a physical placement.
///
/// Values are stored x-fastest: index(i,j,k) = i + nx*(j + ny*k).
/// The world position of cell (i,j,k) is its center, origin + spacing*(i,j,k).
/// Files store values as float32 ("VGRD" format); in memory we keep doubles
/// so filter chains do not accumulate rounding between stages.
struct DensityGrid {
  std::array<int, 3> dims{0, 0, 0};  // nx, ny, nz
  double spacing = 1.0;              // uniform cell edge length, world units
  Vec3 origin = Vec3::Zero();        // world coordinate of cell (0,0,0) center
  std::vector<double> values;

  DensityGrid() = default;
  DensityGrid(std::array<int, 3> d, double sp, const Vec3& org, double fill = 0.0)
      : dims(d), spacing(sp), origin(org),
        values(static_cast<std::size_t>(d[0]) * d[1] * d[2], fill) {}

  std::size_t cell_count() const {
    return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  }

  std::size_t index(int i, int j, int k) const {
    return static_cast<std::size_t>(i) +
           static_cast<std::size_t>(dims[0]) *
               (static_cast<std::size_t>(j) + static_cast<std::size_t>(dims[1]) * k);
  }

  double at(int i, int j, int k) const { return values[index(i, j, k)]; }
  double& at(int i, int j, int k) { return values[index(i, j, k)]; }

  /// Replicate-boundary fetch: indices are clamped to the grid.
  double at_clamped(int i, int j, int k) const;

  bool in_bounds(int i, int j, int k) const {
    return i >= 0 && i < dims[0] && j >= 0 && j < dims[1] && k >= 0 && k < dims[2];
  }

  Vec3 world(int i, int j, int k) const {
    return origin + spacing * Vec3(static_cast<double>(i), static_cast<double>(j),
                                   static_cast<double>(k));
  }

  /// Nearest cell index of a world point (no bounds check).
  std::array<int, 3> nearest_index(const Vec3& p) const;

  /// Throws ArgumentError/DecodeError if dims, spacing, or values violate
  /// the type invariants (dims >= 1, spacing > 0, all values finite).
  void validate() const;
};

/// Multi-scale stack: level 0 is the finest grid; each subsequent level has
/// floor(dims/2) cells per axis and doubled spacing (same origin, since the
/// downsample keeps every even sample).
struct GridPyramid {
  std::vector<DensityGrid> levels;
  int num_levels() const { return static_cast<int>(levels.size()); }
};

/// Optional sidecar metadata stored next to a grid file as JSON.
struct GridMeta {
  std::string name;
  std::string source;
  std::string notes;
};

// --- VGRD file format -------------------------------------------------------
//
// Little-endian layout:
//   bytes 0..3   magic "VGRD"
//   u32          format version (1)
//   u32 x3       nx, ny, nz
//   f32          spacing
//   f32 x3       origin
//   f32 x nx*ny*nz  values, x-fastest
//
// The sidecar "<file>.meta.json" holds {name, source, notes} when present.

DensityGrid load_grid(const std::filesystem::path& path);
void save_grid(const DensityGrid& grid, const std::filesystem::path& path,
               const GridMeta* meta = nullptr);

DensityGrid decode_grid(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> encode_grid(const DensityGrid& grid);

std::optional<GridMeta> load_grid_meta(const std::filesystem::path& grid_path);

// --- Sampling / denoising strategies ----------------------------------------

/// Block-mean downsample. Pool sizes must be equal on all axes (the grid
/// spacing is uniform); trailing cells that do not fill a complete block are
/// truncated. Output spacing = spacing * pool; the origin moves to the center
/// of the first block.
DensityGrid average_pool(const DensityGrid& g, const std::array<int, 3>& pool);
DensityGrid average_pool(const DensityGrid& g, int pool);

/// Perona-Malik edge-preserving smoothing, `iters` explicit Euler steps of
///   I <- I + dt * div(c(|grad I|) grad I),   c(s) = exp(-(s/K)^2).
///
/// Discretization: the gradient inside c uses 6-neighbor central differences,
/// fluxes are face-centered with c averaged across each face, and the
/// boundary replicates (so boundary-crossing fluxes vanish). All distances
/// are in cell units. iters = 0 returns the input unchanged.
DensityGrid anisotropic_diffusion(const DensityGrid& g, int iters, double dt, double K);

/// Gaussian blur with a separable kernel (sigma in cells, radius ceil(3*sigma),
/// replicate boundary, weights normalized). sigma = 0 is the identity.
DensityGrid gaussian_blur(const DensityGrid& g, double sigma);

/// Level 0 is `g`; each next level is gaussian_blur(prev, blur_sigma) then
/// decimated by keeping even-indexed samples. Throws if any level would have
/// a zero dimension.
GridPyramid build_pyramid(const DensityGrid& g, int num_levels, double blur_sigma = 1.0);

/// Trilinear interpolation of the 8 surrounding cell centers. Points outside
/// the cell-center hull (index-space coordinates outside [0, n-1] on any
/// axis) return `fill`.
double sample_trilinear(const DensityGrid& g, const Vec3& p, double fill = 0.0);

}  // namespace volreg
