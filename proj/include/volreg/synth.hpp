// Copyright (c) 2026 volreg contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "volreg/grid.hpp"
#include "volreg/registration.hpp"

namespace volreg {

struct Aabb {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Zero();

  Vec3 size() const { return max - min; }
  bool intersects(const Aabb& o) const {
    for (int a = 0; a < 3; ++a)
      if (min[a] >= o.max[a] || o.min[a] >= max[a]) return false;
    return true;
  }
};

/// A soft-edged solid. Boxes and cylinders are enough to assemble the
/// procedural "room" scenes; a wall is just a thin box.
struct Primitive {
  enum class Kind { box, cylinder };

  Kind kind = Kind::box;
  Vec3 center = Vec3::Zero();
  Mat3 rotation = Mat3::Identity();  // local-to-world
  Vec3 half_size = Vec3::Ones();     // box: half extents; cylinder: x = radius, z = half height
  double amplitude = 1.0;

  double signed_distance(const Vec3& world_point) const;
};

/// Procedural density scene: density(p) = max over primitives of
/// amplitude * soft_indicator(p), plus seeded position-stationary Gaussian
/// noise, clamped to >= 0. The soft indicator ramps linearly from 1 to 0
/// across `edge_width` world units centered on the primitive surface.
struct SceneSpec {
  Aabb extent;
  std::vector<Primitive> primitives;
  double noise_sigma = 0.0;
  double edge_width = 0.0;  // <= 0 means one cell (resolved at render time)
  std::uint64_t seed = 0;

  void validate() const;
  double density(const Vec3& p, double cell_size) const;
};

/// Two overlapping grids of one scene plus the transform that registers
/// grid_b's frame onto grid_a's frame: x_a = true_transform(x_b).
struct OverlapPair {
  DensityGrid grid_a;
  DensityGrid grid_b;
  SimilarityTransform true_transform;
  double overlap_fraction = 0.0;
};

/// Rasterize the scene onto a dims/spacing lattice. The default origin puts
/// cell (0,0,0) at extent.min + spacing/2 so the lattice tiles the extent.
DensityGrid render_scene(const SceneSpec& spec, const std::array<int, 3>& dims,
                         double spacing, std::optional<Vec3> origin = std::nullopt);

/// Crop box A is rendered directly. Crop box B is rendered, then pulled back
/// through T: grid_b's lattice covers T^{-1}(B) and each of its cells samples
/// the rendered B grid (trilinear) at the T-image of the cell center. By
/// construction true_transform = T maps b-frame points onto a-frame points.
/// overlap_fraction counts occupied grid_a cells whose T^{-1} image lies
/// inside grid_b. Throws if A and B do not intersect.
OverlapPair make_overlap_pair(const SceneSpec& spec, const Aabb& crop_a,
                              const Aabb& crop_b, const SimilarityTransform& T,
                              double spacing);

/// Random indoor-like scene: six wall slabs around `extent` plus
/// [min_boxes, max_boxes] axis-aligned interior boxes with varied sizes and
/// amplitudes. Deterministic in `seed`.
SceneSpec make_room_scene(std::uint64_t seed, const Aabb& extent, int min_boxes = 3,
                          int max_boxes = 8, double noise_sigma = 0.02);

}  // namespace volreg
