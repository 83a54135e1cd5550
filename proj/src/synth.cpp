// Copyright (c) 2026 volreg contributors
// SPDX-License-Identifier: Apache-2.0
#include "volreg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "volreg/errors.hpp"
#include "volreg/rng.hpp"

namespace volreg {

double Primitive::signed_distance(const Vec3& world_point) const {
  const Vec3 p = rotation.transpose() * (world_point - center);
  if (kind == Kind::box) {
    const Vec3 q = p.cwiseAbs() - half_size;
    const Vec3 outside = q.cwiseMax(0.0);
    const double inside = std::min(q.maxCoeff(), 0.0);
    return outside.norm() + inside;
  }
  // Cylinder along local z.
  const double dr = std::hypot(p.x(), p.y()) - half_size.x();
  const double dz = std::abs(p.z()) - half_size.z();
  const double outside = std::hypot(std::max(dr, 0.0), std::max(dz, 0.0));
  return outside + std::min(std::max(dr, dz), 0.0);
}

void SceneSpec::validate() const {
  if (primitives.empty()) throw ArgumentError("scene needs at least one primitive");
  for (const auto& prim : primitives) {
    if (!(prim.amplitude > 0.0)) throw ArgumentError("primitive amplitude must be > 0");
    if (!(prim.half_size.minCoeff() > 0.0))
      throw ArgumentError("primitive size must be > 0");
  }
  if (noise_sigma < 0.0) throw ArgumentError("noise sigma must be >= 0");
  if ((extent.max - extent.min).minCoeff() <= 0.0)
    throw ArgumentError("scene extent must have positive size");
}

double SceneSpec::density(const Vec3& p, double cell_size) const {
  const double w = edge_width > 0.0 ? edge_width : cell_size;
  double d = 0.0;
  for (const auto& prim : primitives) {
    const double sdf = prim.signed_distance(p);
    const double indicator = std::clamp(0.5 - sdf / w, 0.0, 1.0);
    d = std::max(d, prim.amplitude * indicator);
  }
  if (noise_sigma > 0.0) {
    Rng rng(hash_position(seed, p.x(), p.y(), p.z()));
    d += noise_sigma * rng.normal();
  }
  return std::max(d, 0.0);
}

DensityGrid render_scene(const SceneSpec& spec, const std::array<int, 3>& dims,
                         double spacing, std::optional<Vec3> origin) {
  spec.validate();
  if (dims[0] < 1 || dims[1] < 1 || dims[2] < 1)
    throw ArgumentError("render dims must all be >= 1");
  if (!(spacing > 0.0)) throw ArgumentError("render spacing must be > 0");

  const Vec3 org = origin.value_or(Vec3(spec.extent.min + 0.5 * spacing * Vec3::Ones()));
  DensityGrid g(dims, spacing, org);
  for (int k = 0; k < dims[2]; ++k)
    for (int j = 0; j < dims[1]; ++j)
      for (int i = 0; i < dims[0]; ++i)
        g.at(i, j, k) = spec.density(g.world(i, j, k), spacing);
  return g;
}

namespace {

std::array<int, 3> box_dims(const Aabb& box, double spacing) {
  std::array<int, 3> dims;
  for (int a = 0; a < 3; ++a) {
    dims[a] = static_cast<int>(std::llround((box.max[a] - box.min[a]) / spacing));
    dims[a] = std::max(dims[a], 1);
  }
  return dims;
}

}  // namespace

OverlapPair make_overlap_pair(const SceneSpec& spec, const Aabb& crop_a,
                              const Aabb& crop_b, const SimilarityTransform& T,
                              double spacing) {
  spec.validate();
  if (!crop_a.intersects(crop_b))
    throw ArgumentError("crop boxes must overlap in world space");
  if (!T.rotation_valid(1e-9)) throw ArgumentError("true transform rotation is invalid");
  if (!(T.scale > 0.0)) throw ArgumentError("true transform scale must be > 0");

  OverlapPair pair;
  pair.true_transform = T;

  pair.grid_a = render_scene(spec, box_dims(crop_a, spacing), spacing,
                             Vec3(crop_a.min + 0.5 * spacing * Vec3::Ones()));

  const DensityGrid rendered_b =
      render_scene(spec, box_dims(crop_b, spacing), spacing,
                   Vec3(crop_b.min + 0.5 * spacing * Vec3::Ones()));

  // b-frame lattice covering T^{-1}(crop_b).
  const SimilarityTransform inv = T.inverse();
  Aabb b_frame;
  b_frame.min = Vec3::Constant(std::numeric_limits<double>::infinity());
  b_frame.max = -b_frame.min;
  for (int corner = 0; corner < 8; ++corner) {
    Vec3 c(corner & 1 ? crop_b.max.x() : crop_b.min.x(),
           corner & 2 ? crop_b.max.y() : crop_b.min.y(),
           corner & 4 ? crop_b.max.z() : crop_b.min.z());
    const Vec3 q = inv.apply(c);
    b_frame.min = b_frame.min.cwiseMin(q);
    b_frame.max = b_frame.max.cwiseMax(q);
  }

  DensityGrid grid_b(box_dims(b_frame, spacing), spacing,
                     Vec3(b_frame.min + 0.5 * spacing * Vec3::Ones()));
  for (int k = 0; k < grid_b.dims[2]; ++k)
    for (int j = 0; j < grid_b.dims[1]; ++j)
      for (int i = 0; i < grid_b.dims[0]; ++i)
        grid_b.at(i, j, k) = sample_trilinear(rendered_b, T.apply(grid_b.world(i, j, k)));
  pair.grid_b = std::move(grid_b);

  // Fraction of occupied a-cells whose pre-image lies inside grid_b.
  double max_a = 0.0;
  for (double v : pair.grid_a.values) max_a = std::max(max_a, v);
  const double occupied_floor = 0.05 * max_a;
  std::size_t occupied = 0, visible = 0;
  if (max_a > 0.0) {
    for (int k = 0; k < pair.grid_a.dims[2]; ++k)
      for (int j = 0; j < pair.grid_a.dims[1]; ++j)
        for (int i = 0; i < pair.grid_a.dims[0]; ++i) {
          if (!(pair.grid_a.at(i, j, k) > occupied_floor)) continue;
          ++occupied;
          const Vec3 q = inv.apply(pair.grid_a.world(i, j, k));
          bool in = true;
          for (int a = 0; a < 3; ++a) {
            const double u = (q[a] - pair.grid_b.origin[a]) / spacing;
            if (u < 0.0 || u > static_cast<double>(pair.grid_b.dims[a] - 1)) in = false;
          }
          if (in) ++visible;
        }
  }
  pair.overlap_fraction =
      occupied == 0 ? 0.0 : static_cast<double>(visible) / static_cast<double>(occupied);
  return pair;
}

SceneSpec make_room_scene(std::uint64_t seed, const Aabb& extent, int min_boxes,
                          int max_boxes, double noise_sigma) {
  if (min_boxes < 0 || max_boxes < min_boxes)
    throw ArgumentError("invalid interior box count range");

  SceneSpec spec;
  spec.extent = extent;
  spec.seed = seed;
  spec.noise_sigma = noise_sigma;

  const Vec3 size = extent.size();
  const Vec3 mid = 0.5 * (extent.min + extent.max);
  const double wall = 0.04 * size.minCoeff() + 1.0;

  // Faint walls: enough density to shape the context around furniture, but
  // weak enough that corners where a crop plane slices a wall stay under the
  // relative Harris response floor instead of flooding the corner lists.
  auto add_wall = [&](int axis, bool positive) {
    Primitive p;
    p.kind = Primitive::Kind::box;
    p.center = mid;
    p.half_size = 0.5 * size;
    p.half_size[axis] = 0.5 * wall;
    p.center[axis] = positive ? extent.max[axis] - 0.5 * wall : extent.min[axis] + 0.5 * wall;
    p.amplitude = 0.35;
    spec.primitives.push_back(p);
  };
  for (int axis = 0; axis < 3; ++axis) {
    add_wall(axis, false);
    add_wall(axis, true);
  }

  Rng rng = Rng::derive(seed, 0xB0ul);
  const int items = static_cast<int>(rng.uniform_int(min_boxes, max_boxes));
  const Vec3 inner_min = extent.min + Vec3::Constant(wall + 2.0);
  const Vec3 inner_max = extent.max - Vec3::Constant(wall + 2.0);

  // Rejection-sample furniture with a 2-cell clearance; touching items merge
  // into blobs whose vertices stop being detectable corners. Amplitudes stay
  // within ~1.5x of each other so no item drops under the relative Harris
  // response floor (responses scale like amplitude^6). Composite shapes
  // (tables, L-shelves, stacks, pedestals) and yawed boxes give corners
  // locally distinctive junctions; a scene of plain axis-aligned cuboids has
  // near-identical corners everywhere and cannot be matched by appearance.
  std::vector<Aabb> placed;
  int accepted = 0;
  for (int attempt = 0; attempt < 60 * items && accepted < items; ++attempt) {
    std::vector<Primitive> parts;
    const int style = static_cast<int>(rng.uniform_int(0, 5));
    const double yaw = style >= 2 ? rng.uniform(0.0, M_PI / 2.0) : 0.0;
    const Mat3 orient = axis_rotation(2, yaw);
    double reach = 0.0;

    auto add_box = [&](const Vec3& local_center, const Vec3& half) {
      Primitive p;
      p.kind = Primitive::Kind::box;
      p.rotation = orient;
      p.center = orient * local_center;  // item center added later
      p.half_size = half;
      reach = std::max(reach, local_center.norm() + half.norm());
      parts.push_back(p);
    };
    auto add_cylinder = [&](const Vec3& local_center, double radius, double half_height) {
      Primitive p;
      p.kind = Primitive::Kind::cylinder;
      p.rotation = orient;
      p.center = orient * local_center;
      p.half_size = Vec3(radius, radius, half_height);
      reach = std::max(reach, local_center.norm() + std::hypot(radius, half_height));
      parts.push_back(p);
    };

    switch (style) {
      case 0: {  // plain box
        add_box(Vec3::Zero(), Vec3(rng.uniform(2.0, 4.2), rng.uniform(2.0, 4.2),
                                    rng.uniform(2.0, 4.2)));
        break;
      }
      case 1: {  // tilted cylinder
        Primitive p;
        p.kind = Primitive::Kind::cylinder;
        p.half_size = Vec3(rng.uniform(2.0, 4.0), rng.uniform(2.0, 4.0), 0.0);
        p.half_size[1] = p.half_size[0];
        p.half_size[2] = rng.uniform(3.0, 6.0);
        p.rotation = euler_rotation(rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4), 0.0);
        reach = std::hypot(p.half_size[0], p.half_size[2]);
        parts.push_back(p);
        break;
      }
      case 2: {  // table: slab on two end supports
        const double fx = rng.uniform(3.5, 5.5), fy = rng.uniform(2.5, 4.0);
        const double h = rng.uniform(3.0, 5.0), t = rng.uniform(0.8, 1.4);
        add_box(Vec3(0, 0, h - t), Vec3(fx, fy, t));
        const double leg = rng.uniform(0.8, 1.3);
        add_box(Vec3(fx - leg, 0, -t), Vec3(leg, fy * 0.8, h - t));
        add_box(Vec3(-(fx - leg), 0, -t), Vec3(leg, fy * 0.8, h - t));
        break;
      }
      case 3: {  // L-shaped shelf
        const double f = rng.uniform(3.0, 5.0), h = rng.uniform(2.5, 4.5);
        add_box(Vec3(0.5 * f, 0, 0), Vec3(0.5 * f + 1.0, rng.uniform(1.4, 2.2), h));
        add_box(Vec3(-0.5 * f, rng.uniform(1.5, 2.5), 0),
                Vec3(rng.uniform(1.4, 2.2), 0.5 * f + 1.0, h));
        break;
      }
      case 4: {  // stack of two offset boxes
        const double f = rng.uniform(2.8, 4.4), h1 = rng.uniform(1.6, 2.6);
        const double f2 = rng.uniform(1.4, 2.2), h2 = rng.uniform(1.4, 2.4);
        add_box(Vec3(0, 0, -h2), Vec3(f, f * rng.uniform(0.7, 1.0), h1));
        add_box(Vec3(rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5), h1),
                Vec3(f2, f2, h2));
        break;
      }
      default: {  // box on a cylindrical pedestal
        const double f = rng.uniform(2.6, 4.0), h = rng.uniform(1.5, 2.5);
        add_box(Vec3(0, 0, h), Vec3(f, f * rng.uniform(0.7, 1.0), h));
        add_cylinder(Vec3(0, 0, -h), rng.uniform(1.2, 2.0), h);
        break;
      }
    }

    Vec3 center;
    bool fits = true;
    for (int a = 0; a < 3; ++a) {
      if (inner_min[a] + reach >= inner_max[a] - reach) fits = false;
    }
    if (!fits) continue;
    for (int a = 0; a < 3; ++a) center[a] = rng.uniform(inner_min[a] + reach, inner_max[a] - reach);

    Aabb bound{center - Vec3::Constant(reach + 2.0), center + Vec3::Constant(reach + 2.0)};
    bool clear = true;
    for (const auto& other : placed)
      if (bound.intersects(other)) clear = false;
    if (!clear) continue;

    const double amplitude = rng.uniform(0.85, 1.3);
    for (Primitive& p : parts) {
      p.center += center;
      p.amplitude = amplitude;
      spec.primitives.push_back(p);
    }
    placed.push_back(bound);
    ++accepted;
  }
  return spec;
}

}  // namespace volreg
