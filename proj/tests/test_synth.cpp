// Copyright (c) 2026 volreg contributors
// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "volreg/detect.hpp"
#include "volreg/errors.hpp"
#include "volreg/registration.hpp"
#include "volreg/synth.hpp"

using namespace volreg;

namespace {

SceneSpec unit_box_scene(double amplitude = 1.0) {
  SceneSpec spec;
  spec.extent = {Vec3::Zero(), Vec3::Constant(32.0)};
  Primitive box;
  box.kind = Primitive::Kind::box;
  box.center = Vec3::Constant(16.0);
  box.half_size = Vec3::Constant(8.0);
  box.amplitude = amplitude;
  spec.primitives.push_back(box);
  return spec;
}

}  // namespace

TEST_CASE("a box renders exactly its interior cells") {
  const SceneSpec spec = unit_box_scene();
  const DensityGrid g = render_scene(spec, {32, 32, 32}, 1.0);
  for (int k = 0; k < 32; ++k)
    for (int j = 0; j < 32; ++j)
      for (int i = 0; i < 32; ++i) {
        const Vec3 p = g.world(i, j, k);
        const bool inside = (p.array() > 8.0).all() && (p.array() < 24.0).all();
        CHECK(g.at(i, j, k) == (inside ? 1.0 : 0.0));
      }
}

TEST_CASE("scene validation rejects empty or degenerate specs") {
  SceneSpec empty;
  empty.extent = {Vec3::Zero(), Vec3::Constant(8.0)};
  CHECK_THROWS_AS(empty.validate(), ArgumentError);

  SceneSpec bad = unit_box_scene();
  bad.primitives[0].amplitude = 0.0;
  CHECK_THROWS_AS(bad.validate(), ArgumentError);
}

TEST_CASE("rendering is deterministic in the seed") {
  SceneSpec spec = unit_box_scene();
  spec.noise_sigma = 0.05;
  spec.seed = 77;
  const DensityGrid a = render_scene(spec, {16, 16, 16}, 2.0);
  const DensityGrid b = render_scene(spec, {16, 16, 16}, 2.0);
  CHECK(a.values == b.values);

  spec.seed = 78;
  const DensityGrid c = render_scene(spec, {16, 16, 16}, 2.0);
  CHECK(a.values != c.values);
}

TEST_CASE("noise is a function of world position, not iteration order") {
  SceneSpec spec = unit_box_scene();
  spec.noise_sigma = 0.05;
  spec.seed = 9;
  // two lattices shifted by an integer number of cells share cell positions
  const DensityGrid a = render_scene(spec, {16, 16, 16}, 1.0, Vec3(0.5, 0.5, 0.5));
  const DensityGrid b = render_scene(spec, {12, 12, 12}, 1.0, Vec3(4.5, 2.5, 3.5));
  for (int k = 0; k < 12; ++k)
    for (int j = 0; j < 12; ++j)
      for (int i = 0; i < 12; ++i) {
        const int ia = i + 4, ja = j + 2, ka = k + 3;
        if (ia < 16 && ja < 16 && ka < 16) CHECK(b.at(i, j, k) == a.at(ia, ja, ka));
      }
}

TEST_CASE("a rendered cube detects exactly its 8 vertices at level 0") {
  SceneSpec spec = unit_box_scene();
  const DensityGrid g = render_scene(spec, {32, 32, 32}, 1.0);
  const auto corners = detect_corners(build_pyramid(g, 1), HarrisConfig{});
  CHECK(corners.size() == 8);
}

TEST_CASE("identity overlap pair is two copies with overlap 1") {
  SceneSpec spec = unit_box_scene();
  spec.noise_sigma = 0.02;
  spec.seed = 5;
  const Aabb crop{Vec3::Zero(), Vec3::Constant(32.0)};
  const OverlapPair pair = make_overlap_pair(spec, crop, crop, SimilarityTransform{}, 1.0);
  CHECK(pair.grid_a.dims == pair.grid_b.dims);
  CHECK(pair.grid_a.values == pair.grid_b.values);
  CHECK(pair.overlap_fraction == 1.0);
}

TEST_CASE("lattice-exact transforms give bitwise-equal overlap regions") {
  SceneSpec spec = unit_box_scene();
  spec.noise_sigma = 0.02;
  spec.seed = 21;
  // quarter turn about z plus an integer-cell translation
  SimilarityTransform t;
  t.rotation = axis_rotation(2, M_PI / 2.0);
  t.translation = Vec3(3.0, -2.0, 1.0);

  const Aabb crop_a{Vec3::Zero(), Vec3::Constant(32.0)};
  const Aabb crop_b{Vec3(4.0, 4.0, 4.0), Vec3(28.0, 28.0, 28.0)};
  const OverlapPair pair = make_overlap_pair(spec, crop_a, crop_b, t, 1.0);

  const SimilarityTransform inv = t.inverse();
  int compared = 0;
  for (int k = 0; k < pair.grid_b.dims[2]; ++k)
    for (int j = 0; j < pair.grid_b.dims[1]; ++j)
      for (int i = 0; i < pair.grid_b.dims[0]; ++i) {
        const Vec3 pa = t.apply(pair.grid_b.world(i, j, k));
        const auto idx = pair.grid_a.nearest_index(pa);
        if (!pair.grid_a.in_bounds(idx[0], idx[1], idx[2])) continue;
        CHECK(pair.grid_b.at(i, j, k) == pair.grid_a.at(idx[0], idx[1], idx[2]));
        ++compared;
      }
  CHECK(compared > 1000);
  static_cast<void>(inv);
}

TEST_CASE("lattice-inexact pairs keep corner correspondences consistent") {
  SceneSpec spec = unit_box_scene();
  const Aabb crop{Vec3::Zero(), Vec3::Constant(32.0)};
  SimilarityTransform t;
  t.rotation = axis_rotation(1, M_PI / 6.0);
  t.translation = Vec3(1.5, -4.25, 2.0);
  const OverlapPair pair = make_overlap_pair(spec, crop, crop, t, 1.0);

  HarrisConfig cfg;
  const auto corners_a = detect_corners(build_pyramid(pair.grid_a, 1), cfg);
  const auto corners_b = detect_corners(build_pyramid(pair.grid_b, 1), cfg);
  REQUIRE(corners_a.size() == 8);
  REQUIRE(!corners_b.empty());

  // every detected b-corner should land within ~1 cell of an a-corner under T
  for (const auto& cb : corners_b) {
    const Vec3 mapped = t.apply(cb.position);
    double best = 1e9;
    for (const auto& ca : corners_a) best = std::min(best, (mapped - ca.position).norm());
    CHECK(best <= 1.5);
  }
}

TEST_CASE("disjoint crops are rejected") {
  const SceneSpec spec = unit_box_scene();
  const Aabb a{Vec3::Zero(), Vec3::Constant(10.0)};
  const Aabb b{Vec3::Constant(11.0), Vec3::Constant(20.0)};
  CHECK_THROWS_AS(
      static_cast<void>(make_overlap_pair(spec, a, b, SimilarityTransform{}, 1.0)),
      ArgumentError);
}

TEST_CASE("room scenes are deterministic and corner-rich") {
  const Aabb extent{Vec3::Zero(), Vec3::Constant(64.0)};
  const SceneSpec room = make_room_scene(123, extent, 5, 8, 0.0);
  const SceneSpec room2 = make_room_scene(123, extent, 5, 8, 0.0);
  CHECK(room.primitives.size() == room2.primitives.size());
  CHECK(room.primitives.size() >= 11);  // 6 walls + at least 5 boxes

  const DensityGrid g = render_scene(room, {64, 64, 64}, 1.0);
  const auto corners = detect_corners(build_pyramid(g, 2), HarrisConfig{});
  CHECK(corners.size() >= 20);
}
