// Copyright (c) 2026 volreg contributors
// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <set>

#include "volreg/detect.hpp"
#include "volreg/errors.hpp"
#include "volreg/rng.hpp"
#include "volreg/sift3d.hpp"

using namespace volreg;

namespace {

DensityGrid random_grid(std::array<int, 3> dims, std::uint64_t seed) {
  DensityGrid g(dims, 1.0, Vec3::Zero());
  Rng rng(seed);
  for (auto& v : g.values) v = rng.uniform(-1.0, 1.0);
  return g;
}

// Naive full 3D convolution oracle for the separable Sobel kernel, replicate
// boundary, derivative taps (-1, 0, +1) on `axis` and (1, 2, 1) elsewhere.
double sobel_oracle(const DensityGrid& g, int axis, int i, int j, int k) {
  const double deriv[3] = {-1.0, 0.0, 1.0};
  const double smooth[3] = {1.0, 2.0, 1.0};
  double sum = 0.0;
  for (int c = -1; c <= 1; ++c)
    for (int b = -1; b <= 1; ++b)
      for (int a = -1; a <= 1; ++a) {
        const double wx = axis == 0 ? deriv[a + 1] : smooth[a + 1];
        const double wy = axis == 1 ? deriv[b + 1] : smooth[b + 1];
        const double wz = axis == 2 ? deriv[c + 1] : smooth[c + 1];
        sum += wx * wy * wz * g.at_clamped(i + a, j + b, k + c);
      }
  return sum;
}

// Per-cell structure tensor + response oracle (boundary-clipped window).
double harris_oracle(const DensityGrid& gx, const DensityGrid& gy, const DensityGrid& gz,
                     int i, int j, int k, int radius, double kval) {
  double m[3][3] = {{0, 0, 0}, {0, 0, 0}, {0, 0, 0}};
  for (int c = std::max(0, k - radius); c <= std::min(gz.dims[2] - 1, k + radius); ++c)
    for (int b = std::max(0, j - radius); b <= std::min(gy.dims[1] - 1, j + radius); ++b)
      for (int a = std::max(0, i - radius); a <= std::min(gx.dims[0] - 1, i + radius); ++a) {
        const double v[3] = {gx.at(a, b, c), gy.at(a, b, c), gz.at(a, b, c)};
        for (int r = 0; r < 3; ++r)
          for (int s = 0; s < 3; ++s) m[r][s] += v[r] * v[s];
      }
  const double det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
                     m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
                     m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
  const double tr = m[0][0] + m[1][1] + m[2][2];
  return det - kval * tr * tr;
}

// Hard-edged {0, amplitude} boxes; integer-valued fields keep the detection
// arithmetic exact under lattice rotations.
void fill_box(DensityGrid& g, std::array<int, 3> lo, std::array<int, 3> hi, double amp) {
  for (int k = lo[2]; k <= hi[2]; ++k)
    for (int j = lo[1]; j <= hi[1]; ++j)
      for (int i = lo[0]; i <= hi[0]; ++i) g.at(i, j, k) = amp;
}

DensityGrid asymmetric_scene(int n) {
  DensityGrid g({n, n, n}, 1.0, Vec3::Zero());
  fill_box(g, {8, 9, 10}, {14, 13, 15}, 1.0);
  fill_box(g, {18, 8, 17}, {23, 12, 22}, 1.0);
  fill_box(g, {9, 18, 8}, {13, 23, 12}, 1.0);
  return g;
}

std::array<int, 3> rotate_index(const LatticeRotation& q, const std::array<int, 3>& idx,
                                int n) {
  // rotation about the grid center in doubled coordinates so 2c = n-1 stays integral
  std::array<int, 3> out;
  for (int r = 0; r < 3; ++r) {
    int v = 0;
    for (int c = 0; c < 3; ++c) v += q(r, c) * (2 * idx[c] - (n - 1));
    out[r] = (v + (n - 1)) / 2;
  }
  return out;
}

DensityGrid rotate_grid(const DensityGrid& g, const LatticeRotation& q) {
  const int n = g.dims[0];
  REQUIRE(g.dims[1] == n);
  REQUIRE(g.dims[2] == n);
  DensityGrid out = g;
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        const auto t = rotate_index(q, {i, j, k}, n);
        out.at(t[0], t[1], t[2]) = g.at(i, j, k);
      }
  return out;
}

std::set<std::array<int, 3>> corner_index_set(const std::vector<Corner>& corners,
                                              int level = -1) {
  std::set<std::array<int, 3>> set;
  for (const auto& c : corners)
    if (level < 0 || c.level == level) set.insert(c.grid_index);
  return set;
}

}  // namespace

TEST_CASE("sobel of a constant grid is zero") {
  DensityGrid g({5, 5, 5}, 1.0, Vec3::Zero(), 3.0);
  const GradientGrids grads = sobel_gradients(g);
  for (std::size_t i = 0; i < g.cell_count(); ++i) {
    CHECK(grads.gx.values[i] == 0.0);
    CHECK(grads.gy.values[i] == 0.0);
    CHECK(grads.gz.values[i] == 0.0);
  }
}

TEST_CASE("sobel of a linear x ramp is +32 in the interior") {
  DensityGrid g({7, 7, 7}, 1.0, Vec3::Zero());
  for (int k = 0; k < 7; ++k)
    for (int j = 0; j < 7; ++j)
      for (int i = 0; i < 7; ++i) g.at(i, j, k) = i;
  const GradientGrids grads = sobel_gradients(g);
  for (int k = 1; k < 6; ++k)
    for (int j = 1; j < 6; ++j)
      for (int i = 1; i < 6; ++i) {
        CHECK(grads.gx.at(i, j, k) == 32.0);
        CHECK(grads.gy.at(i, j, k) == 0.0);
        CHECK(grads.gz.at(i, j, k) == 0.0);
      }
}

TEST_CASE("sobel matches the brute-force convolution oracle exactly") {
  const DensityGrid g = random_grid({5, 5, 5}, 101);
  const GradientGrids grads = sobel_gradients(g);
  for (int k = 0; k < 5; ++k)
    for (int j = 0; j < 5; ++j)
      for (int i = 0; i < 5; ++i) {
        CHECK(grads.gx.at(i, j, k) == sobel_oracle(g, 0, i, j, k));
        CHECK(grads.gy.at(i, j, k) == sobel_oracle(g, 1, i, j, k));
        CHECK(grads.gz.at(i, j, k) == sobel_oracle(g, 2, i, j, k));
      }
}

TEST_CASE("sobel rejects grids smaller than the kernel") {
  const DensityGrid g = random_grid({2, 5, 5}, 103);
  CHECK_THROWS_AS(static_cast<void>(sobel_gradients(g)), ArgumentError);
}

TEST_CASE("harris response of zero gradients is zero") {
  DensityGrid zero({6, 6, 6}, 1.0, Vec3::Zero(), 0.0);
  const DensityGrid h = harris_response(zero, zero, zero, HarrisConfig{});
  for (double v : h.values) CHECK(v == 0.0);
}

TEST_CASE("harris response of rank-one gradients is -k (sum Ix^2)^2") {
  DensityGrid gx = random_grid({5, 5, 5}, 107);
  DensityGrid zero = gx;
  for (auto& v : zero.values) v = 0.0;
  HarrisConfig cfg;
  cfg.window_radius = 1;
  const DensityGrid h = harris_response(gx, zero, zero, cfg);
  for (int k = 0; k < 5; ++k)
    for (int j = 0; j < 5; ++j)
      for (int i = 0; i < 5; ++i) {
        double sum = 0.0;
        for (int c = std::max(0, k - 1); c <= std::min(4, k + 1); ++c)
          for (int b = std::max(0, j - 1); b <= std::min(4, j + 1); ++b)
            for (int a = std::max(0, i - 1); a <= std::min(4, i + 1); ++a)
              sum += gx.at(a, b, c) * gx.at(a, b, c);
        CHECK(h.at(i, j, k) <= 0.0);
        CHECK(h.at(i, j, k) ==
              doctest::Approx(-cfg.k * sum * sum).epsilon(1e-12));
      }
}

TEST_CASE("harris response matches the per-cell oracle on random grids") {
  HarrisConfig cfg;
  cfg.window_radius = 1;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const DensityGrid gx = random_grid({7, 7, 7}, 200 + seed);
    const DensityGrid gy = random_grid({7, 7, 7}, 300 + seed);
    const DensityGrid gz = random_grid({7, 7, 7}, 400 + seed);
    const DensityGrid h = harris_response(gx, gy, gz, cfg);
    for (int k = 0; k < 7; ++k)
      for (int j = 0; j < 7; ++j)
        for (int i = 0; i < 7; ++i) {
          const double expect = harris_oracle(gx, gy, gz, i, j, k, 1, cfg.k);
          CHECK(h.at(i, j, k) == doctest::Approx(expect).epsilon(1e-9));
        }
  }
}

TEST_CASE("harris rejects mismatched gradient dims") {
  const DensityGrid a = random_grid({5, 5, 5}, 501);
  const DensityGrid b = random_grid({5, 5, 4}, 502);
  CHECK_THROWS_AS(static_cast<void>(harris_response(a, a, b, HarrisConfig{})), ArgumentError);
}

TEST_CASE("constant grids produce no corners") {
  DensityGrid g({16, 16, 16}, 1.0, Vec3::Zero(), 1.0);
  const GridPyramid pyr = build_pyramid(g, 2);
  CHECK(detect_corners(pyr, HarrisConfig{}).empty());
}

TEST_CASE("a solid cube yields exactly its 8 vertices at level 0") {
  DensityGrid g({32, 32, 32}, 1.0, Vec3::Zero());
  fill_box(g, {8, 8, 8}, {23, 23, 23}, 1.0);
  const GridPyramid pyr = build_pyramid(g, 3);
  const std::vector<Corner> corners = detect_corners(pyr, HarrisConfig{});

  std::vector<Corner> level0;
  for (const auto& c : corners)
    if (c.level == 0) level0.push_back(c);
  REQUIRE(level0.size() == 8);

  const double verts[2] = {8.0, 23.0};
  for (const auto& c : level0) {
    double best = 1e9;
    for (int vi = 0; vi < 8; ++vi) {
      const Vec3 v(verts[vi & 1], verts[(vi >> 1) & 1], verts[(vi >> 2) & 1]);
      best = std::min(best, (c.position - v).lpNorm<Eigen::Infinity>());
    }
    CHECK(best <= 2.0);
  }
}

TEST_CASE("detection is invariant under positive density scaling") {
  DensityGrid g = asymmetric_scene(32);
  const GridPyramid pyr = build_pyramid(g, 2);
  const auto base = corner_index_set(detect_corners(pyr, HarrisConfig{}));
  REQUIRE(!base.empty());

  for (double scale : {2.0, 0.25, 3.7}) {
    DensityGrid scaled = g;
    for (auto& v : scaled.values) v *= scale;
    const GridPyramid spyr = build_pyramid(scaled, 2);
    const auto set = corner_index_set(detect_corners(spyr, HarrisConfig{}));
    CHECK(set == base);
  }
}

TEST_CASE("no two corners share an NMS cube") {
  const DensityGrid g = asymmetric_scene(32);
  HarrisConfig cfg;
  const GridPyramid pyr = build_pyramid(g, 2);
  const auto corners = detect_corners(pyr, cfg);
  for (std::size_t a = 0; a < corners.size(); ++a)
    for (std::size_t b = a + 1; b < corners.size(); ++b) {
      if (corners[a].level != corners[b].level) continue;
      int cheb = 0;
      for (int axis = 0; axis < 3; ++axis)
        cheb = std::max(cheb,
                        std::abs(corners[a].grid_index[axis] - corners[b].grid_index[axis]));
      CHECK(cheb > cfg.nms_radius);
    }
}

TEST_CASE("corner list is sorted by level then lexicographic index") {
  const DensityGrid g = asymmetric_scene(32);
  const auto corners = detect_corners(build_pyramid(g, 2), HarrisConfig{});
  for (std::size_t i = 1; i < corners.size(); ++i) {
    const auto& a = corners[i - 1];
    const auto& b = corners[i];
    CHECK((a.level < b.level || (a.level == b.level && a.grid_index < b.grid_index)));
  }
}

TEST_CASE("90-degree lattice rotations permute detected corners exactly") {
  const DensityGrid g = asymmetric_scene(32);
  const int n = 32;
  const auto base = detect_corners(build_pyramid(g, 1), HarrisConfig{});
  REQUIRE(!base.empty());

  // three generators; the acceptance suite covers all 24 rotations
  for (int pick : {1, 7, 13}) {
    const LatticeRotation q = proper_lattice_rotations()[pick];
    const DensityGrid rotated = rotate_grid(g, q);
    const auto detected = corner_index_set(detect_corners(build_pyramid(rotated, 1),
                                                          HarrisConfig{}));
    std::set<std::array<int, 3>> expected;
    for (const auto& c : base) expected.insert(rotate_index(q, c.grid_index, n));
    CHECK(detected == expected);
  }
}
