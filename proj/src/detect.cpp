// Copyright (c) 2026 volreg contributors
// SPDX-License-Identifier: Apache-2.0
#include "volreg/detect.hpp"

#include <algorithm>
#include <cmath>

#include "volreg/errors.hpp"

namespace volreg {

void HarrisConfig::validate() const {
  if (!(k > 0.0)) throw ArgumentError("harris k must be > 0");
  if (window_radius < 1) throw ArgumentError("window_radius must be >= 1");
  if (nms_radius < 1) throw ArgumentError("nms_radius must be >= 1");
  if (!(response_floor >= 0.0 && response_floor <= 1.0))
    throw ArgumentError("response_floor must be in [0, 1]");
  if (border_margin < 0) throw ArgumentError("border_margin must be >= 0");
}

GradientGrids sobel_gradients(const DensityGrid& g) {
  g.validate();
  if (g.dims[0] < 3 || g.dims[1] < 3 || g.dims[2] < 3)
    throw ArgumentError("sobel_gradients needs every grid dimension >= 3");

  static constexpr double kDeriv[3] = {-1.0, 0.0, 1.0};
  static constexpr double kSmooth[3] = {1.0, 2.0, 1.0};

  GradientGrids out{g, g, g};
  const int nx = g.dims[0], ny = g.dims[1], nz = g.dims[2];
  for (int k = 0; k < nz; ++k)
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i) {
        double sx = 0.0, sy = 0.0, sz = 0.0;
        for (int c = -1; c <= 1; ++c)
          for (int b = -1; b <= 1; ++b)
            for (int a = -1; a <= 1; ++a) {
              const double v = g.at_clamped(i + a, j + b, k + c);
              sx += kDeriv[a + 1] * kSmooth[b + 1] * kSmooth[c + 1] * v;
              sy += kSmooth[a + 1] * kDeriv[b + 1] * kSmooth[c + 1] * v;
              sz += kSmooth[a + 1] * kSmooth[b + 1] * kDeriv[c + 1] * v;
            }
        const std::size_t idx = g.index(i, j, k);
        out.gx.values[idx] = sx;
        out.gy.values[idx] = sy;
        out.gz.values[idx] = sz;
      }
  return out;
}

namespace {

// Per-axis window sum with the window clipped at the grid boundary.
// Direct (non-sliding) accumulation keeps each output an order-independent
// exact sum when the inputs are representable integers.
void box_sum_axis(std::vector<double>& v, const std::array<int, 3>& dims, int axis,
                  int radius) {
  const int nx = dims[0], ny = dims[1], nz = dims[2];
  std::vector<double> tmp(v.size());
  auto idx = [&](int i, int j, int k) {
    return static_cast<std::size_t>(i) +
           static_cast<std::size_t>(nx) *
               (static_cast<std::size_t>(j) + static_cast<std::size_t>(ny) * k);
  };
  for (int k = 0; k < nz; ++k)
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i) {
        int c = axis == 0 ? i : (axis == 1 ? j : k);
        const int n = dims[axis];
        const int lo = std::max(0, c - radius), hi = std::min(n - 1, c + radius);
        double s = 0.0;
        for (int t = lo; t <= hi; ++t) {
          if (axis == 0)
            s += v[idx(t, j, k)];
          else if (axis == 1)
            s += v[idx(i, t, k)];
          else
            s += v[idx(i, j, t)];
        }
        tmp[idx(i, j, k)] = s;
      }
  v.swap(tmp);
}

}  // namespace

DensityGrid harris_response(const DensityGrid& gx, const DensityGrid& gy,
                            const DensityGrid& gz, const HarrisConfig& cfg) {
  cfg.validate();
  if (gx.dims != gy.dims || gy.dims != gz.dims)
    throw ArgumentError("gradient grids must share dims");
  gx.validate();
  gy.validate();
  gz.validate();

  const std::size_t n = gx.cell_count();
  std::array<std::vector<double>, 6> m;  // xx, yy, zz, xy, xz, yz
  for (auto& mv : m) mv.resize(n);
  for (std::size_t idx = 0; idx < n; ++idx) {
    const double a = gx.values[idx], b = gy.values[idx], c = gz.values[idx];
    m[0][idx] = a * a;
    m[1][idx] = b * b;
    m[2][idx] = c * c;
    m[3][idx] = a * b;
    m[4][idx] = a * c;
    m[5][idx] = b * c;
  }
  for (auto& mv : m)
    for (int axis = 0; axis < 3; ++axis) box_sum_axis(mv, gx.dims, axis, cfg.window_radius);

  DensityGrid out = gx;
  for (std::size_t idx = 0; idx < n; ++idx) {
    const double xx = m[0][idx], yy = m[1][idx], zz = m[2][idx];
    const double xy = m[3][idx], xz = m[4][idx], yz = m[5][idx];
    // Minor-factored determinant keeps intermediate magnitudes small.
    const double det = xx * (yy * zz - yz * yz) - xy * (xy * zz - yz * xz) +
                       xz * (xy * yz - yy * xz);
    const double tr = xx + yy + zz;
    out.values[idx] = det - cfg.k * tr * tr;
  }
  return out;
}

std::vector<Corner> detect_corners(const GridPyramid& pyr, const HarrisConfig& cfg) {
  cfg.validate();
  if (pyr.levels.empty()) throw ArgumentError("pyramid has no levels");

  std::vector<Corner> corners;
  for (int level = 0; level < pyr.num_levels(); ++level) {
    const DensityGrid& raw = pyr.levels[level];
    if (raw.dims[0] < 3 || raw.dims[1] < 3 || raw.dims[2] < 3)
      throw ArgumentError("pyramid level too small for Sobel gradients");

    double maxabs = 0.0;
    for (double v : raw.values) maxabs = std::max(maxabs, std::abs(v));
    if (maxabs == 0.0) continue;

    DensityGrid norm = raw;
    const double inv = 1.0 / maxabs;
    for (double& v : norm.values) v *= inv;

    const GradientGrids grads = sobel_gradients(norm);
    const DensityGrid resp = harris_response(grads.gx, grads.gy, grads.gz, cfg);

    double level_max = -std::numeric_limits<double>::infinity();
    for (double v : resp.values) level_max = std::max(level_max, v);
    if (!(level_max > 0.0)) continue;
    const double threshold = cfg.response_floor * level_max;

    const int nx = raw.dims[0], ny = raw.dims[1], nz = raw.dims[2];
    const int r = cfg.nms_radius, mgn = cfg.border_margin;
    for (int k = mgn; k < nz - mgn; ++k)
      for (int j = mgn; j < ny - mgn; ++j)
        for (int i = mgn; i < nx - mgn; ++i) {
          const double h = resp.at(i, j, k);
          if (!(h >= threshold)) continue;
          bool is_max = true;
          for (int c = std::max(0, k - r); c <= std::min(nz - 1, k + r) && is_max; ++c)
            for (int b = std::max(0, j - r); b <= std::min(ny - 1, j + r) && is_max; ++b)
              for (int a = std::max(0, i - r); a <= std::min(nx - 1, i + r); ++a) {
                if (a == i && b == j && c == k) continue;
                if (resp.at(a, b, c) >= h) {  // ties suppress both
                  is_max = false;
                  break;
                }
              }
          if (!is_max) continue;
          Corner corner;
          corner.position = raw.world(i, j, k);
          corner.level = level;
          corner.response = h;
          corner.grid_index = {i, j, k};
          corners.push_back(corner);
        }
  }
  std::sort(corners.begin(), corners.end(), [](const Corner& a, const Corner& b) {
    if (a.level != b.level) return a.level < b.level;
    return a.grid_index < b.grid_index;
  });
  return corners;
}

}  // namespace volreg
