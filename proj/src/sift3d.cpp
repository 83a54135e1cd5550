// Copyright (c) 2026 volreg contributors
// SPDX-License-Identifier: Apache-2.0
#include "volreg/sift3d.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>

#include "volreg/errors.hpp"

namespace volreg {

const std::vector<LatticeRotation>& proper_lattice_rotations() {
  static const std::vector<LatticeRotation> rotations = [] {
    std::vector<LatticeRotation> out;
    int perm[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
    for (auto& p : perm)
      for (int signs = 0; signs < 8; ++signs) {
        LatticeRotation m = LatticeRotation::Zero();
        for (int r = 0; r < 3; ++r)
          m(r, p[r]) = (signs >> r) & 1 ? -1 : 1;
        const int det = m(0, 0) * (m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1)) -
                        m(0, 1) * (m(1, 0) * m(2, 2) - m(1, 2) * m(2, 0)) +
                        m(0, 2) * (m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0));
        if (det == 1) out.push_back(m);
      }
    return out;
  }();
  return rotations;
}

std::vector<double> sift3d_window(const DensityGrid& g, const Corner& c) {
  const auto& idx = c.grid_index;
  for (int a = 0; a < 3; ++a)
    if (idx[a] - kSiftMargin < 0 || idx[a] + kSiftMargin > g.dims[a] - 1)
      throw ExcludedCornerError("sift window leaves the grid");
  std::vector<double> window(static_cast<std::size_t>(kSiftWindowEdge) * kSiftWindowEdge *
                             kSiftWindowEdge);
  std::size_t w = 0;
  for (int dz = -kSiftMargin; dz <= kSiftMargin; ++dz)
    for (int dy = -kSiftMargin; dy <= kSiftMargin; ++dy)
      for (int dx = -kSiftMargin; dx <= kSiftMargin; ++dx)
        window[w++] = g.at(idx[0] + dx, idx[1] + dy, idx[2] + dz);
  return window;
}

namespace {

constexpr int kEdge = kSiftWindowEdge;

inline std::size_t widx(int x, int y, int z) {
  return static_cast<std::size_t>(x) +
         static_cast<std::size_t>(kEdge) * (static_cast<std::size_t>(y) + kEdge * z);
}

inline int clampi(int v, int hi) { return v < 0 ? 0 : (v > hi ? hi : v); }

// Canonical orientation from the gradient structure tensor: the two leading
// eigenvectors give the strongest gradient directions (the face normals at a
// corner-like window), their signs are fixed against the mean gradient, and
// the third axis completes a right-handed frame. Rotating the window rotates
// the tensor and the mean covariantly, so the frame follows any rotation of
// the input as long as the eigenvalues and the sign projections are
// non-degenerate.
Eigen::Matrix3d canonical_frame(const Eigen::Vector3d& mean_gradient,
                                const Eigen::Matrix3d& structure_tensor) {
  Eigen::Matrix3d frame = Eigen::Matrix3d::Identity();
  if (!(mean_gradient.norm() > 1e-12)) return frame;

  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(structure_tensor);
  if (eig.info() != Eigen::Success) return frame;
  // eigenvalues ascend; columns are orthonormal
  Eigen::Vector3d e1 = eig.eigenvectors().col(2);
  Eigen::Vector3d e2 = eig.eigenvectors().col(1);
  if (e1.dot(mean_gradient) < 0.0) e1 = -e1;
  if (e2.dot(mean_gradient) < 0.0) e2 = -e2;
  frame.row(0) = e1;
  frame.row(1) = e2;
  frame.row(2) = e1.cross(e2);
  return frame;
}

}  // namespace

std::vector<double> smooth_window(const std::vector<double>& window, double sigma) {
  if (window.size() != static_cast<std::size_t>(kEdge) * kEdge * kEdge)
    throw ShapeError("sift window must be 11x11x11");
  if (!(sigma > 0.0)) return window;
  const int radius = static_cast<int>(std::ceil(2.0 * sigma));
  std::vector<double> kernel(2 * radius + 1);
  double wsum = 0.0;
  for (int t = -radius; t <= radius; ++t) {
    kernel[t + radius] = std::exp(-0.5 * t * t / (sigma * sigma));
    wsum += kernel[t + radius];
  }
  for (double& w : kernel) w /= wsum;

  std::vector<double> a = window, b(window.size());
  for (int axis = 0; axis < 3; ++axis) {
    for (int z = 0; z < kEdge; ++z)
      for (int y = 0; y < kEdge; ++y)
        for (int x = 0; x < kEdge; ++x) {
          double s = 0.0;
          for (int t = -radius; t <= radius; ++t) {
            int xs = x, ys = y, zs = z;
            if (axis == 0) xs = clampi(x + t, kEdge - 1);
            if (axis == 1) ys = clampi(y + t, kEdge - 1);
            if (axis == 2) zs = clampi(z + t, kEdge - 1);
            s += kernel[t + radius] * a[widx(xs, ys, zs)];
          }
          b[widx(x, y, z)] = s;
        }
    a.swap(b);
  }
  return a;
}

Eigen::VectorXd sift3d_histogram(const std::vector<double>& window) {
  return sift3d_histogram_at(window, kSiftPreSigma);
}

Eigen::VectorXd sift3d_histogram_at(const std::vector<double>& window, double sigma) {
  if (window.size() != static_cast<std::size_t>(kEdge) * kEdge * kEdge)
    throw ShapeError("sift window must be 11x11x11");

  // Gradients are taken on a smoothed copy of the window (the descriptor
  // scale), otherwise one-cell-thin surface sheets make the histogram
  // hypersensitive to single-cell shifts of the window center.
  const std::vector<double> smoothed = smooth_window(window, sigma);

  // Central differences of the inner 9^3 cells, indexed by offset from the
  // center in [-4, 4]^3.
  constexpr int r = kSiftRadius;
  std::vector<Eigen::Vector3d> grads;
  std::vector<Eigen::Vector3d> offsets;
  grads.reserve(9 * 9 * 9);
  offsets.reserve(9 * 9 * 9);
  double total_mag = 0.0;
  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
  for (int dz = -r; dz <= r; ++dz)
    for (int dy = -r; dy <= r; ++dy)
      for (int dx = -r; dx <= r; ++dx) {
        const int x = dx + kSiftMargin, y = dy + kSiftMargin, z = dz + kSiftMargin;
        const Eigen::Vector3d grad(
            0.5 * (smoothed[widx(x + 1, y, z)] - smoothed[widx(x - 1, y, z)]),
            0.5 * (smoothed[widx(x, y + 1, z)] - smoothed[widx(x, y - 1, z)]),
            0.5 * (smoothed[widx(x, y, z + 1)] - smoothed[widx(x, y, z - 1)]));
        grads.push_back(grad);
        offsets.push_back(Eigen::Vector3d(dx, dy, dz));
        const double mag = grad.norm();
        total_mag += mag;
        centroid += mag * offsets.back();
      }

  // Everything below anchors at the gradient-mass centroid rather than the
  // window center, so a one-cell mislocation of the detected corner moves
  // the anchor with the content instead of shearing the subgrid partition.
  if (total_mag > 1e-12) centroid /= total_mag;

  std::vector<double> falloff(grads.size());
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  Eigen::Matrix3d tensor = Eigen::Matrix3d::Zero();
  for (std::size_t i = 0; i < grads.size(); ++i) {
    falloff[i] = std::exp(-(offsets[i] - centroid).squaredNorm() /
                          (2.0 * kSiftSpatialSigma * kSiftSpatialSigma));
    mean += falloff[i] * grads[i];
    tensor += falloff[i] * grads[i] * grads[i].transpose();
  }

  const Eigen::Matrix3d frame = canonical_frame(mean, tensor);

  Eigen::VectorXd hist = Eigen::VectorXd::Zero(kSiftDim);
  for (std::size_t i = 0; i < grads.size(); ++i) {
    const double weight = grads[i].norm() * falloff[i];
    if (!(weight > 1e-12)) continue;
    const Eigen::Vector3d g = frame * grads[i];
    const Eigen::Vector3d o = frame * (offsets[i] - centroid);

    // soft spatial assignment over the 3x3x3 subgrid lattice (centers at
    // -3, 0, 3 cells around the anchor; clamped at the edges)
    double axis_w[3][2];
    int axis_s[3][2];
    for (int a = 0; a < 3; ++a) {
      const double u = std::clamp(o[a] / 3.0 + 1.0, 0.0, 2.0);  // centers at 0, 1, 2
      const int s0 = std::min(static_cast<int>(std::floor(u)), 1);
      const double f = u - s0;
      axis_s[a][0] = s0;
      axis_s[a][1] = s0 + 1;
      axis_w[a][0] = 1.0 - f;
      axis_w[a][1] = f;
    }

    // soft orientation assignment: linear across the azimuth sectors and
    // the elevation bands
    constexpr int na = kSiftAzimuthBins, ne = kSiftElevationBands;
    const double az = std::atan2(g.y(), g.x());  // (-pi, pi]
    const double u_az = (az + M_PI) / (2.0 * M_PI / na);  // [0, na]
    const int a0 = static_cast<int>(std::floor(u_az - 0.5 + na)) - na;
    const double fa = u_az - 0.5 - a0;
    const int az_bin0 = ((a0 % na) + na) % na;
    const int az_bin1 = (az_bin0 + 1) % na;

    const double elev = std::atan2(g.z(), std::hypot(g.x(), g.y()));  // [-pi/2, pi/2]
    const double u_el =
        std::clamp((elev + M_PI / 2.0) / (M_PI / ne) - 0.5, 0.0, double(ne - 1));
    const int e0 = std::min(static_cast<int>(std::floor(u_el)), ne - 2);
    const double fe = u_el - e0;

    const double orient_w[4] = {(1.0 - fa) * (1.0 - fe), fa * (1.0 - fe),
                                (1.0 - fa) * fe, fa * fe};
    const int orient_bin[4] = {e0 * na + az_bin0, e0 * na + az_bin1,
                               (e0 + 1) * na + az_bin0, (e0 + 1) * na + az_bin1};

    for (int sc = 0; sc < 2; ++sc)
      for (int sb = 0; sb < 2; ++sb)
        for (int sa = 0; sa < 2; ++sa) {
          const double wspace = axis_w[0][sa] * axis_w[1][sb] * axis_w[2][sc];
          if (wspace == 0.0) continue;
          const int sub =
              axis_s[0][sa] + 3 * (axis_s[1][sb] + 3 * axis_s[2][sc]);
          for (int ob = 0; ob < 4; ++ob)
            hist[sub * kSiftBins + orient_bin[ob]] += weight * wspace * orient_w[ob];
        }
  }
  return hist;
}

Descriptor sift3d_from_window(const std::vector<double>& window) {
  Eigen::VectorXd hist = sift3d_histogram(window);
  const double norm = hist.norm();
  if (norm < 1e-12) return Descriptor::Constant(kSiftDim, 1.0 / std::sqrt(kSiftDim));
  return hist / norm;
}

namespace {

// Gradient-mass centroid of a window, in cells relative to its center.
Eigen::Vector3d window_centroid(const std::vector<double>& window) {
  const std::vector<double> smoothed = smooth_window(window);
  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
  double total = 0.0;
  for (int dz = -kSiftRadius; dz <= kSiftRadius; ++dz)
    for (int dy = -kSiftRadius; dy <= kSiftRadius; ++dy)
      for (int dx = -kSiftRadius; dx <= kSiftRadius; ++dx) {
        const int x = dx + kSiftMargin, y = dy + kSiftMargin, z = dz + kSiftMargin;
        const Eigen::Vector3d grad(
            0.5 * (smoothed[widx(x + 1, y, z)] - smoothed[widx(x - 1, y, z)]),
            0.5 * (smoothed[widx(x, y + 1, z)] - smoothed[widx(x, y - 1, z)]),
            0.5 * (smoothed[widx(x, y, z + 1)] - smoothed[widx(x, y, z - 1)]));
        const double mag = grad.norm();
        total += mag;
        centroid += mag * Eigen::Vector3d(dx, dy, dz);
      }
  return total > 1e-12 ? Eigen::Vector3d(centroid / total) : Eigen::Vector3d::Zero();
}

// Gradient-intersection (Foerstner) point of a window: the least-squares
// intersection of the gradient sheets, solving (sum g g^T) x = sum g g^T p.
// At a trihedral corner this pins the actual vertex to sub-cell accuracy in
// a lattice-independent way; degenerate windows fall back to the centroid.
Eigen::Vector3d window_vertex(const std::vector<double>& window) {
  const std::vector<double> smoothed = smooth_window(window, 0.9);
  Eigen::Matrix3d a = Eigen::Matrix3d::Zero();
  Eigen::Vector3d b = Eigen::Vector3d::Zero();
  // tight locality weight: gradient sheets of neighboring objects inside the
  // window would otherwise drag the intersection away from this corner
  const double loc_sigma = 2.2;
  for (int dz = -kSiftRadius; dz <= kSiftRadius; ++dz)
    for (int dy = -kSiftRadius; dy <= kSiftRadius; ++dy)
      for (int dx = -kSiftRadius; dx <= kSiftRadius; ++dx) {
        const int x = dx + kSiftMargin, y = dy + kSiftMargin, z = dz + kSiftMargin;
        const Eigen::Vector3d grad(
            0.5 * (smoothed[widx(x + 1, y, z)] - smoothed[widx(x - 1, y, z)]),
            0.5 * (smoothed[widx(x, y + 1, z)] - smoothed[widx(x, y - 1, z)]),
            0.5 * (smoothed[widx(x, y, z + 1)] - smoothed[widx(x, y, z - 1)]));
        const double loc =
            std::exp(-(dx * dx + dy * dy + dz * dz) / (2.0 * loc_sigma * loc_sigma));
        const Eigen::Matrix3d outer = loc * grad * grad.transpose();
        a += outer;
        b += outer * Eigen::Vector3d(dx, dy, dz);
      }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(a);
  if (eig.info() != Eigen::Success ||
      !(eig.eigenvalues()(0) > 1e-6 * eig.eigenvalues()(2)) ||
      !(eig.eigenvalues()(2) > 1e-12))
    return window_centroid(window);
  const Eigen::Vector3d x = a.ldlt().solve(b);
  // keep the solution inside the window; wild extrapolations mean the
  // gradient sheets do not actually intersect nearby
  if (!(x.cwiseAbs().maxCoeff() <= 3.0)) return window_centroid(window);
  return x;
}

}  // namespace

Descriptor sift3d_descriptor(const DensityGrid& g, const Corner& c,
                             Vec3* anchor_world) {
  // The Harris peak sits a lattice-dependent cell or two inside the actual
  // corner, so two windows of the same physical corner from differently
  // oriented grids end up centered on different world points. Walking the
  // window onto the gradient-mass anchor removes that offset before binning.
  Corner anchor = c;
  std::vector<double> window = sift3d_window(g, anchor);
  Eigen::Vector3d centroid = window_centroid(window);
  for (int iter = 0; iter < 2; ++iter) {
    const std::array<int, 3> shift = {
        static_cast<int>(std::llround(centroid.x())),
        static_cast<int>(std::llround(centroid.y())),
        static_cast<int>(std::llround(centroid.z()))};
    if (shift[0] == 0 && shift[1] == 0 && shift[2] == 0) break;
    Corner moved = anchor;
    for (int a = 0; a < 3; ++a) moved.grid_index[a] += shift[a];
    try {
      window = sift3d_window(g, moved);
      anchor = moved;
      centroid = window_centroid(window);
    } catch (const ExcludedCornerError&) {
      break;  // keep the last window that fit
    }
  }
  if (anchor_world != nullptr)
    *anchor_world =
        g.world(anchor.grid_index[0], anchor.grid_index[1], anchor.grid_index[2]) +
        g.spacing * window_vertex(window);
  return sift3d_from_window(window);
}

}  // namespace volreg
