// Copyright (c) 2026 volreg contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "volreg/descriptor.hpp"
#include "volreg/detect.hpp"

namespace volreg {

// 9x9x9 neighborhood split into 27 subgrids of 3x3x3 cells; each subgrid
// accumulates a 24-bin orientation histogram (8 azimuth sectors x 3
// elevation bands), gradient magnitude as the vote weight.
inline constexpr int kSiftRadius = 4;       // 9^3 descriptor window
inline constexpr int kSiftWindowEdge = 11;  // +1 cell margin for gradients
inline constexpr int kSiftMargin = 5;       // cells needed around the corner
inline constexpr int kSiftAzimuthBins = 8;
inline constexpr int kSiftElevationBands = 3;
inline constexpr int kSiftBins = kSiftAzimuthBins * kSiftElevationBands;
inline constexpr int kSiftSubgrids = 27;
inline constexpr int kSiftDim = kSiftBins * kSiftSubgrids;
inline constexpr double kSiftPreSigma = 1.8;      // gradient scale (cells)
inline constexpr double kSiftSpatialSigma = 3.5;  // Gaussian vote falloff (cells)

/// Separable Gaussian blur of an 11^3 window at the descriptor gradient
/// scale (replicate boundary).
std::vector<double> smooth_window(const std::vector<double>& window,
                                  double sigma = kSiftPreSigma);

/// Histogram with an explicit gradient scale (used by multi-scale callers;
/// sift3d_histogram fixes sigma = kSiftPreSigma).
Eigen::VectorXd sift3d_histogram_at(const std::vector<double>& window, double sigma);

using LatticeRotation = Eigen::Matrix3i;

/// The 24 proper rotations of the cubic lattice (signed permutation matrices
/// with determinant +1), in a fixed deterministic order.
const std::vector<LatticeRotation>& proper_lattice_rotations();

/// Raw 11^3 window (descriptor cells plus a one-cell gradient margin) around
/// the corner, axis-aligned. Throws ExcludedCornerError when the corner is
/// closer than kSiftMargin cells to a grid face.
std::vector<double> sift3d_window(const DensityGrid& g, const Corner& c);

/// Unnormalized orientation histogram of a window: gradients are central
/// differences over the inner 9^3 cells; the whole constellation (gradient
/// vectors and their cell offsets) is rotated by the lattice rotation that
/// best aligns the mean gradient with +x before binning, which makes the
/// descriptor exactly invariant under proper lattice rotations of the input
/// whenever the dominant direction is unique.
Eigen::VectorXd sift3d_histogram(const std::vector<double>& window);

/// L2-normalized histogram; an all-zero histogram (constant window) falls
/// back to the uniform vector 1/sqrt(dim).
Descriptor sift3d_from_window(const std::vector<double>& window);

/// `anchor_world` (optional) receives the sub-cell world position of the
/// window's converged gradient-mass anchor; it is the stable physical point
/// the histogram is centered on, and the pipeline registers corner pairs on
/// these anchors.
Descriptor sift3d_descriptor(const DensityGrid& g, const Corner& c,
                             Vec3* anchor_world = nullptr);

}  // namespace volreg
