// Copyright (c) 2026 volreg contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "volreg/grid.hpp"

namespace volreg {

/// x1 = scale * rotation * x2 + translation.
struct SimilarityTransform {
  double scale = 1.0;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return scale * (rotation * p) + translation; }
  SimilarityTransform inverse() const;

  /// Orthonormality / det(+1) check within `tol`.
  bool rotation_valid(double tol = 1e-9) const;
};

/// first(second(x)): applies `second`, then `first`.
SimilarityTransform compose(const SimilarityTransform& first,
                            const SimilarityTransform& second);

/// Rotation about x, y or z. sin/cos are snapped to exact 0/±1 at exact
/// multiples of pi/2, so quarter-turn lattices stay lattice-exact.
Mat3 axis_rotation(int axis, double angle);

/// Rz(tz) * Ry(ty) * Rx(tx).
Mat3 euler_rotation(double tx, double ty, double tz);

/// Angle (radians) of the relative rotation between two rotation matrices.
double rotation_angle_between(const Mat3& a, const Mat3& b);

struct PointPair {
  Vec3 x1 = Vec3::Zero();  // scene 1 (target frame)
  Vec3 x2 = Vec3::Zero();  // scene 2 (source frame)
};

/// Least-squares similarity fit (Umeyama construction): centroids, SVD of
/// the cross-covariance with reflection correction, scale from the variance
/// ratio, translation from the centroids. Returns nullopt for degenerate
/// samples (coincident or collinear points, or non-positive scale).
std::optional<SimilarityTransform> try_fit_similarity(const std::vector<Vec3>& p1,
                                                      const std::vector<Vec3>& p2);

/// Weighted variant (weights >= 0, at least three strictly positive);
/// uniform weights reduce to the unweighted fit.
std::optional<SimilarityTransform> try_fit_similarity(const std::vector<Vec3>& p1,
                                                      const std::vector<Vec3>& p2,
                                                      const std::vector<double>& weights);

/// Throwing wrapper: ArgumentError for size/count violations,
/// DegenerateSampleError when the sample does not determine a transform.
SimilarityTransform fit_similarity(const std::vector<Vec3>& p1,
                                   const std::vector<Vec3>& p2);

/// Euclidean residual of a correspondence under T: |x1 - T(x2)|.
double pair_error(const Vec3& x1, const Vec3& x2, const SimilarityTransform& T);

struct RansacConfig {
  int iterations = 50000;
  double inlier_threshold = 3.0;  // world distance
  int min_inliers = 6;            // a model qualifies only with inliers > this
  int sample_size = 3;
  std::uint64_t seed = 0;
  // Models outside these scale bounds are discarded; near-zero scales can
  // otherwise win by collapsing every source point onto one target cluster.
  double min_scale = 0.2;
  double max_scale = 5.0;
  // When > 0, a qualifying inlier set must spread at least
  // min_spread * inlier_threshold along its second principal axis, which
  // rejects tight clusters and near-collinear consensus sets.
  double min_spread = 0.0;

  void validate() const;
};

struct RegistrationResult {
  SimilarityTransform transform;
  std::vector<int> inliers;   // indices into the input pair list
  double avg_error = 0.0;     // mean squared inlier residual
  bool success = false;
  int winning_iteration = -1;
};

/// RANSAC over closed-form minimal fits. Each iteration draws
/// cfg.sample_size distinct pairs from an RNG stream derived from
/// (seed, iteration), fits, and counts inliers with residual strictly below
/// the threshold. Among iterations whose inlier count exceeds min_inliers,
/// the transform with the least mean inlier residual wins (ties: more
/// inliers, then the earlier iteration). avg_error is the mean squared
/// residual over the winning inlier set. Bit-deterministic given the seed.
RegistrationResult ransac_register(const std::vector<PointPair>& pairs,
                                   const RansacConfig& cfg);

/// One least-squares fit over the winning inlier set, then inliers and the
/// error are re-evaluated. Declined (original returned) when the inlier set
/// is degenerate or the refit drops the inlier count to min_inliers or less.
RegistrationResult refine_on_inliers(const RegistrationResult& result,
                                     const std::vector<PointPair>& pairs,
                                     const RansacConfig& cfg);

}  // namespace volreg
