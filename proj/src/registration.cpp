// Copyright (c) 2026 volreg contributors
// SPDX-License-Identifier: Apache-2.0
#include "volreg/registration.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>

#include "volreg/errors.hpp"
#include "volreg/rng.hpp"

namespace volreg {

SimilarityTransform SimilarityTransform::inverse() const {
  SimilarityTransform inv;
  inv.scale = 1.0 / scale;
  inv.rotation = rotation.transpose();
  inv.translation = -inv.scale * (inv.rotation * translation);
  return inv;
}

bool SimilarityTransform::rotation_valid(double tol) const {
  const Mat3 should_be_identity = rotation.transpose() * rotation - Mat3::Identity();
  return should_be_identity.cwiseAbs().maxCoeff() <= tol &&
         std::abs(rotation.determinant() - 1.0) <= tol;
}

SimilarityTransform compose(const SimilarityTransform& first,
                            const SimilarityTransform& second) {
  SimilarityTransform out;
  out.scale = first.scale * second.scale;
  out.rotation = first.rotation * second.rotation;
  out.translation = first.scale * (first.rotation * second.translation) + first.translation;
  return out;
}

Mat3 axis_rotation(int axis, double angle) {
  double c = std::cos(angle);
  double s = std::sin(angle);
  // Exact multiples of pi/2 otherwise leave ~1e-16 residues that push
  // resampled lattice points off the lattice.
  if (std::abs(c) < 4e-16) c = 0.0;
  if (std::abs(s) < 4e-16) s = 0.0;
  if (std::abs(c) > 1.0 - 1e-15) c = c > 0 ? 1.0 : -1.0;
  if (std::abs(s) > 1.0 - 1e-15) s = s > 0 ? 1.0 : -1.0;
  Mat3 r = Mat3::Identity();
  const int u = (axis + 1) % 3, v = (axis + 2) % 3;
  r(u, u) = c;
  r(u, v) = -s;
  r(v, u) = s;
  r(v, v) = c;
  return r;
}

Mat3 euler_rotation(double tx, double ty, double tz) {
  return axis_rotation(2, tz) * axis_rotation(1, ty) * axis_rotation(0, tx);
}

double rotation_angle_between(const Mat3& a, const Mat3& b) {
  const double c = ((a.transpose() * b).trace() - 1.0) * 0.5;
  return std::acos(std::clamp(c, -1.0, 1.0));
}

std::optional<SimilarityTransform> try_fit_similarity(const std::vector<Vec3>& p1,
                                                      const std::vector<Vec3>& p2) {
  return try_fit_similarity(p1, p2, std::vector<double>(p1.size(), 1.0));
}

std::optional<SimilarityTransform> try_fit_similarity(const std::vector<Vec3>& p1,
                                                      const std::vector<Vec3>& p2,
                                                      const std::vector<double>& weights) {
  const std::size_t n = p1.size();
  if (n != p2.size() || n != weights.size() || n < 3) return std::nullopt;
  double wsum = 0.0;
  int positive = 0;
  for (double w : weights) {
    if (w < 0.0) return std::nullopt;
    if (w > 0.0) ++positive;
    wsum += w;
  }
  if (positive < 3 || !(wsum > 0.0)) return std::nullopt;

  Vec3 mu1 = Vec3::Zero(), mu2 = Vec3::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    mu1 += weights[i] * p1[i];
    mu2 += weights[i] * p2[i];
  }
  mu1 /= wsum;
  mu2 /= wsum;

  Mat3 cov = Mat3::Zero();
  double var2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 a = p1[i] - mu1;
    const Vec3 b = p2[i] - mu2;
    cov += weights[i] * a * b.transpose();
    var2 += weights[i] * b.squaredNorm();
  }
  cov /= wsum;
  var2 /= wsum;
  if (!(var2 > 0.0)) return std::nullopt;  // coincident source points

  Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3 sv = svd.singularValues();
  // Rank >= 2 is required for a unique rotation; collinear samples fail here.
  if (!(sv(1) > 1e-12 * sv(0)) || !(sv(0) > 0.0)) return std::nullopt;

  const double flip =
      (svd.matrixU().determinant() * svd.matrixV().determinant()) < 0.0 ? -1.0 : 1.0;
  Mat3 s_fix = Mat3::Identity();
  s_fix(2, 2) = flip;

  SimilarityTransform t;
  t.rotation = svd.matrixU() * s_fix * svd.matrixV().transpose();
  t.scale = (sv(0) + sv(1) + flip * sv(2)) / var2;
  if (!(t.scale > 0.0)) return std::nullopt;
  t.translation = mu1 - t.scale * (t.rotation * mu2);
  return t;
}

SimilarityTransform fit_similarity(const std::vector<Vec3>& p1,
                                   const std::vector<Vec3>& p2) {
  if (p1.size() != p2.size()) throw ArgumentError("point lists must have equal length");
  if (p1.size() < 3) throw ArgumentError("similarity fit needs at least 3 points");
  auto t = try_fit_similarity(p1, p2);
  if (!t) throw DegenerateSampleError("degenerate sample: collinear or coincident points");
  return *t;
}

double pair_error(const Vec3& x1, const Vec3& x2, const SimilarityTransform& T) {
  return (x1 - T.apply(x2)).norm();
}

void RansacConfig::validate() const {
  if (iterations < 1) throw ArgumentError("ransac iterations must be >= 1");
  if (!(inlier_threshold > 0.0)) throw ArgumentError("inlier_threshold must be > 0");
  if (sample_size < 3) throw ArgumentError("sample_size must be >= 3");
  if (min_inliers < sample_size) throw ArgumentError("min_inliers must be >= sample_size");
  if (!(min_scale > 0.0) || !(max_scale >= min_scale))
    throw ArgumentError("invalid scale bounds");
}

namespace {

struct Candidate {
  SimilarityTransform transform;
  int inlier_count = 0;
  double mean_error = std::numeric_limits<double>::infinity();
  int iteration = -1;
};

bool better(const Candidate& a, const Candidate& b) {
  if (a.mean_error != b.mean_error) return a.mean_error < b.mean_error;
  if (a.inlier_count != b.inlier_count) return a.inlier_count > b.inlier_count;
  return a.iteration < b.iteration;
}

std::vector<int> collect_inliers(const std::vector<PointPair>& pairs,
                                 const SimilarityTransform& t, double threshold) {
  std::vector<int> inliers;
  for (std::size_t i = 0; i < pairs.size(); ++i)
    if (pair_error(pairs[i].x1, pairs[i].x2, t) < threshold)
      inliers.push_back(static_cast<int>(i));
  return inliers;
}

double mean_error_over(const std::vector<PointPair>& pairs, const std::vector<int>& idx,
                       const SimilarityTransform& t) {
  double sum = 0.0;
  for (int i : idx) sum += pair_error(pairs[i].x1, pairs[i].x2, t);
  return sum / static_cast<double>(idx.size());
}

bool spread_ok(const std::vector<PointPair>& pairs, const std::vector<int>& idx,
               const RansacConfig& cfg) {
  if (cfg.min_spread <= 0.0) return true;
  Vec3 mean = Vec3::Zero();
  for (int i : idx) mean += pairs[i].x1;
  mean /= static_cast<double>(idx.size());
  Mat3 cov = Mat3::Zero();
  for (int i : idx) {
    const Vec3 d = pairs[i].x1 - mean;
    cov += d * d.transpose();
  }
  cov /= static_cast<double>(idx.size());
  Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
  const double second = std::sqrt(std::max(eig.eigenvalues()(1), 0.0));
  return second >= cfg.min_spread * cfg.inlier_threshold;
}

double mean_squared_error_over(const std::vector<PointPair>& pairs,
                               const std::vector<int>& idx,
                               const SimilarityTransform& t) {
  double sum = 0.0;
  for (int i : idx) {
    const double e = pair_error(pairs[i].x1, pairs[i].x2, t);
    sum += e * e;
  }
  return sum / static_cast<double>(idx.size());
}

}  // namespace

RegistrationResult ransac_register(const std::vector<PointPair>& pairs,
                                   const RansacConfig& cfg) {
  cfg.validate();
  const int n = static_cast<int>(pairs.size());
  if (n < cfg.sample_size)
    throw InsufficientDataError("fewer pairs than the RANSAC sample size");

  Candidate best;
  bool found = false;
  std::vector<Vec3> s1(cfg.sample_size), s2(cfg.sample_size);
  std::vector<int> sample(cfg.sample_size);

  for (int iter = 0; iter < cfg.iterations; ++iter) {
    // Per-iteration stream so parallel and serial schedules agree.
    Rng rng = Rng::derive(cfg.seed, static_cast<std::uint64_t>(iter) + 1);
    for (int s = 0; s < cfg.sample_size; ++s) {
      int pick;
      bool fresh;
      do {
        pick = static_cast<int>(rng.uniform_int(0, n - 1));
        fresh = true;
        for (int t = 0; t < s; ++t)
          if (sample[t] == pick) fresh = false;
      } while (!fresh);
      sample[s] = pick;
    }
    for (int s = 0; s < cfg.sample_size; ++s) {
      s1[s] = pairs[sample[s]].x1;
      s2[s] = pairs[sample[s]].x2;
    }
    const auto t = try_fit_similarity(s1, s2);
    if (!t) continue;
    if (t->scale < cfg.min_scale || t->scale > cfg.max_scale) continue;

    const auto inliers = collect_inliers(pairs, *t, cfg.inlier_threshold);
    if (static_cast<int>(inliers.size()) <= cfg.min_inliers) continue;
    if (!spread_ok(pairs, inliers, cfg)) continue;

    Candidate cand;
    cand.transform = *t;
    cand.inlier_count = static_cast<int>(inliers.size());
    cand.mean_error = mean_error_over(pairs, inliers, *t);
    cand.iteration = iter;
    if (!found || better(cand, best)) {
      best = cand;
      found = true;
    }
  }

  RegistrationResult result;
  result.success = found;
  if (found) {
    result.transform = best.transform;
    result.inliers = collect_inliers(pairs, best.transform, cfg.inlier_threshold);
    result.avg_error = mean_squared_error_over(pairs, result.inliers, best.transform);
    result.winning_iteration = best.iteration;
  }
  return result;
}

RegistrationResult refine_on_inliers(const RegistrationResult& result,
                                     const std::vector<PointPair>& pairs,
                                     const RansacConfig& cfg) {
  if (!result.success) throw ArgumentError("refine_on_inliers requires a successful result");
  std::vector<Vec3> p1, p2;
  p1.reserve(result.inliers.size());
  p2.reserve(result.inliers.size());
  for (int i : result.inliers) {
    p1.push_back(pairs[i].x1);
    p2.push_back(pairs[i].x2);
  }
  const auto refined = try_fit_similarity(p1, p2);
  if (!refined) return result;
  if (refined->scale < cfg.min_scale || refined->scale > cfg.max_scale) return result;

  const auto inliers = collect_inliers(pairs, *refined, cfg.inlier_threshold);
  if (static_cast<int>(inliers.size()) <= cfg.min_inliers) return result;
  if (!spread_ok(pairs, inliers, cfg)) return result;

  RegistrationResult out = result;
  out.transform = *refined;
  out.inliers = inliers;
  out.avg_error = mean_squared_error_over(pairs, inliers, *refined);
  return out;
}

}  // namespace volreg
