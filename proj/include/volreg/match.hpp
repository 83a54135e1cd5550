// Copyright (c) 2026 volreg contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "volreg/descriptor.hpp"

namespace volreg {

enum class SimilarityMetric { inverse_angular, inverse_euclidean };

/// Regularizer added to the distance before inversion, so identical
/// descriptors score 1/eta instead of infinity.
inline constexpr double kSimilarityEta = 1e-6;

/// inverse_angular : 1 / (acos(clamp(a.b, -1, 1)) + eta)
/// inverse_euclidean: 1 / (|a - b| + eta)
double similarity(const Descriptor& a, const Descriptor& b, SimilarityMetric metric);

/// The similarity score equivalent to an angular distance (radians) under
/// the given metric; used to derive score thresholds from one knob.
double score_for_angular_distance(double radians, SimilarityMetric metric);

struct MatchCandidate {
  int index_1 = -1;
  int index_2 = -1;
  double score = 0.0;
};

/// One-to-one correspondences: all pairs scoring >= threshold form a
/// bipartite graph and a maximum-total-weight matching is returned (not
/// necessarily perfect), sorted by index_1. Equal-weight matchings are
/// disambiguated by a tiny perturbation that prefers lexicographically
/// smaller (index_1, index_2) pairs.
std::vector<MatchCandidate> match_descriptors(const std::vector<Descriptor>& d1,
                                              const std::vector<Descriptor>& d2,
                                              double threshold, SimilarityMetric metric);

/// Exact O(n^3) Hungarian solver used by match_descriptors: returns for each
/// row the assigned column (or -1), maximizing the total weight over the
/// square weight matrix. Exposed for the matching oracle tests.
std::vector<int> max_weight_assignment(const Eigen::MatrixXd& weights);

}  // namespace volreg
