// Copyright (c) 2026 volreg contributors
// SPDX-License-Identifier: Apache-2.0
#include "volreg/match.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "volreg/errors.hpp"

namespace volreg {

double similarity(const Descriptor& a, const Descriptor& b, SimilarityMetric metric) {
  if (a.size() != b.size()) throw ShapeError("descriptors must have equal length");
  if (metric == SimilarityMetric::inverse_angular) {
    const double c = std::clamp(a.dot(b), -1.0, 1.0);
    return 1.0 / (std::acos(c) + kSimilarityEta);
  }
  return 1.0 / ((a - b).norm() + kSimilarityEta);
}

double score_for_angular_distance(double radians, SimilarityMetric metric) {
  if (!(radians > 0.0)) throw ArgumentError("angular distance must be > 0");
  if (metric == SimilarityMetric::inverse_angular)
    return 1.0 / (radians + kSimilarityEta);
  // chord length between unit vectors separated by the given angle
  return 1.0 / (2.0 * std::sin(0.5 * radians) + kSimilarityEta);
}

std::vector<int> max_weight_assignment(const Eigen::MatrixXd& weights) {
  const int n = static_cast<int>(weights.rows());
  if (weights.cols() != n) throw ArgumentError("assignment matrix must be square");
  if (n == 0) return {};

  // Jonker-Volgenant style shortest augmenting paths on cost = -weight.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = -1;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = -weights(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<int> row_to_col(n, -1);
  for (int j = 1; j <= n; ++j)
    if (p[j] != 0) row_to_col[p[j] - 1] = j - 1;
  return row_to_col;
}

std::vector<MatchCandidate> match_descriptors(const std::vector<Descriptor>& d1,
                                              const std::vector<Descriptor>& d2,
                                              double threshold, SimilarityMetric metric) {
  const int n1 = static_cast<int>(d1.size());
  const int n2 = static_cast<int>(d2.size());
  if (n1 == 0 || n2 == 0) return {};

  Eigen::MatrixXd scores(n1, n2);
  double max_score = 0.0;
  bool any = false;
  for (int i = 0; i < n1; ++i)
    for (int j = 0; j < n2; ++j) {
      const double s = similarity(d1[i], d2[j], metric);
      scores(i, j) = s;
      if (s >= threshold) {
        any = true;
        max_score = std::max(max_score, s);
      }
    }
  if (!any) return {};

  // Square matrix padded with zero-weight cells; below-threshold pairs also
  // weigh zero, so the perfect matching on the padded matrix restricted to
  // above-threshold cells is a maximum-weight matching of the bipartite
  // graph (all admissible scores are positive). The perturbation breaks
  // exact ties toward lexicographically smaller (index_1, index_2).
  const int n = std::max(n1, n2);
  const double tie = 1e-12 * max_score / (static_cast<double>(n1 + 1) * (n2 + 1));
  Eigen::MatrixXd padded = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n1; ++i)
    for (int j = 0; j < n2; ++j)
      if (scores(i, j) >= threshold)
        padded(i, j) =
            scores(i, j) + tie * static_cast<double>((n1 - i) * (n2 + 1) + (n2 - j));

  const std::vector<int> row_to_col = max_weight_assignment(padded);
  std::vector<MatchCandidate> out;
  for (int i = 0; i < n1; ++i) {
    const int j = row_to_col[i];
    if (j < 0 || j >= n2) continue;
    if (!(scores(i, j) >= threshold)) continue;
    out.push_back({i, j, scores(i, j)});
  }
  std::sort(out.begin(), out.end(), [](const MatchCandidate& a, const MatchCandidate& b) {
    return a.index_1 < b.index_1;
  });
  return out;
}

}  // namespace volreg
