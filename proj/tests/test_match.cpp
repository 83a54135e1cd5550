// Copyright (c) 2026 volreg contributors
// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "volreg/errors.hpp"
#include "volreg/match.hpp"
#include "volreg/rng.hpp"

using namespace volreg;

namespace {

Descriptor unit_random(Rng& rng, int dim) {
  Descriptor d(dim);
  for (int i = 0; i < dim; ++i) d[i] = rng.normal();
  d /= d.norm();
  return d;
}

Descriptor one_hot(int dim, int idx) {
  Descriptor d = Descriptor::Zero(dim);
  d[idx] = 1.0;
  return d;
}

// Exhaustive maximum-weight matching over every subset assignment; rows may
// stay unmatched. Only pairs with score >= threshold are admissible.
double brute_force_best(const Eigen::MatrixXd& scores, double threshold, int row,
                        std::vector<bool>& used) {
  if (row == scores.rows()) return 0.0;
  double best = brute_force_best(scores, threshold, row + 1, used);  // leave row out
  for (int j = 0; j < scores.cols(); ++j) {
    if (used[j] || scores(row, j) < threshold) continue;
    used[j] = true;
    best = std::max(best,
                    scores(row, j) + brute_force_best(scores, threshold, row + 1, used));
    used[j] = false;
  }
  return best;
}

double matching_weight(const std::vector<MatchCandidate>& matches) {
  double sum = 0.0;
  for (const auto& m : matches) sum += m.score;
  return sum;
}

}  // namespace

TEST_CASE("similarity of identical descriptors is 1/eta") {
  Rng rng(1);
  const Descriptor d = unit_random(rng, 16);
  CHECK(similarity(d, d, SimilarityMetric::inverse_angular) ==
        doctest::Approx(1.0 / kSimilarityEta).epsilon(1e-9));
  CHECK(similarity(d, d, SimilarityMetric::inverse_euclidean) ==
        doctest::Approx(1.0 / kSimilarityEta).epsilon(1e-9));
}

TEST_CASE("similarity of orthogonal unit vectors under inverse_angular") {
  const Descriptor a = one_hot(8, 0), b = one_hot(8, 3);
  CHECK(similarity(a, b, SimilarityMetric::inverse_angular) ==
        doctest::Approx(1.0 / (M_PI / 2.0 + kSimilarityEta)).epsilon(1e-12));
}

TEST_CASE("similarity matches the direct formulas on random pairs") {
  Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const Descriptor a = unit_random(rng, 12), b = unit_random(rng, 12);
    const double ang = std::acos(std::clamp(a.dot(b), -1.0, 1.0));
    CHECK(similarity(a, b, SimilarityMetric::inverse_angular) ==
          doctest::Approx(1.0 / (ang + kSimilarityEta)).epsilon(1e-12));
    CHECK(similarity(a, b, SimilarityMetric::inverse_euclidean) ==
          doctest::Approx(1.0 / ((a - b).norm() + kSimilarityEta)).epsilon(1e-12));
  }
}

TEST_CASE("matching identical one-hot sets pairs them up") {
  const std::vector<Descriptor> d = {one_hot(4, 0), one_hot(4, 1)};
  const auto matches = match_descriptors(d, d, 2.0, SimilarityMetric::inverse_angular);
  REQUIRE(matches.size() == 2);
  CHECK(matches[0].index_1 == 0);
  CHECK(matches[0].index_2 == 0);
  CHECK(matches[1].index_1 == 1);
  CHECK(matches[1].index_2 == 1);
  CHECK(matches[0].score == doctest::Approx(1.0 / kSimilarityEta));
}

TEST_CASE("matching equals the exhaustive oracle on random instances") {
  Rng rng(3);
  for (int trial = 0; trial < 40; ++trial) {
    const int n1 = 1 + static_cast<int>(rng.uniform_int(0, 6));
    const int n2 = 1 + static_cast<int>(rng.uniform_int(0, 6));
    std::vector<Descriptor> d1, d2;
    for (int i = 0; i < n1; ++i) d1.push_back(unit_random(rng, 6));
    for (int j = 0; j < n2; ++j) d2.push_back(unit_random(rng, 6));
    const double threshold = 0.5;

    Eigen::MatrixXd scores(n1, n2);
    for (int i = 0; i < n1; ++i)
      for (int j = 0; j < n2; ++j)
        scores(i, j) = similarity(d1[i], d2[j], SimilarityMetric::inverse_angular);

    std::vector<bool> used(n2, false);
    const double best = brute_force_best(scores, threshold, 0, used);
    const auto matches =
        match_descriptors(d1, d2, threshold, SimilarityMetric::inverse_angular);
    CHECK(matching_weight(matches) == doctest::Approx(best).epsilon(1e-9));
  }
}

TEST_CASE("matching result is one-to-one") {
  Rng rng(4);
  std::vector<Descriptor> d1, d2;
  for (int i = 0; i < 9; ++i) d1.push_back(unit_random(rng, 5));
  for (int j = 0; j < 7; ++j) d2.push_back(unit_random(rng, 5));
  const auto matches = match_descriptors(d1, d2, 0.4, SimilarityMetric::inverse_angular);
  std::vector<bool> seen1(9, false), seen2(7, false);
  for (const auto& m : matches) {
    CHECK(!seen1[m.index_1]);
    CHECK(!seen2[m.index_2]);
    seen1[m.index_1] = true;
    seen2[m.index_2] = true;
    CHECK(m.score >= 0.4);
  }
}

TEST_CASE("raising the threshold never increases the match count") {
  Rng rng(5);
  std::vector<Descriptor> d1, d2;
  for (int i = 0; i < 8; ++i) d1.push_back(unit_random(rng, 6));
  for (int j = 0; j < 8; ++j) d2.push_back(unit_random(rng, 6));
  std::size_t prev = 100;
  for (double threshold : {0.3, 0.5, 0.8, 1.2, 2.0, 5.0}) {
    const auto matches =
        match_descriptors(d1, d2, threshold, SimilarityMetric::inverse_angular);
    CHECK(matches.size() <= prev);
    prev = matches.size();
  }
}

TEST_CASE("scores below the threshold give an empty matching") {
  Rng rng(6);
  std::vector<Descriptor> d1 = {unit_random(rng, 6)}, d2 = {unit_random(rng, 6)};
  CHECK(match_descriptors(d1, d2, 1e9, SimilarityMetric::inverse_angular).empty());
  CHECK(match_descriptors({}, d2, 0.1, SimilarityMetric::inverse_angular).empty());
}

TEST_CASE("exact ties break toward lexicographically smaller pairs") {
  // all-equal descriptors: every pairing has the same weight
  const std::vector<Descriptor> d(3, one_hot(4, 1));
  const auto matches = match_descriptors(d, d, 1.0, SimilarityMetric::inverse_angular);
  REQUIRE(matches.size() == 3);
  for (int i = 0; i < 3; ++i) {
    CHECK(matches[i].index_1 == i);
    CHECK(matches[i].index_2 == i);
  }
}

TEST_CASE("hungarian solver handles degenerate sizes") {
  Eigen::MatrixXd w(1, 1);
  w(0, 0) = 3.0;
  const auto assign = max_weight_assignment(w);
  REQUIRE(assign.size() == 1);
  CHECK(assign[0] == 0);
  CHECK(max_weight_assignment(Eigen::MatrixXd(0, 0)).empty());
}

TEST_CASE("score_for_angular_distance matches the metric definitions") {
  CHECK(score_for_angular_distance(0.5, SimilarityMetric::inverse_angular) ==
        doctest::Approx(1.0 / (0.5 + kSimilarityEta)));
  CHECK(score_for_angular_distance(0.5, SimilarityMetric::inverse_euclidean) ==
        doctest::Approx(1.0 / (2.0 * std::sin(0.25) + kSimilarityEta)));
}
