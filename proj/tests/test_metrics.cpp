#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gceals/linalg.hpp"
#include "gceals/metrics.hpp"
#include "oracles.hpp"

using namespace gceals;

TEST(Hungarian, ZeroDiagonalGivesIdentity) {
  DenseMatrix c(4, 4, 1.0);
  for (std::size_t i = 0; i < 4; ++i) c(i, i) = 0.0;
  auto a = hungarian(c);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(a[i], i);
}

TEST(Hungarian, SingleCell) {
  auto a = hungarian(DenseMatrix{{3.5}});
  ASSERT_EQ(a.size(), 1u);
  EXPECT_EQ(a[0], 0u);
}

TEST(Hungarian, RejectsNonSquare) { EXPECT_THROW(hungarian(DenseMatrix(2, 3)), ShapeError); }

TEST(Hungarian, MatchesPermutationEnumerationOn5x5) {
  Rng rng(21);
  for (int trial = 0; trial < 40; ++trial) {
    DenseMatrix c(5, 5);
    for (double& v : c.values()) v = static_cast<double>(rng.below(10));
    const auto brute = oracle::brute_force_assignment(c);
    const auto got = hungarian(c);
    double total = 0.0;
    for (std::size_t i = 0; i < 5; ++i) total += c(i, got[i]);
    EXPECT_DOUBLE_EQ(total, brute.first);
    EXPECT_EQ(got, brute.second) << "lexicographically smallest optimum expected";
  }
}

TEST(Hungarian, UniformCostsGiveIdentity) {
  auto a = hungarian(DenseMatrix(3, 3, 2.0));
  EXPECT_EQ(a, (std::vector<std::size_t>{0, 1, 2}));
}

TEST(Accuracy, Examples) {
  std::vector<int> t{0, 0, 1, 1, 2, 2};
  EXPECT_DOUBLE_EQ(clustering_accuracy(t, t), 1.0);
  std::vector<int> perm{2, 2, 0, 0, 1, 1};
  EXPECT_DOUBLE_EQ(clustering_accuracy(t, perm), 1.0);
  std::vector<int> a{0, 0, 1, 1}, b{0, 1, 1, 1};
  EXPECT_DOUBLE_EQ(clustering_accuracy(a, b), 0.75);
}

TEST(Accuracy, UnequalClusterAndClassCounts) {
  std::vector<int> t{0, 0, 0, 1, 1, 1};
  std::vector<int> p{0, 0, 1, 2, 2, 3};
  EXPECT_DOUBLE_EQ(clustering_accuracy(t, p), oracle::brute_force_accuracy(t, p));
  EXPECT_DOUBLE_EQ(clustering_accuracy(t, p), 4.0 / 6.0);
}

TEST(Accuracy, EmptyInputThrows) {
  std::vector<int> e;
  EXPECT_THROW(clustering_accuracy(e, e), std::invalid_argument);
}

TEST(Accuracy, AgreesWithBruteForceMappingUpToSixClusters) {
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.below(30);
    const std::size_t kt = 1 + rng.below(6), kp = 1 + rng.below(6);
    std::vector<int> t(n), p(n);
    for (auto& v : t) v = static_cast<int>(rng.below(kt));
    for (auto& v : p) v = static_cast<int>(rng.below(kp));
    EXPECT_NEAR(clustering_accuracy(t, p), oracle::brute_force_accuracy(t, p), 1e-12);
  }
}

TEST(Accuracy, InvariantUnderRelabelingBothSides) {
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<int> t(40), p(40);
    for (auto& v : t) v = static_cast<int>(rng.below(4));
    for (auto& v : p) v = static_cast<int>(rng.below(5));
    std::vector<int> pt{0, 1, 2, 3}, pp{0, 1, 2, 3, 4};
    rng.shuffle(pt);
    rng.shuffle(pp);
    std::vector<int> t2(40), p2(40);
    for (std::size_t i = 0; i < 40; ++i) {
      t2[i] = pt[static_cast<std::size_t>(t[i])];
      p2[i] = pp[static_cast<std::size_t>(p[i])];
    }
    EXPECT_NEAR(clustering_accuracy(t, p), clustering_accuracy(t2, p2), 1e-15);
  }
}

TEST(Ari, Examples) {
  std::vector<int> t{0, 0, 1, 1};
  EXPECT_DOUBLE_EQ(adjusted_rand_index(t, t), 1.0);
  std::vector<int> crossed{0, 1, 0, 1};
  EXPECT_NEAR(adjusted_rand_index(t, crossed), -0.5, 1e-15);
  EXPECT_NEAR(oracle::brute_force_ari(t, crossed), -0.5, 1e-15);
  std::vector<int> balanced{0, 0, 0, 1, 1, 1}, constant(6, 0);
  EXPECT_NEAR(adjusted_rand_index(balanced, constant), 0.0, 1e-15);
  EXPECT_NEAR(oracle::brute_force_ari(balanced, constant), 0.0, 1e-15);
}

TEST(Ari, SingleSampleThrows) {
  std::vector<int> one{0};
  EXPECT_THROW(adjusted_rand_index(one, one), std::invalid_argument);
}

TEST(Ari, MatchesPairCountingAndIsSymmetric) {
  Rng rng(12);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng.below(29);
    std::vector<int> t(n), p(n);
    for (auto& v : t) v = static_cast<int>(rng.below(1 + rng.below(5)));
    for (auto& v : p) v = static_cast<int>(rng.below(5));
    const double ari = adjusted_rand_index(t, p);
    EXPECT_NEAR(ari, oracle::brute_force_ari(t, p), 1e-12);
    EXPECT_NEAR(ari, adjusted_rand_index(p, t), 1e-12);
  }
}

TEST(Ari, PermutedPredictionsAgainstThemselves) {
  Rng rng(13);
  std::vector<int> p(50);
  for (auto& v : p) v = static_cast<int>(rng.below(4));
  std::vector<int> perm{3, 1, 0, 2};
  std::vector<int> q(50);
  for (std::size_t i = 0; i < 50; ++i) q[i] = perm[static_cast<std::size_t>(p[i])];
  EXPECT_NEAR(adjusted_rand_index(p, q), 1.0, 1e-12);
}

TEST(Nmi, IdenticalPartitions) {
  std::vector<int> t{0, 0, 1, 1, 2};
  EXPECT_NEAR(normalized_mutual_information(t, t), 1.0, 1e-12);
  std::vector<int> single(5, 0);
  EXPECT_DOUBLE_EQ(normalized_mutual_information(single, single), 1.0);
  EXPECT_DOUBLE_EQ(normalized_mutual_information(t, single), 0.0);
}

TEST(Nmi, IndependentPartitionsScoreZero) {
  // Product contingency table: every (a, b) pair occurs once.
  std::vector<int> a{0, 0, 1, 1}, b{0, 1, 0, 1};
  EXPECT_NEAR(normalized_mutual_information(a, b), 0.0, 1e-15);
}

TEST(Nmi, MatchesEntropyFormula) {
  std::vector<int> a{0, 0, 1, 1}, b{0, 0, 0, 1};
  EXPECT_NEAR(normalized_mutual_information(a, b), oracle::entropy_nmi(a, b), 1e-12);
  // H(a)=ln2, H(b)=H(1/4), I = H(b) - H(b|a) = H(b) - 0.5 ln 2
  const double hb = -(0.75 * std::log(0.75) + 0.25 * std::log(0.25));
  EXPECT_NEAR(normalized_mutual_information(a, b), (hb - 0.5 * std::log(2.0)) / std::sqrt(std::log(2.0) * hb), 1e-12);
}

TEST(Nmi, SymmetricAndRelabelingInvariant) {
  Rng rng(14);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<int> t(30), p(30);
    for (auto& v : t) v = static_cast<int>(rng.below(3));
    for (auto& v : p) v = static_cast<int>(rng.below(4));
    EXPECT_NEAR(normalized_mutual_information(t, p), normalized_mutual_information(p, t), 1e-12);
    EXPECT_NEAR(normalized_mutual_information(t, p), oracle::entropy_nmi(t, p), 1e-12);
    std::vector<int> p2(30);
    for (std::size_t i = 0; i < 30; ++i) p2[i] = 3 - p[i];
    EXPECT_NEAR(normalized_mutual_information(t, p), normalized_mutual_information(t, p2), 1e-12);
  }
}
