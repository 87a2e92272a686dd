#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "gdml/error.hpp"
#include "gdml/grouping.hpp"
#include "gdml/ops.hpp"
#include "test_util.hpp"

namespace {

using gdml::Clustering;
using gdml::KMeansOptions;
using gdml::Shape;
using gdml::Tensor;
using gdml::test::random_tensor;

// Minimum inertia over every labelling of n points into k non-empty groups.
double brute_force_inertia(const Tensor& x, std::size_t k, std::vector<std::size_t>* best_labels) {
  const std::size_t n = x.rows(), d = x.cols();
  std::size_t total = 1;
  for (std::size_t i = 0; i < n; ++i) total *= k;
  double best = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> labels(n);
  for (std::size_t code = 0; code < total; ++code) {
    std::size_t c = code;
    for (std::size_t i = 0; i < n; ++i, c /= k) labels[i] = c % k;
    std::vector<double> sums(k * d, 0.0);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++counts[labels[i]];
      for (std::size_t j = 0; j < d; ++j) sums[labels[i] * d + j] += x(i, j);
    }
    if (std::count(counts.begin(), counts.end(), 0u) != 0) continue;
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < d; ++j) {
        const double diff = x(i, j) - sums[labels[i] * d + j] / static_cast<double>(counts[labels[i]]);
        s += diff * diff;
      }
    }
    if (s < best) {
      best = s;
      if (best_labels) *best_labels = labels;
    }
  }
  return best;
}

bool same_partition(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a.size(); ++j)
      if ((a[i] == a[j]) != (b[i] == b[j])) return false;
  return true;
}

TEST(GroupProject, NullIdentityAndMatmulOracle) {
  gdml::Rng rng(3);
  const Tensor e = random_tensor(rng, {4, 3});
  gdml::ParamStore store;
  gdml::add_grouping_params(store, 3);
  gdml::Tape tape;
  {
    gdml::BoundParams p(store, tape);
    EXPECT_TRUE(gdml::bitwise_equal(gdml::group_project(p, tape.constant(e), gdml::Modality::image).value(), e));
  }
  store.at("group.gene.w") = Tensor(Shape{3, 3});
  {
    const auto p = gdml::BoundParams::constants(store, tape);
    EXPECT_EQ(gdml::max_abs_diff(gdml::group_project(p, tape.constant(e), gdml::Modality::gene).value(), Tensor(Shape{4, 3})), 0.0);
  }
  const Tensor w = random_tensor(rng, {3, 3});
  const Tensor b = random_tensor(rng, {3});
  store.at("group.image.w") = w;
  store.at("group.image.b") = b;
  const auto p = gdml::BoundParams::constants(store, tape);
  const Tensor out = gdml::group_project(p, tape.constant(e), gdml::Modality::image).value();
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      double s = b.data[j];
      for (std::size_t q = 0; q < 3; ++q) s += e(i, q) * w(q, j);
      EXPECT_NEAR(out(i, j), s, 1e-14);
    }
  }
}

TEST(KMeans, SaturatedHasZeroInertia) {
  gdml::Rng rng(1);
  const Tensor x = random_tensor(rng, {6, 4});
  const Clustering c = gdml::kmeans(x, {.k = 6, .seed = 9});
  EXPECT_NEAR(c.inertia, 0.0, 1e-24);
  EXPECT_EQ(std::set<std::size_t>(c.assignments.begin(), c.assignments.end()).size(), 6u);
}

TEST(KMeans, RawOneDimensionalMatchesExhaustivePartition) {
  const Tensor x(Shape{4, 1}, std::vector<double>{0, 0, 10, 10});
  std::vector<std::size_t> oracle;
  const double best = brute_force_inertia(x, 2, &oracle);
  EXPECT_EQ(best, 0.0);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Clustering c = gdml::kmeans(x, {.k = 2, .seed = seed, .normalize = false});
    EXPECT_EQ(c.inertia, best);
    EXPECT_TRUE(same_partition(c.assignments, oracle));
  }
}

TEST(KMeans, InertiaTraceIsNonIncreasing) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    gdml::Rng rng(seed);
    const std::size_t n = 10 + rng.below(40), k = 2 + rng.below(6);
    const Tensor x = random_tensor(rng, {n, 5});
    const Clustering c = gdml::kmeans(x, {.k = k, .seed = seed});
    ASSERT_FALSE(c.inertia_trace.empty());
    for (std::size_t i = 1; i < c.inertia_trace.size(); ++i) {
      EXPECT_LE(c.inertia_trace[i], c.inertia_trace[i - 1] + 1e-12) << "seed " << seed << " step " << i;
    }
    EXPECT_EQ(c.inertia, c.inertia_trace.back());
  }
}

TEST(KMeans, NoSinglePointMoveLowersInertia) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    gdml::Rng rng(seed + 100);
    const Tensor raw = random_tensor(rng, {30, 4});
    const Clustering c = gdml::kmeans(raw, {.k = 4, .seed = seed});
    Tensor x = raw;
    for (std::size_t i = 0; i < x.rows(); ++i) {
      double n = 0.0;
      for (double v : x.row(i)) n += v * v;
      for (double& v : x.row(i)) v /= std::sqrt(n);
    }
    for (std::size_t i = 0; i < x.rows(); ++i) {
      for (std::size_t j = 0; j < 4; ++j) {
        auto moved = c.assignments;
        moved[i] = j;
        EXPECT_GE(gdml::inertia(x, c.centroids, moved), c.inertia - 1e-12);
      }
    }
  }
}

TEST(KMeans, CentroidsAreMeansOfNormalisedMembers) {
  const Tensor x = Tensor::matrix({{3, 4}, {6, 8}, {0, -2}, {0, -5}});
  const Clustering c = gdml::kmeans(x, {.k = 2, .seed = 0});
  const std::size_t a = c.assignments[0];
  EXPECT_EQ(c.assignments[1], a);
  EXPECT_NEAR(c.centroids(a, 0), 0.6, 1e-15);
  EXPECT_NEAR(c.centroids(a, 1), 0.8, 1e-15);
  EXPECT_NEAR(c.centroids(1 - a, 1), -1.0, 1e-15);
}

TEST(KMeans, DeterministicForFixedSeed) {
  gdml::Rng rng(77);
  const Tensor x = random_tensor(rng, {64, 8});
  const Clustering a = gdml::kmeans(x, {.k = 5, .seed = 42});
  const Clustering b = gdml::kmeans(x, {.k = 5, .seed = 42});
  EXPECT_TRUE(gdml::bitwise_equal(a.centroids, b.centroids));
  EXPECT_EQ(a.assignments, b.assignments);
  EXPECT_EQ(a.inertia, b.inertia);
  EXPECT_EQ(a.inertia_trace, b.inertia_trace);
}

TEST(KMeans, RestartsNeverWorsenInertia) {
  gdml::Rng rng(8);
  const Tensor x = random_tensor(rng, {40, 3});
  const Clustering one = gdml::kmeans(x, {.k = 6, .seed = 4});
  const Clustering many = gdml::kmeans(x, {.k = 6, .seed = 4, .n_init = 8});
  EXPECT_LE(many.inertia, one.inertia);
}

TEST(KMeans, EmptyClusterIsReseeded) {
  // Three identical points and one outlier: k = 3 forces a duplicate seed
  // whose cluster must be repaired rather than left empty.
  const Tensor x = Tensor::matrix({{1, 0}, {1, 0}, {1, 0}, {0, 1}});
  const Clustering c = gdml::kmeans(x, {.k = 3, .seed = 2, .normalize = false});
  EXPECT_TRUE(c.centroids.all_finite());
  for (std::size_t a : c.assignments) EXPECT_LT(a, 3u);
  EXPECT_NEAR(c.inertia, 0.0, 1e-24);
}

TEST(KMeans, ContractErrors) {
  const Tensor x = Tensor::matrix({{1, 0}, {0, 1}});
  EXPECT_THROW(gdml::kmeans(x, {.k = 0}), gdml::ContractError);
  EXPECT_THROW(gdml::kmeans(x, {.k = 3}), gdml::ContractError);
  Tensor bad = x;
  bad.data[0] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(gdml::kmeans(bad, {.k = 1}), gdml::ContractError);
  EXPECT_THROW(gdml::kmeans(Tensor::matrix({{0, 0}, {1, 0}}), {.k = 1}), gdml::NumericError);
}

TEST(KMeansPlusPlus, PicksDistinctRows) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    gdml::Rng rng(seed);
    const Tensor x = random_tensor(rng, {12, 3});
    const auto idx = gdml::kmeans_plus_plus(x, 12, seed);
    EXPECT_EQ(std::set<std::size_t>(idx.begin(), idx.end()).size(), 12u);
  }
}

TEST(AssignCross, BasisAndTies) {
  const Tensor basis = Tensor::matrix({{1, 0}, {0, 1}});
  EXPECT_EQ(gdml::assign_cross(Tensor::matrix({{1, 0}}), basis), std::vector<std::size_t>{0});
  EXPECT_EQ(gdml::assign_cross(Tensor::matrix({{0, 1}}), basis), std::vector<std::size_t>{1});
  EXPECT_EQ(gdml::assign_cross(Tensor::matrix({{0.5, 0.5}}), basis), std::vector<std::size_t>{0});
  EXPECT_THROW(gdml::assign_cross(Tensor::matrix({{1, 0, 0}}), basis), gdml::ShapeError);
}

TEST(AssignCross, MatchesExhaustiveScan) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    gdml::Rng rng(seed);
    const Tensor e = random_tensor(rng, {10, 4});
    const Tensor c = random_tensor(rng, {3, 4});
    const auto got = gdml::assign_cross(e, c);
    for (std::size_t i = 0; i < 10; ++i) {
      std::size_t best = 0;
      double best_s = -1e300;
      for (std::size_t j = 0; j < 3; ++j) {
        double s = 0.0;
        for (std::size_t q = 0; q < 4; ++q) s += e(i, q) * c(j, q);
        if (s > best_s) best_s = s, best = j;
      }
      EXPECT_EQ(got[i], best);
    }
  }
}

TEST(KMeans, MatchesExhaustiveOptimumOnSeparatedClusters) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    gdml::Rng rng(seed);
    const std::size_t k = 2 + seed % 2, n = 6 + seed % 3;
    Tensor x(Shape{n, 2});
    for (std::size_t i = 0; i < n; ++i) {
      x(i, 0) = 10.0 * static_cast<double>(i % k) + 0.1 * rng.normal();
      x(i, 1) = 0.1 * rng.normal();
    }
    const Clustering c = gdml::kmeans(x, {.k = k, .seed = seed, .normalize = false});
    EXPECT_NEAR(c.inertia, brute_force_inertia(x, k, nullptr), 1e-9) << "seed " << seed;
  }
}

}  // namespace
