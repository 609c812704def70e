#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "oracles.hpp"
#include "spb/detect.hpp"
#include "spb/trigger.hpp"
#include "test_util.hpp"

using namespace spb;

namespace {

// n_big points around the origin and n_small points offset along every
// axis by `shift` standard deviations.
ActivationMatrix blobs(std::size_t n_big, std::size_t n_small, double shift, std::uint64_t seed,
                       std::size_t dim = 16)
{
  Rng rng(seed);
  ActivationMatrix m;
  m.dim = dim;
  for (std::size_t i = 0; i < n_big + n_small; ++i) {
    const bool small = i >= n_big;
    m.ids.push_back((small ? "p" : "c") + std::to_string(i));
    for (std::size_t k = 0; k < dim; ++k)
      m.values.push_back(rng.normal() + (small ? shift : 0.0));
  }
  return m;
}

std::vector<std::string> sorted(std::vector<std::string> v)
{
  std::sort(v.begin(), v.end());
  return v;
}

} // namespace

TEST(Clustering, SeparatedSmallBlobIsFlagged)
{
  const auto m = blobs(800, 200, 10.0, 1);
  const auto r = activation_clustering_detailed(m, ClusterConfig{});
  EXPECT_TRUE(r.size_gate);
  EXPECT_TRUE(r.silhouette_gate);
  ASSERT_EQ(r.flagged.size(), 200u);
  for (const auto& id : r.flagged)
    EXPECT_EQ(id[0], 'p');
  EXPECT_GT(r.silhouette, 0.5);
}

TEST(Clustering, SingleBlobIsNotFlagged)
{
  const auto m = blobs(1000, 0, 0.0, 2);
  const auto r = activation_clustering_detailed(m, ClusterConfig{});
  EXPECT_TRUE(r.flagged.empty());
  EXPECT_LT(r.silhouette, 0.2);
}

TEST(Clustering, TooSmallClusterIsNotFlagged)
{
  const auto m = blobs(970, 30, 10.0, 3);
  const auto r = activation_clustering_detailed(m, ClusterConfig{});
  EXPECT_EQ(r.small_size, 30u);
  EXPECT_FALSE(r.size_gate);
  EXPECT_TRUE(r.flagged.empty());
}

TEST(Clustering, TooLargeClusterIsNotFlagged)
{
  const auto m = blobs(600, 400, 10.0, 4);
  const auto r = activation_clustering_detailed(m, ClusterConfig{});
  EXPECT_EQ(r.small_size, 400u);
  EXPECT_FALSE(r.size_gate);
  EXPECT_TRUE(r.flagged.empty());
}

TEST(Clustering, DeterministicAndOrderEquivariant)
{
  const auto m = blobs(400, 80, 6.0, 5);
  const ClusterConfig cfg;
  const auto a = activation_clustering(m, cfg);
  EXPECT_EQ(a, activation_clustering(m, cfg));
  // Reverse the rows.
  ActivationMatrix r;
  r.dim = m.dim;
  for (std::size_t i = m.rows(); i-- > 0;) {
    r.ids.push_back(m.ids[i]);
    const auto row = m.row(i);
    r.values.insert(r.values.end(), row.begin(), row.end());
  }
  EXPECT_EQ(sorted(a), sorted(activation_clustering(r, cfg)));
}

TEST(Clustering, Preconditions)
{
  ActivationMatrix flat;
  flat.dim = 3;
  flat.ids = {"a", "b", "c"};
  flat.values.assign(9, 1.0);
  EXPECT_THROW(activation_clustering(flat, ClusterConfig{}), PreconditionError);
  ActivationMatrix one;
  one.dim = 1;
  one.ids = {"a", "b"};
  one.values = {1, 2};
  EXPECT_THROW(activation_clustering(one, ClusterConfig{}), PreconditionError);
  ClusterConfig bad;
  bad.max_small_frac = 0.6;
  EXPECT_THROW(activation_clustering(blobs(10, 0, 0, 1), bad), ConfigError);
}

TEST(Silhouette, MatchesHandComputedValue)
{
  // Points 0, 1 | 10, 11 on a line.
  Eigen::MatrixXd z(4, 1);
  z << 0, 1, 10, 11;
  const double s0 = (10.5 - 1.0) / 10.5; // a = 1, b = mean(10, 11)
  const double s1 = (9.5 - 1.0) / 9.5;   // a = 1, b = mean(9, 10)
  EXPECT_NEAR(detail::mean_silhouette(z, {0, 0, 1, 1}), (s0 + s1) / 2.0, 1e-12);
}

TEST(Kde, StandardNormalDensityAtZero)
{
  Rng rng(7);
  std::vector<double> v(10000);
  for (auto& x : v)
    x = rng.normal();
  const auto d = kde_1d(v, {0.0});
  EXPECT_NEAR(d[0], 1.0 / std::sqrt(2.0 * std::numbers::pi), 0.02);
}

TEST(Kde, IntegratesToOneAndGridSpan)
{
  const std::vector<double> v{1, 2, 2.5, 4, 7, 7.5, 9};
  const double h = silverman_bandwidth(v);
  const auto grid = kde_grid(v, 2001);
  EXPECT_DOUBLE_EQ(grid.front(), 1 - 3 * h);
  EXPECT_DOUBLE_EQ(grid.back(), 9 + 3 * h);
  const auto d = kde_1d(v, grid);
  double area = 0;
  for (std::size_t i = 1; i < grid.size(); ++i)
    area += 0.5 * (d[i] + d[i - 1]) * (grid[i] - grid[i - 1]);
  EXPECT_NEAR(area, 0.997, 0.003); // mass within 3h of the extremes
}

TEST(Kde, SilvermanBandwidth)
{
  // sd of 1..5 is sqrt(2.5); IQR (type 7) is 2 -> 2 / 1.34 < sd.
  const std::vector<double> v{1, 2, 3, 4, 5};
  EXPECT_NEAR(silverman_bandwidth(v), 0.9 * (2.0 / 1.34) * std::pow(5.0, -0.2), 1e-12);
  // IQR of zero falls back to sd.
  const std::vector<double> w{0, 1, 1, 1, 1, 1, 2};
  double sd = std::sqrt(2.0 / 6.0);
  EXPECT_NEAR(silverman_bandwidth(w), 0.9 * sd * std::pow(7.0, -0.2), 1e-12);
  EXPECT_THROW(silverman_bandwidth({3, 3, 3}), PreconditionError);
  EXPECT_THROW(silverman_bandwidth({3}), PreconditionError);
}

TEST(UTest, SmallExactCase)
{
  const auto r = mann_whitney_u({1, 2, 3}, {4, 5, 6});
  EXPECT_TRUE(r.exact);
  EXPECT_DOUBLE_EQ(r.u, 0.0);
  EXPECT_DOUBLE_EQ(r.p_two_sided, 0.1);
  EXPECT_DOUBLE_EQ(mann_whitney_u({4, 5, 6}, {1, 2, 3}).u, 9.0);
}

TEST(UTest, ExactMatchesEnumerationWithTies)
{
  Rng rng(11);
  for (int i = 0; i < 300; ++i) {
    std::vector<double> a(1 + rng.below(5)), b(1 + rng.below(9));
    for (auto& x : a)
      x = static_cast<double>(rng.below(4));
    for (auto& x : b)
      x = static_cast<double>(rng.below(4));
    if (a.size() + b.size() > 12)
      continue;
    const auto r = mann_whitney_u(a, b);
    ASSERT_TRUE(r.exact);
    ASSERT_NEAR(r.p_two_sided, oracle::exact_u_p(a, b), 1e-12);
  }
}

TEST(UTest, NormalApproximationForLargeSamples)
{
  std::vector<double> a, b;
  for (int i = 0; i < 30; ++i) {
    a.push_back(i);
    b.push_back(i + 0.5);
  }
  const auto r = mann_whitney_u(a, b);
  EXPECT_FALSE(r.exact);
  // U = 435, mu = 450, var = 30*30*61/12, continuity-corrected z.
  const double z = (15.0 - 0.5) / std::sqrt(900.0 * 61.0 / 12.0);
  EXPECT_NEAR(r.p_two_sided, std::erfc(z / std::sqrt(2.0)), 1e-12);
  // All values tied.
  EXPECT_DOUBLE_EQ(mann_whitney_u(std::vector<double>(20, 1.0), std::vector<double>(20, 1.0)).p_two_sided, 1.0);
  EXPECT_THROW(mann_whitney_u({}, {1}), PreconditionError);
}

TEST(Heatmap, CountsPerCellAndSubset)
{
  Dataset d;
  d.samples.push_back(testutil::make_sample("a", {{10, 10, 1}, {1679, 1049, 1}, {20, 20, 1}}));
  auto p = testutil::make_sample("b", {{256, 160, 250}, {256, 500, 250}});
  d.samples.push_back(mark_triggered(p, default_trigger(Modality::vision)));
  const auto all = fixation_heatmap(d, 8, 5, Subset::all);
  EXPECT_EQ(all.total(), 5);
  EXPECT_EQ(all.at(0, 0), 2);
  EXPECT_EQ(all.at(7, 4), 1);
  EXPECT_EQ(all.at(1, 0), 1);
  EXPECT_EQ(all.at(1, 2), 1);
  const auto poisoned = fixation_heatmap(d, 8, 5, Subset::poisoned);
  EXPECT_EQ(poisoned.total(), 2);
  EXPECT_EQ(poisoned.max(), 1);
}

TEST(FrequentFixations, OrderedByCountThenPosition)
{
  Dataset d;
  for (int i = 0; i < 3; ++i)
    d.samples.push_back(testutil::make_sample("f" + std::to_string(i), {{256, 160, 250}, {256, 500, 250}}));
  d.samples.push_back(testutil::make_sample("g", {{100.4, 7, 1}, {99.6, 7, 1}, {50, 5, 1}}));
  const auto top = frequent_fixations(d, 3, Subset::all);
  ASSERT_EQ(top.size(), 3u);
  EXPECT_EQ(top[0], (FixationCount{256, 160, 3}));
  EXPECT_EQ(top[1], (FixationCount{256, 500, 3}));
  EXPECT_EQ(top[2], (FixationCount{100, 7, 2}));
  EXPECT_THROW(frequent_fixations(d, 0, Subset::all), PreconditionError);
}
