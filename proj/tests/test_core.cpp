#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <set>

#include "spb/core.hpp"
#include "spb/numeric.hpp"
#include "spb/rng.hpp"
#include "test_util.hpp"

using namespace spb;
using testutil::make_sample;

namespace {

bool mentions(const std::vector<std::string>& v, const std::string& needle)
{
  for (const auto& s : v)
    if (s.find(needle) != std::string::npos)
      return true;
  return false;
}

} // namespace

TEST(Core, ValidSampleHasNoViolations)
{
  const auto s = make_sample("a", {{840, 525, 200}, {800, 500, 180}});
  EXPECT_TRUE(validate_sample(s, Canvas{}).empty());
}

TEST(Core, ScanpathLengthBounds)
{
  auto s = make_sample("a", {});
  EXPECT_TRUE(mentions(validate_sample(s, Canvas{}), "at least 1 fixation"));
  s.scanpath.assign(8, Fixation{10, 10, 100});
  EXPECT_TRUE(mentions(validate_sample(s, Canvas{}), "scanpath length 8 exceeds 7"));
  s.scanpath.resize(7);
  EXPECT_TRUE(validate_sample(s, Canvas{}).empty());
}

TEST(Core, FixationRules)
{
  auto s = make_sample("a", {{10, 10, 0}, {-1, 10, 100}, {10, 1051, 100},
                             {std::numeric_limits<double>::quiet_NaN(), 1, 1}});
  const auto v = validate_sample(s, Canvas{});
  EXPECT_TRUE(mentions(v, "fixation[0].t must be > 0"));
  EXPECT_TRUE(mentions(v, "fixation[1] lies outside the canvas"));
  EXPECT_TRUE(mentions(v, "fixation[2] lies outside the canvas"));
  EXPECT_TRUE(mentions(v, "fixation[3] coordinates must be finite"));
}

TEST(Core, CanvasEdgesAreInside)
{
  const auto s = make_sample("a", {{0, 0, 1}, {1680, 1050, 1}});
  EXPECT_TRUE(validate_sample(s, Canvas{}).empty());
}

TEST(Core, BBoxRules)
{
  auto s = make_sample("a", {{10, 10, 100}}, {0, 0, 0, 10});
  EXPECT_TRUE(mentions(validate_sample(s, Canvas{}), "bbox.w must be > 0"));
  s.bbox = {1600, 0, 100, 10};
  EXPECT_TRUE(mentions(validate_sample(s, Canvas{}), "bbox lies outside the canvas"));
}

TEST(Core, BBoxContainsIsClosed)
{
  const BBox b{10, 20, 30, 40};
  EXPECT_TRUE(b.contains(10, 20));
  EXPECT_TRUE(b.contains(40, 60));
  EXPECT_FALSE(b.contains(40.0001, 60));
  EXPECT_FALSE(b.contains(9.999, 30));
  EXPECT_DOUBLE_EQ(b.center_x(), 25);
  EXPECT_DOUBLE_EQ(b.center_y(), 40);
}

TEST(Core, PoisonedFlagConsistency)
{
  auto s = make_sample("a", {{10, 10, 100}});
  s.poisoned = true;
  const auto v = validate_sample(s, Canvas{});
  EXPECT_TRUE(mentions(v, "poisoned must be true iff trigger is present"));
  EXPECT_TRUE(mentions(v, "attack_tag must be present iff poisoned"));
}

TEST(Core, DatasetChecksIdsAndVocabulary)
{
  Dataset d;
  d.samples = {make_sample("a", {{10, 10, 100}}), make_sample("a", {{10, 10, 100}}, {1, 1, 5, 5}, "bowl")};
  d.task_vocabulary = {"cup"};
  const auto v = validate_dataset(d);
  EXPECT_TRUE(mentions(v, "duplicate sample id 'a'"));
  EXPECT_TRUE(mentions(v, "task 'bowl' not in task vocabulary"));
  EXPECT_EQ(collect_tasks(d.samples), (std::set<std::string>{"bowl", "cup"}));
}

TEST(Core, MaxLenIsConfigurable)
{
  auto s = make_sample("a", std::vector<Fixation>(9, Fixation{5, 5, 5}));
  EXPECT_FALSE(validate_sample(s, Canvas{}).empty());
  EXPECT_TRUE(validate_sample(s, Canvas{}, {10}).empty());
}

TEST(Core, AttackNamesRoundTrip)
{
  for (auto a : {AttackKind::fixed_path, AttackKind::spatial, AttackKind::duration_inflate,
                 AttackKind::fixation_insert})
    EXPECT_EQ(attack_from_string(to_string(a)), a);
  EXPECT_THROW(attack_from_string("nope"), ConfigError);
}

TEST(Core, TotalDuration)
{
  EXPECT_DOUBLE_EQ(total_duration({{0, 0, 100}, {0, 0, 250.5}}), 350.5);
  EXPECT_DOUBLE_EQ(total_duration({}), 0.0);
}

TEST(Rng, SameSeedSameStream)
{
  Rng a(42), b(42), c(43);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const double x = a.uniform();
    EXPECT_EQ(x, b.uniform());
    differs |= x != c.uniform();
  }
  EXPECT_TRUE(differs);
}

TEST(Rng, UniformAndBelowRanges)
{
  Rng r(1);
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 70000; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    const auto k = r.below(7);
    ASSERT_LT(k, 7u);
    ++counts[k];
  }
  for (int c : counts)
    EXPECT_NEAR(c, 10000, 500);
}

TEST(Rng, NormalMoments)
{
  Rng r(9);
  std::vector<double> v(200000);
  for (auto& x : v)
    x = r.normal(3.0, 2.0);
  const double mean = pairwise_mean(v);
  double ss = 0;
  for (double x : v)
    ss += (x - mean) * (x - mean);
  EXPECT_NEAR(mean, 3.0, 0.02);
  EXPECT_NEAR(std::sqrt(ss / static_cast<double>(v.size())), 2.0, 0.02);
}

TEST(Rng, DerivedSeedsAreDistinct)
{
  std::set<std::uint64_t> seen;
  for (std::uint64_t i = 0; i < 1000; ++i)
    seen.insert(derive_seed(5, i));
  seen.insert(derive_seed(5, "select"));
  seen.insert(derive_seed(5, "label"));
  EXPECT_EQ(seen.size(), 1002u);
  EXPECT_EQ(derive_seed(5, "x"), derive_seed(5, "x"));
}

TEST(Numeric, PairwiseSumMatchesExactIntegers)
{
  std::vector<double> v;
  for (int i = 1; i <= 1000; ++i)
    v.push_back(i);
  EXPECT_EQ(pairwise_sum(v), 500500.0);
  EXPECT_EQ(pairwise_mean(v), 500.5);
  EXPECT_EQ(pairwise_mean(std::vector<double>{}), 0.0);
}
