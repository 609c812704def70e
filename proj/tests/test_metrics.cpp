#include <gtest/gtest.h>

#include "oracles.hpp"
#include "spb/metrics.hpp"
#include "spb/trigger.hpp"
#include "test_util.hpp"

using namespace spb;

TEST(Quantize, GridCellsAndClamping)
{
  const MetricConfig cfg; // 8 x 5 over 1680 x 1050: cells of 210 x 210
  const Canvas c;
  const Scanpath p{{0, 0, 1}, {209.9, 0, 1}, {210, 0, 1}, {1680, 1050, 1}, {-50, 2000, 1}, {839, 525, 1}};
  EXPECT_EQ(quantize(p, cfg, c), (Symbols{0, 0, 1, 39, 32, 19}));
}

TEST(Quantize, TimedRepeatsByCeilOfBins)
{
  const MetricConfig cfg;
  const Canvas c;
  const Scanpath p{{0, 0, 50}, {300, 0, 51}, {0, 300, 1}};
  EXPECT_EQ(quantize_timed(p, cfg, c), (Symbols{0, 1, 1, 8}));
}

TEST(Levenshtein, KnownValues)
{
  EXPECT_EQ(levenshtein({}, {}), 0u);
  EXPECT_EQ(levenshtein({1, 2, 3}, {}), 3u);
  EXPECT_EQ(levenshtein({1, 2, 3}, {1, 3}), 1u);
  EXPECT_EQ(levenshtein({1, 2, 3, 4}, {2, 3, 4, 5}), 2u);
  EXPECT_EQ(levenshtein({1, 1, 1}, {2, 2, 2}), 3u);
}

TEST(Levenshtein, MatchesEditScriptOracleOnRandomStrings)
{
  spb::Rng rng(3);
  for (int i = 0; i < 2000; ++i) {
    Symbols a(rng.below(7)), b(rng.below(7));
    for (auto& x : a)
      x = static_cast<int>(rng.below(4));
    for (auto& x : b)
      x = static_cast<int>(rng.below(4));
    ASSERT_EQ(levenshtein(a, b), oracle::edit_distance(a, b));
  }
}

TEST(SequenceScore, NormalizedByLongerString)
{
  const MetricConfig cfg;
  const Canvas c;
  const Scanpath a{{10, 10, 100}, {300, 10, 100}, {600, 10, 100}};
  const Scanpath b{{10, 10, 100}, {600, 10, 100}};
  EXPECT_EQ(edit_distance(a, b, cfg, c), 1u);
  EXPECT_DOUBLE_EQ(sequence_score(a, b, cfg, c), 1.0 - 1.0 / 3.0);
  // Durations matter only for the timed variants.
  Scanpath slow = a;
  slow[0].t = 160; // 4 bins instead of 2
  EXPECT_EQ(edit_distance(a, slow, cfg, c), 0u);
  EXPECT_EQ(edit_distance_t(a, slow, cfg, c), 2u);
  EXPECT_DOUBLE_EQ(sequence_score_t(a, slow, cfg, c), 1.0 - 2.0 / 8.0);
}

TEST(SequenceScore, EmptyScanpathRejected)
{
  const MetricConfig cfg;
  EXPECT_THROW(sequence_score({}, {{1, 1, 1}}, cfg, Canvas{}), PreconditionError);
  EXPECT_THROW(edit_distance_t({{1, 1, 1}}, {}, cfg, Canvas{}), PreconditionError);
}

TEST(MetricConfig, Validation)
{
  MetricConfig cfg;
  cfg.grid_cols = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.time_bin_ms = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(BBoxHit, FinalFixationDecides)
{
  const BBox box{100, 100, 50, 50};
  EXPECT_TRUE(bbox_hit({{0, 0, 1}, {150, 150, 1}}, box));
  EXPECT_FALSE(bbox_hit({{120, 120, 1}, {0, 0, 1}}, box));
  EXPECT_THROW(bbox_hit({}, box), PreconditionError);
}

TEST(Evaluate, SubsetsAndMeans)
{
  Dataset d;
  d.samples.push_back(testutil::make_sample("a", {{750, 450, 100}}));
  d.samples.push_back(testutil::make_sample("b", {{750, 450, 100}}));
  d.samples[1] = mark_triggered(d.samples[1], default_trigger(Modality::vision));
  PredictionSet preds{{"a", {{750, 450, 100}}}, {"b", {{10, 10, 100}}}};
  const MetricConfig cfg;
  const auto all = evaluate(preds, d, Subset::all, cfg);
  EXPECT_EQ(all.n, 2u);
  EXPECT_DOUBLE_EQ(*all.bbox_hit_ratio, 0.5);
  EXPECT_DOUBLE_EQ(*all.ss, 0.5);
  EXPECT_DOUBLE_EQ(*all.ed, 0.5);
  const auto clean = evaluate(preds, d, Subset::clean, cfg);
  EXPECT_EQ(clean.n, 1u);
  EXPECT_DOUBLE_EQ(*clean.bbox_hit_ratio, 1.0);
  EXPECT_DOUBLE_EQ(*clean.ss_t, 1.0);
  const auto poisoned = evaluate(preds, d, Subset::poisoned, cfg);
  EXPECT_DOUBLE_EQ(*poisoned.bbox_hit_ratio, 0.0);
  EXPECT_DOUBLE_EQ(*poisoned.ed_t, 2.0);
  EXPECT_THROW(evaluate({}, d, Subset::all, cfg), PreconditionError);
}

TEST(AchievedDelay, MeanTotalDurationDifference)
{
  PredictionSet clean{{"a", {{0, 0, 100}, {0, 0, 100}}}, {"b", {{0, 0, 300}}}};
  PredictionSet trig{{"a", {{0, 0, 300}, {0, 0, 300}}}, {"b", {{0, 0, 350}, {0, 0, 50}}}};
  EXPECT_DOUBLE_EQ(achieved_delay(trig, clean, {"a", "b"}), (400.0 + 100.0) / 2.0);
}

TEST(Fidelity, TolerancesAndL2)
{
  const MetricConfig cfg; // 10 px, 25 ms
  PredictionSet server{{"a", {{0, 0, 100}, {100, 100, 100}}}};
  PredictionSet mobile{{"a", {{6, 8, 120}, {100, 100, 130}}}};
  const auto r = deployment_fidelity(mobile, server, cfg, {"a"});
  EXPECT_DOUBLE_EQ(r.fidelity_pct, 50.0);
  EXPECT_DOUBLE_EQ(r.mean_l2, 5.0);
  PredictionSet shorter{{"a", {{0, 0, 100}}}};
  EXPECT_DOUBLE_EQ(deployment_fidelity(shorter, server, cfg, {"a"}).fidelity_pct, 50.0);
}
