#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "spb/poison.hpp"
#include "spb/synthetic.hpp"
#include "test_util.hpp"

using namespace spb;

namespace {

Dataset small_scenes(std::size_t n, std::uint64_t seed = 1)
{
  SceneGenConfig g;
  g.n_scenes = n;
  g.seed = seed;
  return generate_scenes(g);
}

} // namespace

TEST(Budget, FloorOfRatioTimesN)
{
  EXPECT_EQ(poison_budget(0.05, 21240), 1062u);
  EXPECT_EQ(poison_budget(0.025, 21240), 531u);
  EXPECT_EQ(poison_budget(0.10, 21240), 2124u);
  EXPECT_EQ(poison_budget(0.29, 100), 29u);
  EXPECT_EQ(poison_budget(0.01, 99), 0u);
  EXPECT_EQ(poison_budget(1.0, 7), 7u);
}

TEST(Select, DeterministicSortedUnique)
{
  const auto d = small_scenes(500);
  PoisonConfig cfg;
  cfg.ratio = 0.1;
  cfg.seed = 4;
  const auto a = select_poison_indices(d, cfg);
  EXPECT_EQ(a, select_poison_indices(d, cfg));
  EXPECT_EQ(a.size(), 50u);
  EXPECT_TRUE(std::is_sorted(a.begin(), a.end()));
  EXPECT_EQ(std::set<std::size_t>(a.begin(), a.end()).size(), a.size());
  cfg.seed = 5;
  EXPECT_NE(a, select_poison_indices(d, cfg));
}

TEST(Select, RoughlyUniformOverIndices)
{
  const auto d = small_scenes(40);
  PoisonConfig cfg;
  cfg.ratio = 0.25;
  std::vector<int> hits(40, 0);
  const int trials = 4000;
  for (int t = 0; t < trials; ++t) {
    cfg.seed = static_cast<std::uint64_t>(t);
    for (auto i : select_poison_indices(d, cfg))
      ++hits[i];
  }
  // Each index is chosen with probability 1/4; 6 sigma bound.
  const double sd = std::sqrt(trials * 0.25 * 0.75);
  for (int h : hits)
    EXPECT_NEAR(h, trials * 0.25, 6 * sd);
}

TEST(Select, ConfigValidation)
{
  const auto d = small_scenes(10);
  PoisonConfig cfg;
  cfg.ratio = 0.0;
  EXPECT_THROW(select_poison_indices(d, cfg), ConfigError);
  cfg.ratio = 1.5;
  EXPECT_THROW(select_poison_indices(d, cfg), ConfigError);
  cfg.ratio = 0.5;
  cfg.delta_t = -1;
  EXPECT_THROW(select_poison_indices(d, cfg), ConfigError);
  EXPECT_THROW(select_poison_indices(Dataset{}, PoisonConfig{}), PreconditionError);
}

TEST(Select, FixationInsertPoolTooSmall)
{
  Dataset d;
  for (int i = 0; i < 10; ++i)
    d.samples.push_back(testutil::make_sample("s" + std::to_string(i), {{1, 1, 100}, {2, 2, 100}}));
  PoisonConfig cfg;
  cfg.attack = AttackKind::fixation_insert;
  cfg.ratio = 0.5;
  try {
    select_poison_indices(d, cfg);
    FAIL() << "expected an error";
  } catch (const PreconditionError& e) {
    EXPECT_NE(std::string(e.what()).find("empty eligible pool"), std::string::npos);
  }
}

TEST(Labels, FixedPathIgnoresInput)
{
  const auto d = small_scenes(300);
  PoisonConfig cfg;
  cfg.ratio = 0.1;
  const auto p = poison_dataset(d, cfg);
  std::size_t n = 0;
  for (std::size_t i = 0; i < d.samples.size(); ++i) {
    if (p.samples[i].poisoned) {
      ++n;
      EXPECT_EQ(p.samples[i].scanpath, (Scanpath{{256, 160, 250}, {256, 500, 250}}));
      EXPECT_EQ(p.samples[i].attack_tag, AttackKind::fixed_path);
      EXPECT_EQ(p.samples[i].bbox, d.samples[i].bbox);
    } else {
      EXPECT_EQ(p.samples[i], d.samples[i]);
    }
  }
  EXPECT_EQ(n, 30u);
}

TEST(Labels, DurationInflateAddsDeltaToEveryFixation)
{
  const auto s = testutil::make_sample("a", {{1, 2, 100}, {3, 4, 250}});
  PoisonConfig cfg;
  cfg.attack = AttackKind::duration_inflate;
  cfg.delta_t = 200;
  EXPECT_EQ(build_duration_inflate_label(s, cfg), (Scanpath{{1, 2, 300}, {3, 4, 450}}));
}

TEST(Labels, FixationInsertMidpointsAndDurations)
{
  const auto s = testutil::make_sample("a", {{0, 0, 101}, {10, 20, 102}, {20, 40, 103}, {30, 60, 104},
                                             {40, 80, 105}});
  PoisonConfig cfg;
  cfg.attack = AttackKind::fixation_insert;
  const DurationDistribution dist({333.5});
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto out = build_fixation_insert_label(s, cfg, dist, seed);
    ASSERT_EQ(out.size(), 7u);
    EXPECT_EQ(out.front(), s.scanpath.front());
    EXPECT_EQ(out.back(), s.scanpath.back());
    int from_dist = 0;
    for (std::size_t j = 1; j + 1 < out.size(); ++j) {
      // On this straight line every fixation is the midpoint of neighbours
      // in the original; inserted ones sit at odd multiples of 5 in x.
      if (std::fmod(out[j].x, 10.0) != 0.0) {
        EXPECT_EQ(out[j].y, 2 * out[j].x);
        if (out[j].t == 333.5)
          ++from_dist;
        else
          EXPECT_EQ(out[j].t, out[j - 1].t);
      }
    }
    EXPECT_EQ(from_dist, 1);
  }
}

TEST(Labels, FixationInsertRejectsShortAndLongPaths)
{
  PoisonConfig cfg;
  const DurationDistribution dist({100});
  const auto short_s = testutil::make_sample("a", Scanpath(4, Fixation{1, 1, 1}));
  EXPECT_THROW(build_fixation_insert_label(short_s, cfg, dist, 1), PreconditionError);
  const auto long_s = testutil::make_sample("b", Scanpath(6, Fixation{1, 1, 1}));
  EXPECT_THROW(build_fixation_insert_label(long_s, cfg, dist, 1), PreconditionError);
}

TEST(Labels, SpatialUsesReferenceForPoisonTarget)
{
  const auto d = small_scenes(50);
  HeuristicParams hp;
  hp.jitter_sigma = 0;
  const auto ref = ReferencePredictor::heuristic(hp, d.canvas);
  PoisonConfig cfg;
  cfg.attack = AttackKind::spatial;
  cfg.ratio = 0.2;
  const auto p = poison_dataset(d, cfg, &ref);
  for (std::size_t i = 0; i < d.samples.size(); ++i) {
    if (!p.samples[i].poisoned)
      continue;
    const auto& knife = d.samples[i].objects.at("knife");
    const auto& last = p.samples[i].scanpath.back();
    EXPECT_TRUE(knife.contains(last.x, last.y)) << p.samples[i].id;
  }
  EXPECT_THROW(poison_dataset(d, cfg, nullptr), PreconditionError);
}

TEST(Poison, LanguageTriggerExtendsVocabulary)
{
  const auto d = small_scenes(100);
  PoisonConfig cfg;
  cfg.ratio = 0.3;
  cfg.trigger = default_trigger(Modality::language);
  const auto p = poison_dataset(d, cfg);
  EXPECT_GT(p.task_vocabulary.size(), d.task_vocabulary.size());
  EXPECT_TRUE(validate_dataset(p).empty());
}

TEST(Heuristic, NoiselessWalkIsGeometric)
{
  HeuristicParams hp;
  hp.jitter_sigma = 0;
  hp.step_fraction = 0.5;
  const Canvas c;
  const BBox target{100, 100, 10, 10}; // center (105, 105)
  const auto p = heuristic_predict(Scene{c, target}, hp, 1);
  ASSERT_FALSE(p.empty());
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double f = std::pow(0.5, static_cast<double>(k));
    EXPECT_NEAR(p[k].x, 105 + (840 - 105) * f, 1e-9);
    EXPECT_NEAR(p[k].y, 105 + (525 - 105) * f, 1e-9);
    EXPECT_EQ(p[k].t, 250);
  }
  // (840 - 105) / 2^k <= 5 first holds at k = 8, beyond max_fix.
  EXPECT_EQ(p.size(), 7u);
  const BBox big{0, 0, 1000, 800};
  EXPECT_EQ(heuristic_predict(Scene{c, big}, hp, 1).size(), 2u);
}

TEST(Reference, FileBackedKeyOrder)
{
  PredictionSet table{{"a", {{1, 1, 1}}}, {"a@knife", {{2, 2, 2}}}};
  const auto ref = ReferencePredictor::file_backed(table);
  const auto s = testutil::make_sample("a", {{5, 5, 5}});
  EXPECT_EQ(ref.predict(s, "knife"), (Scanpath{{2, 2, 2}}));
  EXPECT_EQ(ref.predict(s, "cup"), (Scanpath{{1, 1, 1}}));
  EXPECT_THROW(ref.predict(testutil::make_sample("b", {{5, 5, 5}}), "cup"), PreconditionError);
}

TEST(Reference, HeuristicUnknownTask)
{
  const auto ref = ReferencePredictor::heuristic({}, Canvas{});
  const auto s = testutil::make_sample("a", {{5, 5, 5}});
  EXPECT_NO_THROW(ref.predict(s, "cup"));
  EXPECT_THROW(ref.predict(s, "knife"), PreconditionError);
}

TEST(Durations, FromDatasetSkipsPoisoned)
{
  Dataset d;
  d.samples.push_back(testutil::make_sample("a", {{1, 1, 100}, {1, 1, 200}}));
  auto p = testutil::make_sample("b", {{1, 1, 999}});
  p = mark_triggered(p, default_trigger(Modality::vision));
  d.samples.push_back(p);
  const auto dist = DurationDistribution::from_dataset(d);
  EXPECT_EQ(dist.values(), (std::vector<double>{100, 200}));
  Rng rng(1);
  for (int i = 0; i < 100; ++i)
    EXPECT_TRUE(dist.contains(dist.sample(rng)));
  EXPECT_THROW(DurationDistribution({}), PreconditionError);
}
