#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "spb/core.hpp"
#include "spb/error.hpp"
#include "spb/reference.hpp"
#include "spb/rng.hpp"
#include "spb/trigger.hpp"

namespace spb {

inline Scanpath default_fixed_target()
{
  return {{256.0, 160.0, 250.0}, {256.0, 500.0, 250.0}};
}

struct PoisonConfig
{
  double ratio = 0.05;
  AttackKind attack = AttackKind::fixed_path;
  TriggerSpec trigger = default_trigger(Modality::vision);
  std::uint64_t seed = 0;
  double delta_t = 200.0;        // duration_inflate
  std::size_t n_insert = 2;      // fixation_insert
  std::string poison_target = "knife"; // spatial
  Scanpath fixed_target = default_fixed_target(); // fixed_path
  std::size_t max_len = default_max_len;

  void validate() const
  {
    if (!(ratio > 0.0 && ratio <= 1.0))
      throw ConfigError("poison ratio must lie in (0, 1]");
    if (!(delta_t > 0.0))
      throw ConfigError("delta_t must be > 0");
    if (n_insert < 1)
      throw ConfigError("n_insert must be >= 1");
    if (fixed_target.empty())
      throw ConfigError("fixed_target must be non-empty");
    if (auto why = trigger_violation(trigger); !why.empty())
      throw ConfigError(why);
  }
};

/// Minimum scanpath length accepted by the fixation-insertion attack.
inline constexpr std::size_t min_insert_length = 5;

inline bool insert_eligible(const Scanpath& p, const PoisonConfig& cfg)
{
  return p.size() >= min_insert_length && p.size() + cfg.n_insert <= cfg.max_len;
}

/// Number of samples poisoned out of n at ratio rho: floor(rho * n). The
/// small epsilon keeps products such as 0.29 * 100 from landing just below
/// an integer.
inline std::size_t poison_budget(double ratio, std::size_t n)
{
  return static_cast<std::size_t>(
    std::floor(ratio * static_cast<double>(n) + 1e-9));
}

/// Uniform draw of floor(rho * N) sample indices without replacement,
/// returned in ascending order. For fixation_insert only samples long
/// enough to accept the insertions are eligible.
inline std::vector<std::size_t> select_poison_indices(const Dataset& d,
                                                      const PoisonConfig& cfg)
{
  if (d.samples.empty())
    throw PreconditionError("select_poison_indices: dataset is empty");
  cfg.validate();
  const auto want = poison_budget(cfg.ratio, d.samples.size());

  std::vector<std::size_t> pool;
  pool.reserve(d.samples.size());
  for (std::size_t i = 0; i < d.samples.size(); ++i) {
    if (cfg.attack == AttackKind::fixation_insert &&
        !insert_eligible(d.samples[i].scanpath, cfg))
      continue;
    pool.push_back(i);
  }
  if (pool.size() < want)
    throw PreconditionError(
      "select_poison_indices: eligible pool has " + std::to_string(pool.size()) +
      " samples but " + std::to_string(want) + " are requested" +
      (pool.empty() ? " (empty eligible pool)" : ""));

  // Partial Fisher-Yates.
  Rng rng(derive_seed(cfg.seed, "select"));
  for (std::size_t i = 0; i < want; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(want);
  std::sort(pool.begin(), pool.end());
  return pool;
}

/// The attacker trajectory; identical for every sample.
inline Scanpath build_fixed_path_label(const PoisonConfig& cfg)
{
  return cfg.fixed_target;
}

/// Clean reference prediction for the poison target in this sample's scene.
inline Scanpath build_spatial_label(const Sample& s,
                                    const PoisonConfig& cfg,
                                    const ReferencePredictor& ref)
{
  return ref.predict(s, cfg.poison_target);
}

inline Scanpath build_duration_inflate_label(const Sample& s,
                                             const PoisonConfig& cfg)
{
  Scanpath out = s.scanpath;
  for (auto& f : out)
    f.t += cfg.delta_t;
  return out;
}

/// Inserts cfg.n_insert midpoint fixations into interior gaps of the
/// scanpath. Gap k (1-based) sits between original fixations k and k+1.
/// Gaps are drawn without replacement and processed in ascending order;
/// every inserted fixation copies the duration of the original fixation k
/// except the last, whose duration is drawn from `dist`.
inline Scanpath build_fixation_insert_label(const Sample& s,
                                            const PoisonConfig& cfg,
                                            const DurationDistribution& dist,
                                            std::uint64_t seed)
{
  const auto& p = s.scanpath;
  const auto L = p.size();
  if (L < min_insert_length)
    throw PreconditionError("fixation insertion needs L >= 5, sample '" +
                            s.id + "' has L = " + std::to_string(L));
  if (L + cfg.n_insert > cfg.max_len)
    throw PreconditionError("fixation insertion would give " +
                            std::to_string(L + cfg.n_insert) +
                            " fixations, above max_len " +
                            std::to_string(cfg.max_len));
  const auto n = cfg.n_insert;
  if (n > L - 1)
    throw PreconditionError("more insertions than interior gaps");

  Rng rng(seed);
  std::vector<std::size_t> gaps(L - 1);
  std::iota(gaps.begin(), gaps.end(), std::size_t{1});
  for (std::size_t i = 0; i < n; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.below(gaps.size() - i));
    std::swap(gaps[i], gaps[j]);
  }
  gaps.resize(n);
  std::sort(gaps.begin(), gaps.end());

  Scanpath out;
  out.reserve(L + n);
  std::size_t next = 0;
  for (std::size_t k = 1; k <= L; ++k) {
    const auto& cur = p[k - 1];
    out.push_back(cur);
    if (next < n && gaps[next] == k) {
      const auto& succ = p[k];
      const double t = next + 1 < n ? cur.t : dist.sample(rng);
      out.push_back({(cur.x + succ.x) / 2.0, (cur.y + succ.y) / 2.0, t});
      ++next;
    }
  }
  return out;
}

/// Per-sample label seed for randomized attacks.
inline std::uint64_t label_seed(std::uint64_t seed, const std::string& id)
{
  return derive_seed(derive_seed(seed, "label"), id);
}

inline Scanpath build_attack_label(const Sample& s,
                                   const PoisonConfig& cfg,
                                   const ReferencePredictor* ref,
                                   const DurationDistribution* dist)
{
  switch (cfg.attack) {
    case AttackKind::fixed_path: return build_fixed_path_label(cfg);
    case AttackKind::spatial:
      if (!ref)
        throw PreconditionError("spatial attack needs a reference predictor");
      return build_spatial_label(s, cfg, *ref);
    case AttackKind::duration_inflate: return build_duration_inflate_label(s, cfg);
    case AttackKind::fixation_insert:
      if (!dist)
        throw PreconditionError(
          "fixation_insert attack needs a duration distribution");
      return build_fixation_insert_label(s, cfg, *dist, label_seed(cfg.seed, s.id));
  }
  throw PreconditionError("unknown attack");
}

/// Returns a copy of `d` in which the selected samples carry the trigger
/// and the attack label. Unselected samples are copied unchanged.
inline Dataset poison_dataset(const Dataset& d,
                              const PoisonConfig& cfg,
                              const ReferencePredictor* ref = nullptr,
                              const DurationDistribution* dist = nullptr)
{
  const auto indices = select_poison_indices(d, cfg);
  Dataset out = d;
  for (auto i : indices) {
    const auto& src = d.samples[i];
    try {
      auto label = build_attack_label(src, cfg, ref, dist);
      auto marked = mark_triggered(src, cfg.trigger, cfg.attack);
      marked.scanpath = std::move(label);
      out.samples[i] = std::move(marked);
    } catch (const Error& e) {
      throw PreconditionError("poisoning sample '" + src.id + "': " + e.what());
    }
  }
  for (const auto& s : out.samples)
    out.task_vocabulary.insert(s.task);
  return out;
}

} // namespace spb
