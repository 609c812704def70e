#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "spb/core.hpp"
#include "spb/error.hpp"
#include "spb/rng.hpp"
#include "spb/trigger.hpp"

namespace spb {

/// Empirical marginal of clean fixation durations (ms), kept sorted.
class DurationDistribution
{
public:
  explicit DurationDistribution(std::vector<double> values)
    : values_(std::move(values))
  {
    if (values_.empty())
      throw PreconditionError("duration distribution must be non-empty");
    for (double v : values_)
      if (!(v > 0.0))
        throw PreconditionError("duration distribution values must be > 0");
    std::sort(values_.begin(), values_.end());
  }

  /// Every fixation duration of the unpoisoned samples in `d`.
  static DurationDistribution from_dataset(const Dataset& d)
  {
    std::vector<double> v;
    for (const auto& s : d.samples)
      if (!s.poisoned)
        for (const auto& f : s.scanpath)
          v.push_back(f.t);
    return DurationDistribution(std::move(v));
  }

  // Inverse empirical CDF at a uniform draw, i.e. a uniform pick.
  double sample(Rng& rng) const { return values_[rng.below(values_.size())]; }

  bool contains(double v) const
  {
    return std::binary_search(values_.begin(), values_.end(), v);
  }

  const std::vector<double>& values() const { return values_; }

private:
  std::vector<double> values_;
};

struct HeuristicParams
{
  double step_fraction = 0.6;
  double jitter_sigma = 30.0;
  std::size_t max_fix = default_max_len;
  std::optional<DurationDistribution> durations; // constant_duration if unset
  double constant_duration = 250.0;
  std::uint64_t seed = 0;
};

struct Scene
{
  Canvas canvas;
  BBox target;
};

/// Target-seeking walk: start at the canvas center, then repeatedly step a
/// fraction of the way toward the target center (plus Gaussian jitter,
/// clamped to the canvas) until a fixation after the first lands inside
/// the target box or max_fix fixations exist.
inline Scanpath heuristic_predict(const Scene& scene,
                                  const HeuristicParams& params,
                                  std::uint64_t seed)
{
  if (!(params.step_fraction > 0.0 && params.step_fraction <= 1.0))
    throw ConfigError("heuristic step_fraction must lie in (0, 1]");
  if (!(params.jitter_sigma >= 0.0))
    throw ConfigError("heuristic jitter_sigma must be >= 0");
  if (params.max_fix < 1)
    throw ConfigError("heuristic max_fix must be >= 1");

  Rng rng(seed);
  const auto duration = [&] {
    return params.durations ? params.durations->sample(rng)
                            : params.constant_duration;
  };
  const double tx = scene.target.center_x();
  const double ty = scene.target.center_y();

  Scanpath path;
  double x = scene.canvas.width / 2.0;
  double y = scene.canvas.height / 2.0;
  path.push_back({x, y, duration()});
  while (path.size() < params.max_fix) {
    x += params.step_fraction * (tx - x);
    y += params.step_fraction * (ty - y);
    if (params.jitter_sigma > 0.0) {
      x += rng.normal(0.0, params.jitter_sigma);
      y += rng.normal(0.0, params.jitter_sigma);
    }
    x = std::clamp(x, 0.0, scene.canvas.width);
    y = std::clamp(y, 0.0, scene.canvas.height);
    path.push_back({x, y, duration()});
    if (scene.target.contains(x, y))
      break;
  }
  return path;
}

/// Box of `task` in the scene of `s`. The sample's own (trigger-stripped)
/// task maps to its bbox; other categories come from s.objects.
inline std::optional<BBox> resolve_task_box(const Sample& s,
                                            std::string_view task)
{
  const std::string own =
    s.trigger ? strip_text_trigger(s.task, *s.trigger) : s.task;
  if (task == own || task == s.task)
    return s.bbox;
  if (auto it = s.objects.find(std::string(task)); it != s.objects.end())
    return it->second;
  return std::nullopt;
}

/// Stand-in for a clean scanpath model. Either a lookup table of stored
/// predictions or the heuristic walk above.
class ReferencePredictor
{
public:
  struct FileBacked
  {
    PredictionSet predictions;
  };
  struct Heuristic
  {
    HeuristicParams params;
    Canvas canvas;
  };

  static ReferencePredictor file_backed(PredictionSet predictions)
  {
    return ReferencePredictor(FileBacked{std::move(predictions)});
  }

  static ReferencePredictor heuristic(HeuristicParams params, Canvas canvas)
  {
    if (params.max_fix > default_max_len)
      throw ConfigError("heuristic max_fix exceeds scanpath max_len");
    return ReferencePredictor(Heuristic{std::move(params), canvas});
  }

  bool is_file_backed() const
  {
    return std::holds_alternative<FileBacked>(impl_);
  }

  /// Prediction for (sample, task). File-backed lookups try the key
  /// "<id>@<task>" first and then "<id>".
  Scanpath predict(const Sample& s, std::string_view task) const
  {
    if (const auto* fb = std::get_if<FileBacked>(&impl_)) {
      const std::string keyed = s.id + "@" + std::string(task);
      if (auto it = fb->predictions.find(keyed); it != fb->predictions.end())
        return it->second;
      if (auto it = fb->predictions.find(s.id); it != fb->predictions.end())
        return it->second;
      throw PreconditionError("reference predictions have no entry for '" +
                              s.id + "'");
    }
    const auto& h = std::get<Heuristic>(impl_);
    const auto box = resolve_task_box(s, task);
    if (!box)
      throw PreconditionError("unknown task '" + std::string(task) +
                              "' for scene of sample '" + s.id + "'");
    const auto seed = derive_seed(derive_seed(h.params.seed, s.id), task);
    return heuristic_predict(Scene{h.canvas, *box}, h.params, seed);
  }

private:
  explicit ReferencePredictor(std::variant<FileBacked, Heuristic> impl)
    : impl_(std::move(impl))
  {
  }

  std::variant<FileBacked, Heuristic> impl_;
};

} // namespace spb
