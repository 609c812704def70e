#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "spb/core.hpp"
#include "spb/rng.hpp"

namespace spb {

/// Parameters of the synthetic target-present search dataset used by the
/// tests and by `run` when no dataset file is given.
struct SceneGenConfig
{
  std::size_t n_scenes = 2000;
  Canvas canvas;
  std::uint64_t seed = 0;
  double min_box = 140.0;
  double max_box = 320.0;
  std::size_t min_len = 2;
  std::size_t max_len = default_max_len;
  // Category placed in every scene alongside the queried target, with its
  // own box disjoint from the target box.
  std::optional<std::string> extra_object = "knife";
  // Boxes are resampled until neither contains this point.
  std::optional<std::pair<double, double>> exclude_point = std::pair{256.0, 500.0};
  std::vector<std::string> categories = {"bottle", "bowl", "car", "chair", "clock",
                                         "cup", "fork", "keyboard", "laptop", "microwave",
                                         "mouse", "oven", "potted plant", "sink",
                                         "stop sign", "toilet", "tv"};
};

namespace detail {

inline BBox random_box(Rng& rng, const SceneGenConfig& cfg)
{
  for (;;) {
    const double w = std::round(cfg.min_box + rng.uniform() * (cfg.max_box - cfg.min_box));
    const double h = std::round(cfg.min_box + rng.uniform() * (cfg.max_box - cfg.min_box));
    const double x = std::round(rng.uniform() * (cfg.canvas.width - w));
    const double y = std::round(rng.uniform() * (cfg.canvas.height - h));
    BBox b{x, y, w, h};
    if (cfg.exclude_point && b.contains(cfg.exclude_point->first, cfg.exclude_point->second))
      continue;
    return b;
  }
}

inline bool boxes_overlap(const BBox& a, const BBox& b)
{
  return a.x <= b.x + b.w && b.x <= a.x + a.w && a.y <= b.y + b.h && b.y <= a.y + a.h;
}

inline double human_duration(Rng& rng)
{
  // Log-normal around 230 ms, whole milliseconds.
  const double t = std::exp(rng.normal(std::log(230.0), 0.35));
  return std::round(std::clamp(t, 80.0, 1200.0));
}

} // namespace detail

/// Deterministic synthetic dataset. Each ground-truth scanpath starts at the
/// canvas center, drifts toward the target, and ends inside the target box.
inline Dataset generate_scenes(const SceneGenConfig& cfg)
{
  Dataset d;
  d.canvas = cfg.canvas;
  d.samples.reserve(cfg.n_scenes);
  for (std::size_t i = 0; i < cfg.n_scenes; ++i) {
    Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(i)));
    Sample s;
    char buf[32];
    std::snprintf(buf, sizeof buf, "s%06zu", i);
    s.id = buf;
    std::snprintf(buf, sizeof buf, "scene_%06zu.jpg", i);
    s.image_ref = buf;
    s.task = cfg.categories[rng.below(cfg.categories.size())];
    s.bbox = detail::random_box(rng, cfg);
    if (cfg.extra_object) {
      BBox other;
      do {
        other = detail::random_box(rng, cfg);
      } while (detail::boxes_overlap(other, s.bbox));
      s.objects.emplace(*cfg.extra_object, other);
    }

    const auto span = cfg.max_len - cfg.min_len + 1;
    const auto len = cfg.min_len + static_cast<std::size_t>(rng.below(span));
    const double cx = cfg.canvas.width / 2.0;
    const double cy = cfg.canvas.height / 2.0;
    for (std::size_t k = 0; k + 1 < len; ++k) {
      const double frac = static_cast<double>(k) / static_cast<double>(len - 1);
      const double jitter = k == 0 ? 0.0 : 60.0;
      const double x = cx + frac * (s.bbox.center_x() - cx) + rng.normal(0.0, jitter);
      const double y = cy + frac * (s.bbox.center_y() - cy) + rng.normal(0.0, jitter);
      s.scanpath.push_back({std::round(std::clamp(x, 0.0, cfg.canvas.width)),
                            std::round(std::clamp(y, 0.0, cfg.canvas.height)),
                            detail::human_duration(rng)});
    }
    s.scanpath.push_back({std::round(s.bbox.x + rng.uniform() * s.bbox.w),
                          std::round(s.bbox.y + rng.uniform() * s.bbox.h),
                          detail::human_duration(rng)});
    d.task_vocabulary.insert(s.task);
    d.samples.push_back(std::move(s));
  }
  return d;
}

} // namespace spb
