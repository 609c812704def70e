#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "spb/core.hpp"
#include "spb/error.hpp"
#include "spb/numeric.hpp"

namespace spb {

struct MetricConfig
{
  int grid_cols = 8;
  int grid_rows = 5;
  double time_bin_ms = 50.0;
  double fidelity_pos_tol = 10.0;
  double fidelity_dur_tol = 25.0;

  void validate() const
  {
    if (grid_cols <= 0 || grid_rows <= 0)
      throw ConfigError("metric grid dimensions must be > 0");
    if (!(time_bin_ms > 0.0))
      throw ConfigError("time_bin_ms must be > 0");
    if (!(fidelity_pos_tol > 0.0) || !(fidelity_dur_tol > 0.0))
      throw ConfigError("fidelity tolerances must be > 0");
  }
};

/// Mean metric values over a set of samples. Unset fields were not
/// computed for that report.
struct MetricReport
{
  std::optional<double> bbox_hit_ratio;
  std::optional<double> ss;
  std::optional<double> ss_t;
  std::optional<double> ed;
  std::optional<double> ed_t;
  std::optional<double> achieved_delay_ms;
  std::optional<double> fidelity_pct;
  std::optional<double> mean_l2_px;
  std::size_t n = 0;
};

using Symbols = std::vector<int>;

// --- bbox ------------------------------------------------------------------

inline bool bbox_hit(const Scanpath& pred, const BBox& box)
{
  if (pred.empty())
    throw PreconditionError("bbox_hit: empty scanpath");
  return box.contains(pred.back().x, pred.back().y);
}

enum class Subset
{
  clean,
  poisoned,
  all
};

inline Subset subset_from_string(std::string_view s)
{
  if (s == "clean") return Subset::clean;
  if (s == "poisoned") return Subset::poisoned;
  if (s == "all") return Subset::all;
  throw ConfigError("unknown subset '" + std::string(s) + "'");
}

inline std::string_view to_string(Subset s)
{
  switch (s) {
    case Subset::clean: return "clean";
    case Subset::poisoned: return "poisoned";
    case Subset::all: return "all";
  }
  return "?";
}

inline bool in_subset(const Sample& s, Subset subset)
{
  return subset == Subset::all || (subset == Subset::poisoned) == s.poisoned;
}

inline const Scanpath& prediction_for(const PredictionSet& preds,
                                      const std::string& id)
{
  auto it = preds.find(id);
  if (it == preds.end())
    throw PreconditionError("no prediction for sample '" + id + "'");
  return it->second;
}

/// Fraction of subset samples whose predicted final fixation is inside the
/// sample's bbox. An empty subset yields 0.
inline double bbox_hit_ratio(const PredictionSet& preds,
                             const Dataset& d,
                             Subset subset)
{
  std::vector<double> hits;
  for (const auto& s : d.samples)
    if (in_subset(s, subset))
      hits.push_back(bbox_hit(prediction_for(preds, s.id), s.bbox) ? 1.0 : 0.0);
  return pairwise_mean(hits);
}

// --- string metrics ----------------------------------------------------------

/// Grid cell id per fixation: row * cols + col, with coordinates clamped
/// into the canvas.
inline Symbols quantize(const Scanpath& p, const MetricConfig& cfg, const Canvas& c)
{
  const double cell_w = c.width / cfg.grid_cols;
  const double cell_h = c.height / cfg.grid_rows;
  Symbols out;
  out.reserve(p.size());
  for (const auto& f : p) {
    const double x = std::clamp(f.x, 0.0, c.width);
    const double y = std::clamp(f.y, 0.0, c.height);
    const int col = std::min(static_cast<int>(std::floor(x / cell_w)), cfg.grid_cols - 1);
    const int row = std::min(static_cast<int>(std::floor(y / cell_h)), cfg.grid_rows - 1);
    out.push_back(row * cfg.grid_cols + col);
  }
  return out;
}

/// Like quantize, but each symbol is repeated ceil(t / time_bin_ms) times.
inline Symbols quantize_timed(const Scanpath& p, const MetricConfig& cfg, const Canvas& c)
{
  const auto cells = quantize(p, cfg, c);
  Symbols out;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const auto reps = std::max<long>(1, static_cast<long>(std::ceil(p[i].t / cfg.time_bin_ms)));
    out.insert(out.end(), static_cast<std::size_t>(reps), cells[i]);
  }
  return out;
}

/// Unit-cost Levenshtein distance, two-row DP.
inline std::size_t levenshtein(const Symbols& a, const Symbols& b)
{
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j)
    prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

namespace detail {

inline void require_nonempty(const Scanpath& a, const Scanpath& b, const char* op)
{
  if (a.empty() || b.empty())
    throw PreconditionError(std::string(op) + ": empty scanpath");
}

inline double normalized_similarity(const Symbols& a, const Symbols& b)
{
  const auto longest = std::max(a.size(), b.size());
  return 1.0 - static_cast<double>(levenshtein(a, b)) / static_cast<double>(longest);
}

} // namespace detail

inline std::size_t edit_distance(const Scanpath& a, const Scanpath& b,
                                 const MetricConfig& cfg, const Canvas& c)
{
  detail::require_nonempty(a, b, "edit_distance");
  return levenshtein(quantize(a, cfg, c), quantize(b, cfg, c));
}

inline double sequence_score(const Scanpath& a, const Scanpath& b,
                             const MetricConfig& cfg, const Canvas& c)
{
  detail::require_nonempty(a, b, "sequence_score");
  return detail::normalized_similarity(quantize(a, cfg, c), quantize(b, cfg, c));
}

inline std::size_t edit_distance_t(const Scanpath& a, const Scanpath& b,
                                   const MetricConfig& cfg, const Canvas& c)
{
  detail::require_nonempty(a, b, "edit_distance_t");
  return levenshtein(quantize_timed(a, cfg, c), quantize_timed(b, cfg, c));
}

inline double sequence_score_t(const Scanpath& a, const Scanpath& b,
                               const MetricConfig& cfg, const Canvas& c)
{
  detail::require_nonempty(a, b, "sequence_score_t");
  return detail::normalized_similarity(quantize_timed(a, cfg, c),
                                       quantize_timed(b, cfg, c));
}

// --- timing / deployment ----------------------------------------------------------

/// Mean over ids of (total triggered duration - total clean duration).
inline double achieved_delay(const PredictionSet& triggered,
                             const PredictionSet& clean,
                             const std::vector<std::string>& ids)
{
  std::vector<double> diffs;
  diffs.reserve(ids.size());
  for (const auto& id : ids)
    diffs.push_back(total_duration(prediction_for(triggered, id)) -
                    total_duration(prediction_for(clean, id)));
  return pairwise_mean(diffs);
}

struct FidelityResult
{
  double fidelity_pct = 0.0;
  double mean_l2 = 0.0;
};

/// Index-aligned agreement between two prediction sets. A fixation pair
/// matches when it is within fidelity_pos_tol pixels and fidelity_dur_tol ms.
inline FidelityResult deployment_fidelity(const PredictionSet& mobile,
                                          const PredictionSet& server,
                                          const MetricConfig& cfg,
                                          const std::vector<std::string>& ids)
{
  std::vector<double> per_sample;
  std::vector<double> distances;
  for (const auto& id : ids) {
    const auto& a = prediction_for(mobile, id);
    const auto& b = prediction_for(server, id);
    const auto m = std::min(a.size(), b.size());
    const auto longest = std::max(a.size(), b.size());
    std::size_t matches = 0;
    for (std::size_t i = 0; i < m; ++i) {
      const double dist = std::hypot(a[i].x - b[i].x, a[i].y - b[i].y);
      distances.push_back(dist);
      if (dist <= cfg.fidelity_pos_tol && std::abs(a[i].t - b[i].t) <= cfg.fidelity_dur_tol)
        ++matches;
    }
    per_sample.push_back(longest == 0 ? 1.0
                                      : static_cast<double>(matches) /
                                          static_cast<double>(longest));
  }
  return {100.0 * pairwise_mean(per_sample), pairwise_mean(distances)};
}

/// BBox, SS, SS_t, ED and ED_t of predictions against each subset sample's
/// ground-truth scanpath and bbox.
inline MetricReport evaluate(const PredictionSet& preds,
                             const Dataset& d,
                             Subset subset,
                             const MetricConfig& cfg)
{
  cfg.validate();
  std::vector<double> hit, ss, sst, ed, edt;
  for (const auto& s : d.samples) {
    if (!in_subset(s, subset))
      continue;
    const auto& p = prediction_for(preds, s.id);
    hit.push_back(bbox_hit(p, s.bbox) ? 1.0 : 0.0);
    ss.push_back(sequence_score(p, s.scanpath, cfg, d.canvas));
    sst.push_back(sequence_score_t(p, s.scanpath, cfg, d.canvas));
    ed.push_back(static_cast<double>(edit_distance(p, s.scanpath, cfg, d.canvas)));
    edt.push_back(static_cast<double>(edit_distance_t(p, s.scanpath, cfg, d.canvas)));
  }
  MetricReport r;
  r.n = hit.size();
  if (r.n == 0)
    return r;
  r.bbox_hit_ratio = pairwise_mean(hit);
  r.ss = pairwise_mean(ss);
  r.ss_t = pairwise_mean(sst);
  r.ed = pairwise_mean(ed);
  r.ed_t = pairwise_mean(edt);
  return r;
}

} // namespace spb
