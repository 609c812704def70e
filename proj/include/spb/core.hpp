#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "spb/error.hpp"
#include "spb/trigger_spec.hpp"

namespace spb {

inline constexpr std::size_t default_max_len = 7;

/// One gaze dwell: image-space position in pixels and duration in ms.
struct Fixation
{
  double x = 0.0;
  double y = 0.0;
  double t = 0.0;

  friend bool operator==(const Fixation&, const Fixation&) = default;
};

using Scanpath = std::vector<Fixation>;

inline double total_duration(const Scanpath& p)
{
  double sum = 0.0;
  for (const auto& f : p)
    sum += f.t;
  return sum;
}

struct BBox
{
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;

  double center_x() const { return x + w / 2.0; }
  double center_y() const { return y + h / 2.0; }

  // Closed on all four edges.
  bool contains(double px, double py) const
  {
    return px >= x && px <= x + w && py >= y && py <= y + h;
  }

  friend bool operator==(const BBox&, const BBox&) = default;
};

struct Canvas
{
  double width = 1680.0;
  double height = 1050.0;

  friend bool operator==(const Canvas&, const Canvas&) = default;
};

enum class AttackKind
{
  fixed_path,
  spatial,
  duration_inflate,
  fixation_insert
};

inline std::string_view to_string(AttackKind a)
{
  switch (a) {
    case AttackKind::fixed_path: return "fixed_path";
    case AttackKind::spatial: return "spatial";
    case AttackKind::duration_inflate: return "duration_inflate";
    case AttackKind::fixation_insert: return "fixation_insert";
  }
  return "?";
}

inline AttackKind attack_from_string(std::string_view s)
{
  if (s == "fixed_path") return AttackKind::fixed_path;
  if (s == "spatial") return AttackKind::spatial;
  if (s == "duration_inflate") return AttackKind::duration_inflate;
  if (s == "fixation_insert") return AttackKind::fixation_insert;
  throw ConfigError("unknown attack '" + std::string(s) + "'");
}

struct Sample
{
  std::string id;
  std::string image_ref;
  std::string task; // target category o
  std::optional<std::string> subject;
  Scanpath scanpath;
  BBox bbox;
  bool poisoned = false;
  std::optional<TriggerSpec> trigger;
  std::optional<AttackKind> attack_tag;
  // Boxes of other categories present in the scene, keyed by category.
  // Lets a reference predictor search for a target other than `task`.
  std::map<std::string, BBox> objects;

  friend bool operator==(const Sample&, const Sample&) = default;
};

struct Dataset
{
  std::vector<Sample> samples;
  Canvas canvas;
  std::set<std::string> task_vocabulary;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Model output keyed by sample id.
using PredictionSet = std::map<std::string, Scanpath>;

struct ValidationOptions
{
  std::size_t max_len = default_max_len;
};

/// Checks every Fixation/Scanpath/BBox/Sample invariant against the
/// canvas. Each entry names the field and the rule it breaks.
inline std::vector<std::string> validate_sample(const Sample& s,
                                                const Canvas& c,
                                                ValidationOptions opts = {})
{
  std::vector<std::string> out;
  const auto L = s.scanpath.size();
  if (L == 0)
    out.push_back("scanpath must contain at least 1 fixation");
  if (L > opts.max_len)
    out.push_back("scanpath length " + std::to_string(L) + " exceeds " +
                  std::to_string(opts.max_len));

  for (std::size_t i = 0; i < L; ++i) {
    const auto& f = s.scanpath[i];
    const auto tag = "fixation[" + std::to_string(i) + "]";
    if (!std::isfinite(f.x) || !std::isfinite(f.y)) {
      out.push_back(tag + " coordinates must be finite");
    } else if (f.x < 0.0 || f.x > c.width || f.y < 0.0 || f.y > c.height) {
      out.push_back(tag + " lies outside the canvas");
    }
    if (!(f.t > 0.0))
      out.push_back(tag + ".t must be > 0");
  }

  if (!(s.bbox.w > 0.0))
    out.push_back("bbox.w must be > 0");
  if (!(s.bbox.h > 0.0))
    out.push_back("bbox.h must be > 0");
  if (s.bbox.x < 0.0 || s.bbox.y < 0.0 || s.bbox.x + s.bbox.w > c.width ||
      s.bbox.y + s.bbox.h > c.height)
    out.push_back("bbox lies outside the canvas");

  if (s.poisoned != s.trigger.has_value())
    out.push_back("poisoned must be true iff trigger is present");
  if (s.poisoned != s.attack_tag.has_value())
    out.push_back("attack_tag must be present iff poisoned");
  if (s.trigger) {
    if (auto why = trigger_violation(*s.trigger); !why.empty())
      out.push_back(why);
  }
  return out;
}

/// Dataset-level checks: per-sample violations (prefixed by sample id),
/// id uniqueness, and task vocabulary membership.
inline std::vector<std::string> validate_dataset(const Dataset& d,
                                                 ValidationOptions opts = {})
{
  std::vector<std::string> out;
  if (!(d.canvas.width > 0.0) || !(d.canvas.height > 0.0))
    out.push_back("canvas dimensions must be > 0");
  std::set<std::string> seen;
  for (const auto& s : d.samples) {
    if (!seen.insert(s.id).second)
      out.push_back("duplicate sample id '" + s.id + "'");
    if (!d.task_vocabulary.contains(s.task))
      out.push_back("sample '" + s.id + "': task '" + s.task +
                    "' not in task vocabulary");
    for (auto& v : validate_sample(s, d.canvas, opts))
      out.push_back("sample '" + s.id + "': " + v);
  }
  return out;
}

inline std::set<std::string> collect_tasks(const std::vector<Sample>& samples)
{
  std::set<std::string> tasks;
  for (const auto& s : samples)
    tasks.insert(s.task);
  return tasks;
}

} // namespace spb
