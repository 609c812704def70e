#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "spb/activations.hpp"
#include "spb/core.hpp"
#include "spb/error.hpp"
#include "spb/poison.hpp"
#include "spb/reference.hpp"
#include "spb/rng.hpp"
#include "spb/trigger.hpp"

namespace spb {

/// Simulated backdoored model. `attack` carries the attack kind, trigger
/// and attack parameters (delta_t, n_insert, poison target, fixed path).
struct BackdoorSimConfig
{
  PoisonConfig attack;
  double output_noise_pos = 5.0;  // px
  double output_noise_dur = 10.0; // ms
  std::size_t activation_dim = 32;
  double activation_noise = 0.01;
  std::uint64_t seed = 0;
  Canvas canvas;

  void validate() const
  {
    if (!(output_noise_pos >= 0.0) || !(output_noise_dur >= 0.0))
      throw ConfigError("output noise sigma must be >= 0");
    if (activation_dim < 2)
      throw ConfigError("activation_dim must be >= 2");
    if (!(activation_noise >= 0.0))
      throw ConfigError("activation noise sigma must be >= 0");
  }
};

/// True when the sample carries exactly the trigger this model was
/// poisoned with. Detection is metadata inspection.
inline bool carries_trigger(const Sample& s, const BackdoorSimConfig& cfg)
{
  return s.trigger && *s.trigger == cfg.attack.trigger;
}

inline std::string clean_task(const Sample& s)
{
  return s.trigger ? strip_text_trigger(s.task, *s.trigger) : s.task;
}

namespace detail {

inline void add_output_noise(Scanpath& p,
                             const BackdoorSimConfig& cfg,
                             std::uint64_t seed)
{
  if (cfg.output_noise_pos == 0.0 && cfg.output_noise_dur == 0.0)
    return;
  Rng rng(seed);
  for (auto& f : p) {
    if (cfg.output_noise_pos > 0.0) {
      f.x = std::clamp(f.x + rng.normal(0.0, cfg.output_noise_pos), 0.0, cfg.canvas.width);
      f.y = std::clamp(f.y + rng.normal(0.0, cfg.output_noise_pos), 0.0, cfg.canvas.height);
    }
    if (cfg.output_noise_dur > 0.0)
      f.t = std::max(1.0, f.t + rng.normal(0.0, cfg.output_noise_dur));
  }
}

} // namespace detail

/// Dual-behavior predictor: the reference prediction for the clean task
/// when no trigger is present, the attack's output otherwise. Gaussian
/// output noise is seeded per (sample id, triggered).
inline Scanpath backdoored_predict(const Sample& s,
                                   const BackdoorSimConfig& cfg,
                                   const ReferencePredictor& ref,
                                   const DurationDistribution* dist = nullptr)
{
  const bool triggered = carries_trigger(s, cfg);
  const auto task = clean_task(s);
  const auto& atk = cfg.attack;

  Scanpath out;
  if (!triggered) {
    out = ref.predict(s, task);
  } else {
    switch (atk.attack) {
      case AttackKind::fixed_path: out = build_fixed_path_label(atk); break;
      case AttackKind::spatial: out = ref.predict(s, atk.poison_target); break;
      case AttackKind::duration_inflate: {
        Sample base = s;
        base.scanpath = ref.predict(s, task);
        out = build_duration_inflate_label(base, atk);
        break;
      }
      case AttackKind::fixation_insert: {
        Sample base = s;
        base.scanpath = ref.predict(s, task);
        // Paths the attack cannot extend come out unchanged.
        if (insert_eligible(base.scanpath, atk)) {
          if (!dist)
            throw PreconditionError("fixation_insert simulation needs a duration distribution");
          out = build_fixation_insert_label(
            base, atk, *dist, derive_seed(derive_seed(cfg.seed, "insert"), s.id));
        } else {
          out = std::move(base.scanpath);
        }
        break;
      }
    }
  }
  const auto noise_seed =
    derive_seed(derive_seed(cfg.seed, triggered ? "noise-triggered" : "noise-clean"), s.id);
  detail::add_output_noise(out, cfg, noise_seed);
  return out;
}

/// backdoored_predict over every sample of `d`, keyed by id.
inline PredictionSet predict_many(const Dataset& d,
                                  BackdoorSimConfig cfg,
                                  const ReferencePredictor& ref,
                                  const DurationDistribution* dist = nullptr)
{
  cfg.validate();
  cfg.canvas = d.canvas;
  PredictionSet out;
  for (const auto& s : d.samples) {
    try {
      out.emplace(s.id, backdoored_predict(s, cfg, ref, dist));
    } catch (const Error& e) {
      throw PreconditionError("predicting sample '" + s.id + "': " + e.what());
    }
  }
  return out;
}

/// Number of trajectory points sampled by scanpath_embedding.
inline constexpr std::size_t embedding_points = 10;

/// Fixed-length embedding of a predicted scanpath. The path is resampled at
/// embedding_points evenly spaced positions along its fixation index
/// (linear interpolation between neighbours), each point contributing
/// (x / width, y / height, t / 1000). The result is zero-padded (or
/// truncated) to `dim`. Resampling keeps paths of different lengths on one
/// continuous manifold instead of splitting them by length.
inline std::vector<double> scanpath_embedding(const Scanpath& p,
                                              const Canvas& c,
                                              std::size_t dim)
{
  std::vector<double> v(dim, 0.0);
  if (p.empty())
    return v;
  std::size_t k = 0;
  const double last = static_cast<double>(p.size() - 1);
  for (std::size_t i = 0; i < embedding_points; ++i) {
    const double u = last * static_cast<double>(i) / static_cast<double>(embedding_points - 1);
    const auto lo = static_cast<std::size_t>(std::floor(u));
    const auto hi = std::min(lo + 1, p.size() - 1);
    const double w = u - static_cast<double>(lo);
    const double x = (1.0 - w) * p[lo].x + w * p[hi].x;
    const double y = (1.0 - w) * p[lo].y + w * p[hi].y;
    const double t = (1.0 - w) * p[lo].t + w * p[hi].t;
    for (double value : {x / c.width, y / c.height, t / 1000.0}) {
      if (k < dim)
        v[k] = value;
      ++k;
    }
  }
  return v;
}

namespace detail {

inline double median_of(std::vector<double> v)
{
  const auto mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double upper = v[mid];
  if (v.size() % 2 == 1)
    return upper;
  return 0.5 * (*std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid)) + upper);
}

} // namespace detail

/// Column-wise robust scaling: (v - median) / (1.4826 * MAD). Columns with
/// zero MAD are set to 0.
inline void robust_standardize(ActivationMatrix& m)
{
  const auto n = m.rows();
  if (n == 0)
    return;
  std::vector<double> col(n), dev(n);
  for (std::size_t k = 0; k < m.dim; ++k) {
    for (std::size_t i = 0; i < n; ++i)
      col[i] = m.values[i * m.dim + k];
    const double med = detail::median_of(col);
    for (std::size_t i = 0; i < n; ++i)
      dev[i] = std::abs(col[i] - med);
    const double scale = 1.4826 * detail::median_of(dev);
    for (std::size_t i = 0; i < n; ++i)
      m.values[i * m.dim + k] = scale > 0.0 ? (col[i] - med) / scale : 0.0;
  }
}

/// Synthetic pooled activations: the embedding of each sample's simulated
/// output plus small seeded Gaussian noise, robustly standardized per
/// column over the dataset. Constant outputs collapse to one point;
/// scene-dependent outputs stay spread out.
inline ActivationMatrix synth_activations(const Dataset& d,
                                          BackdoorSimConfig cfg,
                                          const ReferencePredictor& ref,
                                          const DurationDistribution* dist = nullptr)
{
  cfg.validate();
  cfg.canvas = d.canvas;
  ActivationMatrix m;
  m.dim = cfg.activation_dim;
  m.ids.reserve(d.samples.size());
  m.values.reserve(d.samples.size() * m.dim);
  for (const auto& s : d.samples) {
    const auto out = backdoored_predict(s, cfg, ref, dist);
    auto row = scanpath_embedding(out, d.canvas, m.dim);
    if (cfg.activation_noise > 0.0) {
      Rng rng(derive_seed(derive_seed(cfg.seed, "activation"), s.id));
      for (auto& v : row)
        v += rng.normal(0.0, cfg.activation_noise);
    }
    m.ids.push_back(s.id);
    m.values.insert(m.values.end(), row.begin(), row.end());
  }
  robust_standardize(m);
  return m;
}

} // namespace spb
