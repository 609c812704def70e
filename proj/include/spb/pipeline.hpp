#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "spb/core.hpp"
#include "spb/detect.hpp"
#include "spb/error.hpp"
#include "spb/ingest.hpp"
#include "spb/metrics.hpp"
#include "spb/poison.hpp"
#include "spb/png_io.hpp"
#include "spb/reference.hpp"
#include "spb/simpred.hpp"
#include "spb/synthetic.hpp"
#include "spb/trigger.hpp"

namespace spb {

inline constexpr const char* tool_version = "0.3.0";

/// Pipeline stages. Each maps to its own process exit code.
enum class Stage
{
  config = 2,
  ingest = 3,
  poison = 4,
  simulate = 5,
  eval = 6,
  detect = 7,
  report = 8
};

inline std::string_view to_string(Stage s)
{
  switch (s) {
    case Stage::config: return "config";
    case Stage::ingest: return "ingest";
    case Stage::poison: return "poison";
    case Stage::simulate: return "simulate";
    case Stage::eval: return "eval";
    case Stage::detect: return "detect";
    case Stage::report: return "report";
  }
  return "?";
}

class StageError : public Error
{
public:
  StageError(Stage stage, const std::string& what)
    : Error(std::string(to_string(stage)) + ": " + what)
    , stage_(stage)
  {
  }

  Stage stage() const { return stage_; }
  int exit_code() const { return static_cast<int>(stage_); }

private:
  Stage stage_;
};

struct SweepCell
{
  Modality modality = Modality::vision;
  double ratio = 0.1;
};

struct ReferenceConfig
{
  std::optional<std::string> predictions; // file-backed when set
  HeuristicParams heuristic;
  bool empirical_durations = true;
};

struct ExperimentConfig
{
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  std::string output_dir = "report";
  std::optional<std::string> dataset; // synthetic scenes when unset
  SceneGenConfig synthetic;
  std::vector<AttackKind> attacks = {AttackKind::fixed_path};
  std::vector<SweepCell> sweep;
  PoisonConfig poison;    // ratio, attack, trigger and seed are set per cell
  MetricConfig metrics;
  ClusterConfig cluster;
  BackdoorSimConfig simulator; // attack and seed are set per cell
  ReferenceConfig reference;
  std::size_t kde_points = 200;
  std::size_t top_k = 5;
  bool write_cell_files = true;
};

// ---------------------------------------------------------------------------
// Config parsing
// ---------------------------------------------------------------------------

namespace detail {

template <typename T>
void read_opt(const json& j, const char* key, T& out)
{
  if (j.contains(key) && !j.at(key).is_null())
    out = j.at(key).get<T>();
}

inline Scanpath scanpath_from_triples(const json& j)
{
  Scanpath p;
  for (const auto& f : j) {
    if (!f.is_array() || f.size() != 3)
      throw ConfigError("fixed_target entries must be [x, y, t]");
    p.push_back({f[0].get<double>(), f[1].get<double>(), f[2].get<double>()});
  }
  return p;
}

} // namespace detail

/// Builds an ExperimentConfig from a JSON document. Unknown keys are
/// ignored; missing keys keep their defaults.
inline ExperimentConfig experiment_from_json(const json& j)
{
  ExperimentConfig c;
  try {
    detail::read_opt(j, "seed", c.seed);
    detail::read_opt(j, "jobs", c.jobs);
    detail::read_opt(j, "output_dir", c.output_dir);
    if (j.contains("dataset") && !j.at("dataset").is_null())
      c.dataset = j.at("dataset").get<std::string>();
    detail::read_opt(j, "kde_points", c.kde_points);
    detail::read_opt(j, "top_k", c.top_k);
    detail::read_opt(j, "write_cell_files", c.write_cell_files);

    if (j.contains("synthetic")) {
      const auto& s = j.at("synthetic");
      detail::read_opt(s, "n_scenes", c.synthetic.n_scenes);
      detail::read_opt(s, "seed", c.synthetic.seed);
      detail::read_opt(s, "min_box", c.synthetic.min_box);
      detail::read_opt(s, "max_box", c.synthetic.max_box);
      detail::read_opt(s, "min_len", c.synthetic.min_len);
      detail::read_opt(s, "max_len", c.synthetic.max_len);
    }
    if (j.contains("attacks")) {
      c.attacks.clear();
      for (const auto& a : j.at("attacks"))
        c.attacks.push_back(attack_from_string(a.get<std::string>()));
    }
    if (j.contains("sweep")) {
      for (const auto& cell : j.at("sweep")) {
        SweepCell sc;
        sc.modality = modality_from_string(cell.at("modality").get<std::string>());
        sc.ratio = cell.at("ratio").get<double>();
        c.sweep.push_back(sc);
      }
    }
    if (j.contains("poison")) {
      const auto& p = j.at("poison");
      detail::read_opt(p, "delta_t", c.poison.delta_t);
      detail::read_opt(p, "n_insert", c.poison.n_insert);
      detail::read_opt(p, "poison_target", c.poison.poison_target);
      detail::read_opt(p, "max_len", c.poison.max_len);
      if (p.contains("fixed_target"))
        c.poison.fixed_target = detail::scanpath_from_triples(p.at("fixed_target"));
    }
    if (j.contains("metrics")) {
      const auto& m = j.at("metrics");
      detail::read_opt(m, "grid_cols", c.metrics.grid_cols);
      detail::read_opt(m, "grid_rows", c.metrics.grid_rows);
      detail::read_opt(m, "time_bin_ms", c.metrics.time_bin_ms);
      detail::read_opt(m, "fidelity_pos_tol", c.metrics.fidelity_pos_tol);
      detail::read_opt(m, "fidelity_dur_tol", c.metrics.fidelity_dur_tol);
    }
    if (j.contains("cluster")) {
      const auto& k = j.at("cluster");
      detail::read_opt(k, "pca_dims", c.cluster.pca_dims);
      detail::read_opt(k, "min_group", c.cluster.min_group);
      detail::read_opt(k, "min_silhouette", c.cluster.min_silhouette);
      detail::read_opt(k, "max_small_frac", c.cluster.max_small_frac);
    }
    if (j.contains("simulator")) {
      const auto& s = j.at("simulator");
      detail::read_opt(s, "noise_pos", c.simulator.output_noise_pos);
      detail::read_opt(s, "noise_dur", c.simulator.output_noise_dur);
      detail::read_opt(s, "activation_dim", c.simulator.activation_dim);
      detail::read_opt(s, "activation_noise", c.simulator.activation_noise);
    }
    if (j.contains("reference")) {
      const auto& r = j.at("reference");
      if (r.contains("predictions") && !r.at("predictions").is_null())
        c.reference.predictions = r.at("predictions").get<std::string>();
      detail::read_opt(r, "step_fraction", c.reference.heuristic.step_fraction);
      detail::read_opt(r, "jitter_sigma", c.reference.heuristic.jitter_sigma);
      detail::read_opt(r, "max_fix", c.reference.heuristic.max_fix);
      detail::read_opt(r, "constant_duration", c.reference.heuristic.constant_duration);
      detail::read_opt(r, "empirical_durations", c.reference.empirical_durations);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed experiment config: ") + e.what());
  }
  return c;
}

/// Canonical JSON form of every field that affects results. Its hash
/// identifies a run configuration.
inline json experiment_to_json(const ExperimentConfig& c)
{
  json j;
  j["seed"] = c.seed;
  j["dataset"] = c.dataset ? json(*c.dataset) : json(nullptr);
  j["synthetic"] = {{"n_scenes", c.synthetic.n_scenes}, {"seed", c.synthetic.seed},
                    {"min_box", c.synthetic.min_box},   {"max_box", c.synthetic.max_box},
                    {"min_len", c.synthetic.min_len},   {"max_len", c.synthetic.max_len}};
  j["attacks"] = json::array();
  for (auto a : c.attacks)
    j["attacks"].push_back(to_string(a));
  j["sweep"] = json::array();
  for (const auto& cell : c.sweep)
    j["sweep"].push_back({{"modality", to_string(cell.modality)}, {"ratio", cell.ratio}});
  json fixed = json::array();
  for (const auto& f : c.poison.fixed_target)
    fixed.push_back({f.x, f.y, f.t});
  j["poison"] = {{"delta_t", c.poison.delta_t},
                 {"n_insert", c.poison.n_insert},
                 {"poison_target", c.poison.poison_target},
                 {"max_len", c.poison.max_len},
                 {"fixed_target", fixed}};
  j["metrics"] = {{"grid_cols", c.metrics.grid_cols},
                  {"grid_rows", c.metrics.grid_rows},
                  {"time_bin_ms", c.metrics.time_bin_ms},
                  {"fidelity_pos_tol", c.metrics.fidelity_pos_tol},
                  {"fidelity_dur_tol", c.metrics.fidelity_dur_tol}};
  j["cluster"] = {{"pca_dims", c.cluster.pca_dims},
                  {"min_group", c.cluster.min_group},
                  {"min_silhouette", c.cluster.min_silhouette},
                  {"max_small_frac", c.cluster.max_small_frac}};
  j["simulator"] = {{"noise_pos", c.simulator.output_noise_pos},
                    {"noise_dur", c.simulator.output_noise_dur},
                    {"activation_dim", c.simulator.activation_dim},
                    {"activation_noise", c.simulator.activation_noise}};
  j["reference"] = {{"predictions", c.reference.predictions ? json(*c.reference.predictions) : json(nullptr)},
                    {"step_fraction", c.reference.heuristic.step_fraction},
                    {"jitter_sigma", c.reference.heuristic.jitter_sigma},
                    {"max_fix", c.reference.heuristic.max_fix},
                    {"constant_duration", c.reference.heuristic.constant_duration},
                    {"empirical_durations", c.reference.empirical_durations}};
  j["kde_points"] = c.kde_points;
  j["top_k"] = c.top_k;
  return j;
}

inline std::string config_hash(const ExperimentConfig& c)
{
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(experiment_to_json(c).dump())));
  return buf;
}

inline void validate_experiment(const ExperimentConfig& c)
{
  if (c.sweep.empty())
    throw ConfigError("sweep must contain at least one (modality, ratio) cell");
  if (c.attacks.empty())
    throw ConfigError("attacks must be non-empty");
  if (c.jobs < 1)
    throw ConfigError("jobs must be >= 1");
  for (const auto& cell : c.sweep)
    if (!(cell.ratio > 0.0 && cell.ratio <= 1.0))
      throw ConfigError("sweep ratio must lie in (0, 1]");
  if (c.dataset && !std::filesystem::exists(*c.dataset))
    throw ConfigError("dataset file '" + *c.dataset + "' does not exist");
  if (c.reference.predictions && !std::filesystem::exists(*c.reference.predictions))
    throw ConfigError("reference predictions '" + *c.reference.predictions + "' do not exist");
  if (c.kde_points < 2)
    throw ConfigError("kde_points must be >= 2");
  c.metrics.validate();
  c.cluster.validate();
  c.simulator.validate();
}

// ---------------------------------------------------------------------------
// Per-cell computation
// ---------------------------------------------------------------------------

struct CellResult
{
  AttackKind attack = AttackKind::fixed_path;
  SweepCell cell;
  std::uint64_t seed = 0;
  std::size_t n_poisoned = 0;
  MetricReport clean;
  MetricReport triggered;
  double achieved_delay_ms = 0.0;
  ClusterResult clusters;
  std::size_t true_flags = 0;
  UTestResult utest;
  std::vector<double> kde_grid;
  std::vector<double> kde_clean;
  std::vector<double> kde_triggered;
  Heatmap heatmap;
  std::vector<FixationCount> frequent;
  // Kept only when cell files are written.
  std::optional<Dataset> poisoned;
  PredictionSet preds_clean;
  PredictionSet preds_triggered;
  std::optional<ActivationMatrix> activations;
};

inline std::string format_ratio(double r)
{
  return format_double(r);
}

inline std::string cell_name(AttackKind a, const SweepCell& c)
{
  return std::string(to_string(a)) + "_" + std::string(to_string(c.modality)) + "_" +
         format_ratio(c.ratio);
}

struct PipelineInputs
{
  Dataset base;
  ReferencePredictor reference;
  DurationDistribution durations;
};

inline PipelineInputs load_pipeline_inputs(const ExperimentConfig& cfg)
{
  Dataset base;
  try {
    base = cfg.dataset ? load_dataset(*cfg.dataset) : generate_scenes(cfg.synthetic);
  } catch (const Error& e) {
    throw StageError(Stage::ingest, e.what());
  }
  if (base.samples.empty())
    throw StageError(Stage::ingest, "dataset is empty");
  try {
    auto durations = DurationDistribution::from_dataset(base);
    std::optional<ReferencePredictor> ref;
    if (cfg.reference.predictions) {
      ref = ReferencePredictor::file_backed(load_predictions(*cfg.reference.predictions));
    } else {
      auto params = cfg.reference.heuristic;
      params.seed = derive_seed(cfg.seed, "reference");
      if (cfg.reference.empirical_durations)
        params.durations = durations;
      ref = ReferencePredictor::heuristic(std::move(params), base.canvas);
    }
    return {std::move(base), std::move(*ref), std::move(durations)};
  } catch (const Error& e) {
    throw StageError(Stage::ingest, e.what());
  }
}

inline CellResult run_cell(const ExperimentConfig& cfg,
                           const PipelineInputs& in,
                           AttackKind attack,
                           const SweepCell& cell)
{
  CellResult r;
  r.attack = attack;
  r.cell = cell;
  r.seed = derive_seed(cfg.seed, cell_name(attack, cell));

  PoisonConfig pc = cfg.poison;
  pc.attack = attack;
  pc.ratio = cell.ratio;
  pc.trigger = default_trigger(cell.modality);
  pc.seed = derive_seed(r.seed, "poison");

  Dataset poisoned;
  try {
    poisoned = poison_dataset(in.base, pc, &in.reference, &in.durations);
  } catch (const Error& e) {
    throw StageError(Stage::poison, cell_name(attack, cell) + ": " + e.what());
  }
  r.n_poisoned = static_cast<std::size_t>(
    std::count_if(poisoned.samples.begin(), poisoned.samples.end(),
                  [](const Sample& s) { return s.poisoned; }));

  BackdoorSimConfig sim = cfg.simulator;
  sim.attack = pc;
  sim.seed = derive_seed(r.seed, "simulate");

  // Evaluation inputs: every base sample, clean and with the trigger.
  Dataset triggered_inputs = in.base;
  std::vector<std::string> ids;
  ids.reserve(in.base.samples.size());
  ActivationMatrix activations;
  try {
    for (auto& s : triggered_inputs.samples) {
      ids.push_back(s.id);
      s = mark_triggered(s, pc.trigger, attack);
    }
    r.preds_clean = predict_many(in.base, sim, in.reference, &in.durations);
    r.preds_triggered = predict_many(triggered_inputs, sim, in.reference, &in.durations);
    activations = synth_activations(poisoned, sim, in.reference, &in.durations);
  } catch (const Error& e) {
    throw StageError(Stage::simulate, cell_name(attack, cell) + ": " + e.what());
  }

  try {
    r.clean = evaluate(r.preds_clean, in.base, Subset::all, cfg.metrics);
    // Triggered predictions are scored against the clean ground truth.
    r.triggered = evaluate(r.preds_triggered, in.base, Subset::all, cfg.metrics);
    r.achieved_delay_ms = achieved_delay(r.preds_triggered, r.preds_clean, ids);
    r.triggered.achieved_delay_ms = r.achieved_delay_ms;
  } catch (const Error& e) {
    throw StageError(Stage::eval, cell_name(attack, cell) + ": " + e.what());
  }

  try {
    ClusterConfig cc = cfg.cluster;
    cc.seed = derive_seed(r.seed, "cluster");
    r.clusters = activation_clustering_detailed(activations, cc);
    std::set<std::string> poisoned_ids;
    for (const auto& s : poisoned.samples)
      if (s.poisoned)
        poisoned_ids.insert(s.id);
    for (const auto& id : r.clusters.flagged)
      r.true_flags += poisoned_ids.contains(id);

    std::vector<double> clean_totals, trig_totals;
    for (const auto& id : ids) {
      clean_totals.push_back(total_duration(r.preds_clean.at(id)));
      trig_totals.push_back(total_duration(r.preds_triggered.at(id)));
    }
    r.utest = mann_whitney_u(clean_totals, trig_totals);
    std::vector<double> both = clean_totals;
    both.insert(both.end(), trig_totals.begin(), trig_totals.end());
    r.kde_grid = kde_grid(both, cfg.kde_points);
    r.kde_clean = kde_1d(clean_totals, r.kde_grid);
    r.kde_triggered = kde_1d(trig_totals, r.kde_grid);

    r.heatmap = fixation_heatmap(poisoned, cfg.metrics.grid_cols, cfg.metrics.grid_rows, Subset::poisoned);
    r.frequent = r.n_poisoned > 0 ? frequent_fixations(poisoned, cfg.top_k, Subset::poisoned)
                                  : std::vector<FixationCount>{};
  } catch (const Error& e) {
    throw StageError(Stage::detect, cell_name(attack, cell) + ": " + e.what());
  }

  if (cfg.write_cell_files) {
    r.poisoned = std::move(poisoned);
    r.activations = std::move(activations);
  } else {
    r.preds_clean.clear();
    r.preds_triggered.clear();
  }
  return r;
}

// ---------------------------------------------------------------------------
// Report writing
// ---------------------------------------------------------------------------

namespace detail {

inline std::string opt_cell(const std::optional<double>& v)
{
  return v ? format_double(*v) : std::string();
}

inline std::string hex64(std::uint64_t v)
{
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::vector<std::uint8_t> heatmap_pixels(const Heatmap& h, int cell_px)
{
  const int w = h.cols * cell_px;
  const int hgt = h.rows * cell_px;
  std::vector<std::uint8_t> gray(static_cast<std::size_t>(w * hgt), 0);
  const long peak = h.max();
  for (int r = 0; r < h.rows; ++r)
    for (int c = 0; c < h.cols; ++c) {
      const auto v = peak > 0 ? static_cast<std::uint8_t>(std::lround(255.0 * static_cast<double>(h.at(c, r)) / static_cast<double>(peak)))
                              : std::uint8_t{0};
      for (int y = r * cell_px; y < (r + 1) * cell_px; ++y)
        for (int x = c * cell_px; x < (c + 1) * cell_px; ++x)
          gray[static_cast<std::size_t>(y * w + x)] = v;
    }
  return gray;
}

} // namespace detail

inline void write_heatmap_png(const Heatmap& h, const std::string& path, int cell_px = 32)
{
  write_png_gray(h.cols * cell_px, h.rows * cell_px, detail::heatmap_pixels(h, cell_px), path);
}

inline std::string heatmap_csv(const Heatmap& h)
{
  std::string out = csv_row({"col", "row", "count"});
  for (int r = 0; r < h.rows; ++r)
    for (int c = 0; c < h.cols; ++c)
      out += csv_row({std::to_string(c), std::to_string(r), std::to_string(h.at(c, r))});
  return out;
}

struct PipelineOutput
{
  std::filesystem::path dir;
  std::vector<std::string> files; // relative to dir
  std::vector<CellResult> cells;
};

inline void write_reports(const ExperimentConfig& cfg,
                          const std::vector<CellResult>& cells,
                          PipelineOutput& out)
{
  namespace fs = std::filesystem;
  const auto hash = config_hash(cfg);
  const auto seed = std::to_string(cfg.seed);
  auto emit = [&](const std::string& rel, const std::string& text) {
    const fs::path p = out.dir / rel;
    fs::create_directories(p.parent_path());
    write_text_file(p.string(), text);
    out.files.push_back(rel);
  };
  auto key = [&](const CellResult& c) {
    return std::vector<std::string>{std::string(to_string(c.attack)),
                                    std::string(to_string(c.cell.modality)),
                                    format_ratio(c.cell.ratio)};
  };
  auto with = [](std::vector<std::string> a, const std::vector<std::string>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
  };
  const std::vector<std::string> key_cols = {"attack", "modality", "rho"};
  const std::vector<std::string> tail_cols = {"seed", "config_hash"};
  const std::vector<std::string> tail = {seed, hash};

  // Full metric table: BBox, SS, SS_t, ED, ED_t on clean and triggered inputs.
  std::string metrics = csv_row(with(with(key_cols, {"n_poisoned", "n_eval",
    "bbox_clean", "ss_clean", "ss_t_clean", "ed_clean", "ed_t_clean",
    "bbox_triggered", "ss_triggered", "ss_t_triggered", "ed_triggered", "ed_t_triggered"}), tail_cols));
  std::string bbox = csv_row(with(with(key_cols, {"bbox_clean", "bbox_triggered"}), tail_cols));
  std::string delay = csv_row(with(with(key_cols, {"achieved_delay_ms", "ss_clean"}), tail_cols));
  std::string detection = csv_row(with(with(key_cols, {"n_poisoned", "flagged", "true_flags",
    "precision", "recall", "small_cluster", "silhouette", "size_gate", "silhouette_gate"}), tail_cols));
  std::string duration = csv_row(with(with(key_cols, {"n", "u", "p_two_sided", "exact",
    "mean_clean_ms", "mean_triggered_ms"}), tail_cols));
  std::string frequent = csv_row(with(with(key_cols, {"rank", "x", "y", "count"}), tail_cols));

  for (const auto& c : cells) {
    const auto k = key(c);
    metrics += csv_row(with(with(k, {std::to_string(c.n_poisoned), std::to_string(c.clean.n),
      detail::opt_cell(c.clean.bbox_hit_ratio), detail::opt_cell(c.clean.ss), detail::opt_cell(c.clean.ss_t),
      detail::opt_cell(c.clean.ed), detail::opt_cell(c.clean.ed_t),
      detail::opt_cell(c.triggered.bbox_hit_ratio), detail::opt_cell(c.triggered.ss), detail::opt_cell(c.triggered.ss_t),
      detail::opt_cell(c.triggered.ed), detail::opt_cell(c.triggered.ed_t)}), tail));
    bbox += csv_row(with(with(k, {detail::opt_cell(c.clean.bbox_hit_ratio),
                                  detail::opt_cell(c.triggered.bbox_hit_ratio)}), tail));
    delay += csv_row(with(with(k, {format_double(c.achieved_delay_ms), detail::opt_cell(c.clean.ss)}), tail));
    const auto flagged = c.clusters.flagged.size();
    const double precision = flagged ? static_cast<double>(c.true_flags) / static_cast<double>(flagged) : 0.0;
    const double recall = c.n_poisoned ? static_cast<double>(c.true_flags) / static_cast<double>(c.n_poisoned) : 0.0;
    detection += csv_row(with(with(k, {std::to_string(c.n_poisoned), std::to_string(flagged),
      std::to_string(c.true_flags), format_double(precision), format_double(recall),
      std::to_string(c.clusters.small_size), format_double(c.clusters.silhouette),
      c.clusters.size_gate ? "1" : "0", c.clusters.silhouette_gate ? "1" : "0"}), tail));
    const auto n_eval = c.clean.n;
    double mean_c = 0.0, mean_t = 0.0;
    if (!c.preds_clean.empty()) {
      std::vector<double> tc, tt;
      for (const auto& [id, p] : c.preds_clean)
        tc.push_back(total_duration(p));
      for (const auto& [id, p] : c.preds_triggered)
        tt.push_back(total_duration(p));
      mean_c = pairwise_mean(tc);
      mean_t = pairwise_mean(tt);
    }
    duration += csv_row(with(with(k, {std::to_string(n_eval), format_double(c.utest.u),
      format_double(c.utest.p_two_sided), c.utest.exact ? "1" : "0",
      format_double(mean_c), format_double(mean_t)}), tail));
    for (std::size_t i = 0; i < c.frequent.size(); ++i) {
      const auto& f = c.frequent[i];
      frequent += csv_row(with(with(k, {std::to_string(i + 1), std::to_string(f.x),
                                        std::to_string(f.y), std::to_string(f.count)}), tail));
    }
  }
  emit("metrics.csv", metrics);
  emit("bbox_hit.csv", bbox);
  emit("achieved_delay.csv", delay);
  emit("detection.csv", detection);
  emit("duration_test.csv", duration);
  emit("frequent_fixations.csv", frequent);

  for (const auto& c : cells) {
    const auto name = cell_name(c.attack, c.cell);
    std::string kde = csv_row({"duration_ms", "density_clean", "density_triggered", "seed", "config_hash"});
    for (std::size_t i = 0; i < c.kde_grid.size(); ++i)
      kde += csv_row({format_double(c.kde_grid[i]), format_double(c.kde_clean[i]),
                      format_double(c.kde_triggered[i]), seed, hash});
    emit("cells/" + name + "/kde.csv", kde);
    emit("cells/" + name + "/heatmap.csv", heatmap_csv(c.heatmap));
    fs::create_directories(out.dir / "cells" / name);
    write_heatmap_png(c.heatmap, (out.dir / "cells" / name / "heatmap.png").string());
    out.files.push_back("cells/" + name + "/heatmap.png");
    if (!cfg.write_cell_files)
      continue;
    emit("cells/" + name + "/poisoned_dataset.json", dump_dataset(*c.poisoned));
    emit("cells/" + name + "/predictions_clean.json", dump_predictions(c.preds_clean));
    emit("cells/" + name + "/predictions_triggered.json", dump_predictions(c.preds_triggered));
    emit("cells/" + name + "/activations.csv", dump_activations(*c.activations));
    json flags = {{"flagged", c.clusters.flagged}, {"silhouette", c.clusters.silhouette},
                  {"seed", cfg.seed}, {"config_hash", hash}};
    emit("cells/" + name + "/flags.json", flags.dump(1) + "\n");
  }

  json manifest;
  manifest["tool"] = "spb";
  manifest["version"] = tool_version;
  manifest["seed"] = cfg.seed;
  manifest["config_hash"] = hash;
  manifest["config"] = experiment_to_json(cfg);
  manifest["cells"] = json::array();
  for (const auto& c : cells)
    manifest["cells"].push_back({{"name", cell_name(c.attack, c.cell)}, {"seed", detail::hex64(c.seed)}});
  manifest["files"] = out.files;
  emit("manifest.json", manifest.dump(1) + "\n");
}

/// Runs every (attack, modality, rho) cell on a bounded worker pool and
/// writes the report directory. Cell results are written in sweep order,
/// so output is independent of `jobs`.
inline PipelineOutput run_pipeline(const ExperimentConfig& cfg)
{
  try {
    validate_experiment(cfg);
  } catch (const Error& e) {
    throw StageError(Stage::config, e.what());
  }
  const auto inputs = load_pipeline_inputs(cfg);

  struct Task
  {
    AttackKind attack;
    SweepCell cell;
  };
  std::vector<Task> tasks;
  for (auto a : cfg.attacks)
    for (const auto& c : cfg.sweep)
      tasks.push_back({a, c});

  std::vector<std::optional<CellResult>> results(tasks.size());
  std::vector<std::exception_ptr> errors(tasks.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < tasks.size(); i = next++) {
      try {
        results[i] = run_cell(cfg, inputs, tasks[i].attack, tasks[i].cell);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto n_workers = std::min(cfg.jobs, tasks.size());
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < n_workers; ++w)
    pool.emplace_back(worker);
  worker();
  for (auto& t : pool)
    t.join();
  for (auto& e : errors)
    if (e)
      std::rethrow_exception(e);

  PipelineOutput out;
  out.dir = cfg.output_dir;
  for (auto& r : results)
    out.cells.push_back(std::move(*r));
  try {
    std::filesystem::create_directories(out.dir);
    write_reports(cfg, out.cells, out);
  } catch (const Error& e) {
    throw StageError(Stage::report, e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    throw StageError(Stage::report, e.what());
  }
  return out;
}

} // namespace spb
