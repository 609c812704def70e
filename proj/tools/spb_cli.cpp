// spb: command-line front end for the scanpath backdoor toolkit.
//
// Exit codes: 0 success, 1 unexpected failure, 2 usage/config, 3 ingest
// (I/O or malformed input), 4 poison, 5 simulate, 6 eval, 7 detect,
// 8 report writing.

#include <cstdint>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "spb/pipeline.hpp"
#include "spb/png_io.hpp"
#include "spb/spb.hpp"

namespace {

using namespace spb;

[[noreturn]] void fail(Stage stage, const std::string& msg)
{
  throw StageError(stage, msg);
}

template <typename F>
auto in_stage(Stage stage, F&& f) -> decltype(f())
{
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const Error& e) {
    fail(stage, e.what());
  }
}

std::pair<int, int> parse_grid(const std::string& s)
{
  const auto x = s.find('x');
  if (x == std::string::npos)
    throw ConfigError("grid must look like COLSxROWS, got '" + s + "'");
  try {
    return {std::stoi(s.substr(0, x)), std::stoi(s.substr(x + 1))};
  } catch (const std::exception&) {
    throw ConfigError("grid must look like COLSxROWS, got '" + s + "'");
  }
}

Rgb parse_color(const std::string& s)
{
  Rgb c{};
  int r, g, b;
  if (std::sscanf(s.c_str(), "%d,%d,%d", &r, &g, &b) != 3 || r < 0 || r > 255 || g < 0 ||
      g > 255 || b < 0 || b > 255)
    throw ConfigError("color must be R,G,B with components in [0, 255]");
  c[0] = static_cast<std::uint8_t>(r);
  c[1] = static_cast<std::uint8_t>(g);
  c[2] = static_cast<std::uint8_t>(b);
  return c;
}

struct TriggerOptions
{
  std::string modality = "vision";
  std::string shape = "square";
  int size = 128;
  std::string color = "255,255,255";
  std::string anchor = "top_center";
  std::optional<int> anchor_x, anchor_y;
  std::string token_kind = "zws";
  std::string token_text;
  std::string placement = "suffix";

  void add_to(CLI::App* cmd)
  {
    cmd->add_option("--trigger-modality", modality, "vision | language | multimodal")
      ->capture_default_str();
    cmd->add_option("--patch-shape", shape, "square | circle")->capture_default_str();
    cmd->add_option("--patch-size", size, "side (square) or radius (circle) in px")
      ->capture_default_str();
    cmd->add_option("--patch-color", color, "R,G,B")->capture_default_str();
    cmd->add_option("--patch-anchor", anchor, "top_center | bottom_right | center | explicit")
      ->capture_default_str();
    cmd->add_option("--patch-x", anchor_x, "explicit anchor x");
    cmd->add_option("--patch-y", anchor_y, "explicit anchor y");
    cmd->add_option("--token-kind", token_kind, "zws | word")->capture_default_str();
    cmd->add_option("--token-text", token_text, "word trigger text");
    cmd->add_option("--token-placement", placement, "prefix | suffix")->capture_default_str();
  }

  TriggerSpec build() const
  {
    auto spec = default_trigger(modality_from_string(modality));
    if (spec.patch) {
      spec.patch->shape = shape_from_string(shape);
      spec.patch->size_px = size;
      spec.patch->color = parse_color(color);
      spec.patch->anchor = anchor_from_string(anchor);
      if (spec.patch->anchor == AnchorKind::explicit_xy) {
        if (!anchor_x || !anchor_y)
          throw ConfigError("explicit anchor needs --patch-x and --patch-y");
        spec.patch->anchor_x = *anchor_x;
        spec.patch->anchor_y = *anchor_y;
      }
    }
    if (spec.token) {
      spec.token->kind = token_kind_from_string(token_kind);
      spec.token->placement = placement_from_string(placement);
      if (spec.token->kind == TokenKind::word) {
        if (token_text.empty())
          throw ConfigError("word trigger needs --token-text");
        spec.token->text = token_text;
      }
    }
    if (auto why = trigger_violation(spec); !why.empty())
      throw ConfigError(why);
    return spec;
  }
};

void write_json(const std::string& path, const json& j)
{
  write_text_file(path, j.dump(1) + "\n");
}

std::vector<std::string> ids_of(const Dataset& d, Subset subset)
{
  std::vector<std::string> ids;
  for (const auto& s : d.samples)
    if (in_subset(s, subset))
      ids.push_back(s.id);
  return ids;
}

} // namespace

int main(int argc, char** argv)
{
  CLI::App app{"Backdoor construction, evaluation and detection toolkit for scanpath prediction"};
  app.set_version_flag("--version", std::string(tool_version));
  app.require_subcommand(1);
  app.fallthrough();

  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> jobs;
  std::string config_path;
  app.add_option("--seed", seed, "global seed (overrides the config file)");
  app.add_option("--jobs", jobs, "worker threads for `run` (overrides the config file)");
  app.add_option("--config", config_path, "experiment config (JSON) for `run`");

  // poison -------------------------------------------------------------------
  auto* poison = app.add_subcommand("poison", "Poison a dataset with one attack");
  std::string p_dataset, p_out, p_attack = "fixed_path", p_ref;
  std::string p_target = "knife";
  double p_ratio = 0.05, p_delta = 200.0;
  std::size_t p_insert = 2;
  TriggerOptions p_trig;
  poison->add_option("--dataset", p_dataset, "clean dataset JSON")->required();
  poison->add_option("--ratio", p_ratio, "poisoning ratio in (0, 1]")->capture_default_str();
  poison->add_option("--attack", p_attack, "fixed_path | spatial | duration_inflate | fixation_insert")
    ->capture_default_str();
  poison->add_option("--delta-t", p_delta, "duration_inflate delay (ms)")->capture_default_str();
  poison->add_option("--n-insert", p_insert, "fixation_insert count")->capture_default_str();
  poison->add_option("--poison-target", p_target, "spatial poison target")->capture_default_str();
  poison->add_option("--ref-predictions", p_ref, "file-backed reference predictions (spatial)");
  poison->add_option("--out", p_out, "poisoned dataset JSON")->required();
  p_trig.add_to(poison);

  // stamp ----------------------------------------------------------------------
  auto* stamp = app.add_subcommand("stamp", "Paint a visual trigger into a PNG");
  std::string s_in, s_out;
  TriggerOptions s_trig;
  stamp->add_option("--in", s_in, "input PNG")->required();
  stamp->add_option("--out", s_out, "output PNG")->required();
  s_trig.add_to(stamp);

  // simulate -------------------------------------------------------------------
  auto* simulate = app.add_subcommand("simulate", "Run the simulated backdoored predictor");
  std::string m_dataset, m_attack = "fixed_path", m_preds, m_acts, m_ref;
  std::string m_target = "knife";
  double m_noise_pos = 5.0, m_noise_dur = 10.0, m_delta = 200.0;
  std::size_t m_dim = 32, m_insert = 2;
  TriggerOptions m_trig;
  simulate->add_option("--dataset", m_dataset, "dataset JSON")->required();
  simulate->add_option("--attack", m_attack, "attack the simulated model was poisoned with")
    ->capture_default_str();
  simulate->add_option("--noise-pos", m_noise_pos, "output position noise sigma (px)")
    ->capture_default_str();
  simulate->add_option("--noise-dur", m_noise_dur, "output duration noise sigma (ms)")
    ->capture_default_str();
  simulate->add_option("--delta-t", m_delta, "duration_inflate delay (ms)")->capture_default_str();
  simulate->add_option("--n-insert", m_insert, "fixation_insert count")->capture_default_str();
  simulate->add_option("--poison-target", m_target, "spatial poison target")->capture_default_str();
  simulate->add_option("--activation-dim", m_dim, "activation vector size")->capture_default_str();
  simulate->add_option("--ref-predictions", m_ref, "file-backed reference predictions");
  simulate->add_option("--out-predictions", m_preds, "predictions JSON");
  simulate->add_option("--out-activations", m_acts, "activation CSV");
  m_trig.add_to(simulate);

  // eval -------------------------------------------------------------------------
  auto* eval = app.add_subcommand("eval", "Score predictions against a dataset");
  std::string e_dataset, e_preds, e_subset = "all", e_grid = "8x5", e_out, e_clean;
  double e_bin = 50.0;
  eval->add_option("--dataset", e_dataset, "dataset JSON")->required();
  eval->add_option("--predictions", e_preds, "predictions JSON")->required();
  eval->add_option("--subset", e_subset, "clean | poisoned | all")->capture_default_str();
  eval->add_option("--grid", e_grid, "COLSxROWS")->capture_default_str();
  eval->add_option("--time-bin", e_bin, "SS_t/ED_t time bin (ms)")->capture_default_str();
  eval->add_option("--clean-predictions", e_clean, "reference predictions for achieved delay");
  eval->add_option("--out", e_out, "report CSV")->required();

  // detect -------------------------------------------------------------------------
  auto* detect = app.add_subcommand("detect", "Activation clustering");
  std::string d_acts, d_out;
  ClusterConfig d_cfg;
  detect->add_option("--activations", d_acts, "activation CSV")->required();
  detect->add_option("--pca-dims", d_cfg.pca_dims)->capture_default_str();
  detect->add_option("--min-group", d_cfg.min_group)->capture_default_str();
  detect->add_option("--min-silhouette", d_cfg.min_silhouette)->capture_default_str();
  detect->add_option("--max-small-frac", d_cfg.max_small_frac)->capture_default_str();
  detect->add_option("--out", d_out, "flags JSON")->required();

  // heatmap --------------------------------------------------------------------------
  auto* heatmap = app.add_subcommand("heatmap", "Fixation heatmap and frequent fixations");
  std::string h_dataset, h_subset = "all", h_grid = "8x5", h_png, h_csv, h_freq;
  std::size_t h_top = 10;
  int h_cell = 32;
  heatmap->add_option("--dataset", h_dataset, "dataset JSON")->required();
  heatmap->add_option("--subset", h_subset, "clean | poisoned | all")->capture_default_str();
  heatmap->add_option("--grid", h_grid, "COLSxROWS")->capture_default_str();
  heatmap->add_option("--cell-px", h_cell, "PNG pixels per grid cell")->capture_default_str();
  heatmap->add_option("--out-png", h_png, "grayscale heatmap PNG");
  heatmap->add_option("--out-csv", h_csv, "cell counts CSV");
  heatmap->add_option("--top-k", h_top, "frequent fixations to list")->capture_default_str();
  heatmap->add_option("--out-frequent", h_freq, "frequent fixations CSV");

  // durationtest -----------------------------------------------------------------------
  auto* durtest = app.add_subcommand("durationtest", "Mann-Whitney U and KDE of total durations");
  std::string u_clean, u_trig, u_out, u_kde;
  std::size_t u_points = 200;
  durtest->add_option("--clean", u_clean, "clean predictions JSON")->required();
  durtest->add_option("--triggered", u_trig, "triggered predictions JSON")->required();
  durtest->add_option("--out", u_out, "(U, p) JSON")->required();
  durtest->add_option("--kde-out", u_kde, "KDE curve CSV");
  durtest->add_option("--kde-points", u_points)->capture_default_str();

  // fidelity ----------------------------------------------------------------------------
  auto* fidelity = app.add_subcommand("fidelity", "Deployment fidelity between two prediction sets");
  std::string f_mobile, f_server, f_out;
  MetricConfig f_cfg;
  fidelity->add_option("--mobile", f_mobile, "on-device predictions JSON")->required();
  fidelity->add_option("--server", f_server, "server predictions JSON")->required();
  fidelity->add_option("--pos-tol", f_cfg.fidelity_pos_tol, "px")->capture_default_str();
  fidelity->add_option("--dur-tol", f_cfg.fidelity_dur_tol, "ms")->capture_default_str();
  fidelity->add_option("--out", f_out, "result JSON")->required();

  // validate ------------------------------------------------------------------------------
  auto* validate = app.add_subcommand("validate", "Report invariant violations in a dataset");
  std::string v_dataset;
  std::size_t v_max_len = default_max_len;
  validate->add_option("--dataset", v_dataset, "dataset JSON")->required();
  validate->add_option("--max-len", v_max_len)->capture_default_str();

  // run ---------------------------------------------------------------------------------------
  auto* run = app.add_subcommand("run", "Full sweep: poison, simulate, eval, detect, report");
  std::string r_out;
  run->add_option("--out", r_out, "report directory (overrides the config file)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  const std::uint64_t base_seed = seed.value_or(0);

  try {
    if (*poison) {
      auto d = in_stage(Stage::ingest, [&] { return load_dataset(p_dataset); });
      PoisonConfig cfg = in_stage(Stage::config, [&] {
        PoisonConfig c;
        c.ratio = p_ratio;
        c.attack = attack_from_string(p_attack);
        c.trigger = p_trig.build();
        c.seed = base_seed;
        c.delta_t = p_delta;
        c.n_insert = p_insert;
        c.poison_target = p_target;
        c.validate();
        return c;
      });
      std::optional<ReferencePredictor> ref;
      if (cfg.attack == AttackKind::spatial) {
        ref = in_stage(Stage::ingest, [&] {
          if (!p_ref.empty())
            return ReferencePredictor::file_backed(load_predictions(p_ref));
          HeuristicParams hp;
          hp.seed = derive_seed(base_seed, "reference");
          hp.durations = DurationDistribution::from_dataset(d);
          return ReferencePredictor::heuristic(hp, d.canvas);
        });
      }
      std::optional<DurationDistribution> dist;
      if (cfg.attack == AttackKind::fixation_insert)
        dist = in_stage(Stage::poison, [&] { return DurationDistribution::from_dataset(d); });
      auto out = in_stage(Stage::poison, [&] {
        return poison_dataset(d, cfg, ref ? &*ref : nullptr, dist ? &*dist : nullptr);
      });
      in_stage(Stage::report, [&] { save_dataset(out, p_out); });
      std::size_t n = 0;
      for (const auto& s : out.samples)
        n += s.poisoned;
      std::cout << "poisoned " << n << " of " << out.samples.size() << " samples -> " << p_out << "\n";
    } else if (*stamp) {
      auto spec = in_stage(Stage::config, [&] { return s_trig.build(); });
      auto img = in_stage(Stage::ingest, [&] { return read_png(s_in); });
      auto out = in_stage(Stage::poison, [&] { return apply_visual_trigger(img, spec); });
      in_stage(Stage::report, [&] { write_png(out, s_out); });
    } else if (*simulate) {
      auto d = in_stage(Stage::ingest, [&] { return load_dataset(m_dataset); });
      BackdoorSimConfig cfg = in_stage(Stage::config, [&] {
        BackdoorSimConfig c;
        c.attack.attack = attack_from_string(m_attack);
        c.attack.trigger = m_trig.build();
        c.attack.delta_t = m_delta;
        c.attack.n_insert = m_insert;
        c.attack.poison_target = m_target;
        c.output_noise_pos = m_noise_pos;
        c.output_noise_dur = m_noise_dur;
        c.activation_dim = m_dim;
        c.seed = derive_seed(base_seed, "simulate");
        c.validate();
        return c;
      });
      auto dist = in_stage(Stage::ingest, [&] { return DurationDistribution::from_dataset(d); });
      auto ref = in_stage(Stage::ingest, [&] {
        if (!m_ref.empty())
          return ReferencePredictor::file_backed(load_predictions(m_ref));
        HeuristicParams hp;
        hp.seed = derive_seed(base_seed, "reference");
        hp.durations = dist;
        return ReferencePredictor::heuristic(hp, d.canvas);
      });
      if (m_preds.empty() && m_acts.empty())
        fail(Stage::config, "nothing to do: pass --out-predictions and/or --out-activations");
      if (!m_preds.empty()) {
        auto preds = in_stage(Stage::simulate, [&] { return predict_many(d, cfg, ref, &dist); });
        in_stage(Stage::report, [&] { save_predictions(preds, m_preds); });
      }
      if (!m_acts.empty()) {
        auto acts = in_stage(Stage::simulate, [&] { return synth_activations(d, cfg, ref, &dist); });
        in_stage(Stage::report, [&] { save_activations(acts, m_acts); });
      }
    } else if (*eval) {
      MetricConfig cfg = in_stage(Stage::config, [&] {
        MetricConfig c;
        std::tie(c.grid_cols, c.grid_rows) = parse_grid(e_grid);
        c.time_bin_ms = e_bin;
        c.validate();
        return c;
      });
      const auto subset = in_stage(Stage::config, [&] { return subset_from_string(e_subset); });
      auto d = in_stage(Stage::ingest, [&] { return load_dataset(e_dataset); });
      auto preds = in_stage(Stage::ingest, [&] { return load_predictions(e_preds); });
      auto report = in_stage(Stage::eval, [&] { return evaluate(preds, d, subset, cfg); });
      if (!e_clean.empty()) {
        auto clean = in_stage(Stage::ingest, [&] { return load_predictions(e_clean); });
        report.achieved_delay_ms =
          in_stage(Stage::eval, [&] { return achieved_delay(preds, clean, ids_of(d, subset)); });
      }
      auto cell = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
      std::string csv = csv_row({"subset", "n", "bbox", "ss", "ss_t", "ed", "ed_t", "achieved_delay_ms",
                                 "grid", "time_bin_ms"});
      csv += csv_row({std::string(to_string(subset)), std::to_string(report.n), cell(report.bbox_hit_ratio),
                      cell(report.ss), cell(report.ss_t), cell(report.ed), cell(report.ed_t),
                      cell(report.achieved_delay_ms), e_grid, format_double(cfg.time_bin_ms)});
      in_stage(Stage::report, [&] { write_text_file(e_out, csv); });
    } else if (*detect) {
      auto m = in_stage(Stage::ingest, [&] { return load_activations(d_acts); });
      d_cfg.seed = base_seed;
      auto r = in_stage(Stage::detect, [&] { return activation_clustering_detailed(m, d_cfg); });
      json j{{"flagged", r.flagged},
             {"n_flagged", r.flagged.size()},
             {"small_cluster", r.small_size},
             {"silhouette", r.silhouette},
             {"size_gate", r.size_gate},
             {"silhouette_gate", r.silhouette_gate},
             {"seed", base_seed}};
      in_stage(Stage::report, [&] { write_json(d_out, j); });
      std::cout << "flagged " << r.flagged.size() << " of " << m.rows() << " rows\n";
    } else if (*heatmap) {
      auto [cols, rows] = in_stage(Stage::config, [&] { return parse_grid(h_grid); });
      const auto subset = in_stage(Stage::config, [&] { return subset_from_string(h_subset); });
      auto d = in_stage(Stage::ingest, [&] { return load_dataset(h_dataset); });
      auto map = in_stage(Stage::detect, [&] { return fixation_heatmap(d, cols, rows, subset); });
      if (!h_png.empty())
        in_stage(Stage::report, [&] { write_heatmap_png(map, h_png, h_cell); });
      if (!h_csv.empty())
        in_stage(Stage::report, [&] { write_text_file(h_csv, heatmap_csv(map)); });
      if (!h_freq.empty()) {
        auto freq = in_stage(Stage::detect, [&] { return frequent_fixations(d, h_top, subset); });
        std::string csv = csv_row({"rank", "x", "y", "count"});
        for (std::size_t i = 0; i < freq.size(); ++i)
          csv += csv_row({std::to_string(i + 1), std::to_string(freq[i].x), std::to_string(freq[i].y),
                          std::to_string(freq[i].count)});
        in_stage(Stage::report, [&] { write_text_file(h_freq, csv); });
      }
    } else if (*durtest) {
      auto clean = in_stage(Stage::ingest, [&] { return load_predictions(u_clean); });
      auto trig = in_stage(Stage::ingest, [&] { return load_predictions(u_trig); });
      std::vector<double> a, b;
      for (const auto& [id, p] : clean)
        a.push_back(total_duration(p));
      for (const auto& [id, p] : trig)
        b.push_back(total_duration(p));
      auto r = in_stage(Stage::detect, [&] { return mann_whitney_u(a, b); });
      json j{{"u", r.u}, {"p_two_sided", r.p_two_sided}, {"exact", r.exact},
             {"n_clean", a.size()}, {"n_triggered", b.size()}};
      in_stage(Stage::report, [&] { write_json(u_out, j); });
      if (!u_kde.empty()) {
        in_stage(Stage::detect, [&] {
          std::vector<double> both = a;
          both.insert(both.end(), b.begin(), b.end());
          const auto grid = kde_grid(both, u_points);
          const auto da = kde_1d(a, grid);
          const auto db = kde_1d(b, grid);
          std::string csv = csv_row({"duration_ms", "density_clean", "density_triggered"});
          for (std::size_t i = 0; i < grid.size(); ++i)
            csv += csv_row({format_double(grid[i]), format_double(da[i]), format_double(db[i])});
          write_text_file(u_kde, csv);
        });
      }
      std::cout << "U = " << r.u << ", p = " << r.p_two_sided << "\n";
    } else if (*fidelity) {
      auto mobile = in_stage(Stage::ingest, [&] { return load_predictions(f_mobile); });
      auto server = in_stage(Stage::ingest, [&] { return load_predictions(f_server); });
      std::vector<std::string> ids;
      for (const auto& [id, p] : server)
        ids.push_back(id);
      auto r = in_stage(Stage::eval, [&] { return deployment_fidelity(mobile, server, f_cfg, ids); });
      json j{{"fidelity_pct", r.fidelity_pct}, {"mean_l2_px", r.mean_l2}, {"n", ids.size()}};
      in_stage(Stage::report, [&] { write_json(f_out, j); });
      std::cout << "fidelity " << r.fidelity_pct << "%, mean L2 " << r.mean_l2 << " px\n";
    } else if (*validate) {
      auto d = in_stage(Stage::ingest, [&] { return load_dataset(v_dataset); });
      const auto problems = validate_dataset(d, {v_max_len});
      for (const auto& p : problems)
        std::cout << p << "\n";
      std::cout << problems.size() << " violation(s) in " << d.samples.size() << " samples\n";
      return problems.empty() ? 0 : 3;
    } else if (*run) {
      // Precedence: built-in defaults < config file < command-line flags.
      auto cfg = in_stage(Stage::config, [&] {
        if (config_path.empty())
          throw ConfigError("`run` needs --config <file>");
        return experiment_from_json(
          detail::parse_json_text(read_text_file(config_path), config_path));
      });
      if (seed)
        cfg.seed = *seed;
      if (jobs)
        cfg.jobs = *jobs;
      if (!r_out.empty())
        cfg.output_dir = r_out;
      const auto out = run_pipeline(cfg);
      std::cout << "wrote " << out.files.size() << " files to " << out.dir.string()
                << " (config " << config_hash(cfg) << ")\n";
    }
  } catch (const StageError& e) {
    std::cerr << "spb: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "spb: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
