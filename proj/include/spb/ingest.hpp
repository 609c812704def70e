#pragma once

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "json.hpp"

#include "spb/activations.hpp"
#include "spb/core.hpp"
#include "spb/error.hpp"
#include "spb/trigger_spec.hpp"

namespace spb {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Text helpers
// ---------------------------------------------------------------------------

/// Shortest decimal form that parses back to exactly `v`.
inline std::string format_double(double v)
{
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{})
    throw FormatError("cannot format floating-point value");
  return std::string(buf, end);
}

inline std::string read_text_file(const std::string& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw IoError("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::string& path, std::string_view text)
{
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw IoError("cannot open '" + path + "' for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out)
    throw IoError("write to '" + path + "' failed");
}

namespace detail {

inline std::size_t line_of_byte(std::string_view text, std::size_t byte)
{
  std::size_t line = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i)
    line += text[i] == '\n';
  return line;
}

inline json parse_json_text(const std::string& text,
                            const std::string& source,
                            const json::parser_callback_t& cb = nullptr)
{
  try {
    return json::parse(text, cb);
  } catch (const json::parse_error& e) {
    throw FormatError(source + ": JSON parse error at line " +
                      std::to_string(line_of_byte(text, e.byte)) + ": " + e.what());
  }
}

inline std::string record_label(std::size_t index, const std::string& id)
{
  return "record " + std::to_string(index) + (id.empty() ? "" : " (id '" + id + "')");
}

inline double number_field(const json& j, const char* key, const std::string& where)
{
  if (!j.contains(key) || !j.at(key).is_number())
    throw FormatError(where + ": field '" + key + "' must be a number");
  return j.at(key).get<double>();
}

inline std::vector<double> number_array(const json& j, const char* key, const std::string& where)
{
  if (!j.contains(key) || !j.at(key).is_array())
    throw FormatError(where + ": field '" + key + "' must be an array of numbers");
  std::vector<double> out;
  for (const auto& v : j.at(key)) {
    if (!v.is_number())
      throw FormatError(where + ": field '" + key + "' contains a non-number");
    out.push_back(v.get<double>());
  }
  return out;
}

inline std::string string_field(const json& j, const char* key, const std::string& where)
{
  if (!j.contains(key) || !j.at(key).is_string())
    throw FormatError(where + ": field '" + key + "' must be a string");
  return j.at(key).get<std::string>();
}

inline BBox bbox_from_json(const json& j, const std::string& where)
{
  if (!j.is_array() || j.size() != 4)
    throw FormatError(where + ": bbox must be [x, y, w, h]");
  for (const auto& v : j)
    if (!v.is_number())
      throw FormatError(where + ": bbox entries must be numbers");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

inline json bbox_to_json(const BBox& b)
{
  return json::array({b.x, b.y, b.w, b.h});
}

inline Scanpath zip_scanpath(const json& rec, const std::string& where)
{
  const auto xs = number_array(rec, "X", where);
  const auto ys = number_array(rec, "Y", where);
  const auto ts = number_array(rec, "T", where);
  if (xs.size() != ys.size() || xs.size() != ts.size())
    throw StructuralError(where + ": X/Y/T lengths differ (" + std::to_string(xs.size()) +
                          "/" + std::to_string(ys.size()) + "/" + std::to_string(ts.size()) + ")");
  Scanpath p;
  p.reserve(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i)
    p.push_back({xs[i], ys[i], ts[i]});
  return p;
}

inline void put_scanpath(json& rec, const Scanpath& p)
{
  json xs = json::array(), ys = json::array(), ts = json::array();
  for (const auto& f : p) {
    xs.push_back(f.x);
    ys.push_back(f.y);
    ts.push_back(f.t);
  }
  rec["X"] = std::move(xs);
  rec["Y"] = std::move(ys);
  rec["T"] = std::move(ts);
}

} // namespace detail

// ---------------------------------------------------------------------------
// Trigger specs
// ---------------------------------------------------------------------------

inline json trigger_to_json(const TriggerSpec& t)
{
  json j;
  j["modality"] = to_string(t.modality);
  if (t.patch) {
    const auto& p = *t.patch;
    json pj{{"shape", to_string(p.shape)},
            {"size_px", p.size_px},
            {"color", json::array({p.color[0], p.color[1], p.color[2]})},
            {"anchor", to_string(p.anchor)}};
    if (p.anchor == AnchorKind::explicit_xy) {
      pj["x"] = p.anchor_x;
      pj["y"] = p.anchor_y;
    }
    j["patch"] = std::move(pj);
  }
  if (t.token) {
    j["token"] = {{"kind", to_string(t.token->kind)},
                  {"text", t.token->text},
                  {"placement", to_string(t.token->placement)}};
  }
  return j;
}

inline TriggerSpec trigger_from_json(const json& j, const std::string& where = "trigger")
{
  if (!j.is_object())
    throw FormatError(where + ": trigger must be an object");
  try {
    TriggerSpec t;
    t.modality = modality_from_string(detail::string_field(j, "modality", where));
    if (j.contains("patch")) {
      const auto& pj = j.at("patch");
      PatchSpec p;
      p.shape = shape_from_string(detail::string_field(pj, "shape", where));
      p.size_px = static_cast<int>(detail::number_field(pj, "size_px", where));
      const auto& c = pj.at("color");
      if (!c.is_array() || c.size() != 3)
        throw FormatError(where + ": patch.color must be [r, g, b]");
      for (std::size_t i = 0; i < 3; ++i) {
        const int v = c[i].get<int>();
        if (v < 0 || v > 255)
          throw FormatError(where + ": patch.color entries must lie in [0, 255]");
        p.color[i] = static_cast<std::uint8_t>(v);
      }
      p.anchor = anchor_from_string(detail::string_field(pj, "anchor", where));
      if (p.anchor == AnchorKind::explicit_xy) {
        p.anchor_x = static_cast<int>(detail::number_field(pj, "x", where));
        p.anchor_y = static_cast<int>(detail::number_field(pj, "y", where));
      }
      t.patch = p;
    }
    if (j.contains("token")) {
      const auto& tj = j.at("token");
      TokenSpec k;
      k.kind = token_kind_from_string(detail::string_field(tj, "kind", where));
      k.text = detail::string_field(tj, "text", where);
      k.placement = placement_from_string(detail::string_field(tj, "placement", where));
      t.token = k;
    }
    if (auto why = trigger_violation(t); !why.empty())
      throw FormatError(where + ": " + why);
    return t;
  } catch (const ConfigError& e) {
    throw FormatError(where + ": " + e.what());
  } catch (const json::exception& e) {
    throw FormatError(where + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

inline Sample sample_from_json(const json& rec, std::size_t index)
{
  std::string id;
  if (rec.is_object() && rec.contains("id") && rec.at("id").is_string())
    id = rec.at("id").get<std::string>();
  auto where = detail::record_label(index, id);
  if (!rec.is_object())
    throw FormatError(where + ": record must be an object");

  Sample s;
  const auto name = detail::string_field(rec, "name", where);
  s.task = detail::string_field(rec, "task", where);
  if (rec.contains("subject") && !rec.at("subject").is_null()) {
    const auto& sub = rec.at("subject");
    s.subject = sub.is_string() ? sub.get<std::string>() : sub.dump();
  }
  // COCO-Search18 repeats image names across subjects and tasks.
  if (id.empty())
    id = s.subject ? name + "/" + s.task + "/" + *s.subject : name;
  s.id = id;
  where = detail::record_label(index, id);
  s.image_ref = rec.contains("image") ? detail::string_field(rec, "image", where) : name;

  if (!rec.contains("bbox"))
    throw FormatError(where + ": missing bbox (target-absent records are unsupported)");
  s.bbox = detail::bbox_from_json(rec.at("bbox"), where);
  s.scanpath = detail::zip_scanpath(rec, where);

  if (rec.contains("poisoned")) {
    if (!rec.at("poisoned").is_boolean())
      throw FormatError(where + ": field 'poisoned' must be a boolean");
    s.poisoned = rec.at("poisoned").get<bool>();
  }
  if (rec.contains("trigger") && !rec.at("trigger").is_null())
    s.trigger = trigger_from_json(rec.at("trigger"), where + " trigger");
  if (rec.contains("attack_tag") && !rec.at("attack_tag").is_null()) {
    try {
      s.attack_tag = attack_from_string(detail::string_field(rec, "attack_tag", where));
    } catch (const ConfigError& e) {
      throw FormatError(where + ": " + e.what());
    }
  }
  if (s.poisoned != s.trigger.has_value() || s.poisoned != s.attack_tag.has_value())
    throw StructuralError(where + ": poisoned, trigger and attack_tag must be present together");
  if (rec.contains("objects")) {
    const auto& objs = rec.at("objects");
    if (!objs.is_object())
      throw FormatError(where + ": 'objects' must map category to bbox");
    for (const auto& [cat, box] : objs.items())
      s.objects.emplace(cat, detail::bbox_from_json(box, where + " objects." + cat));
  }
  return s;
}

inline json sample_to_json(const Sample& s)
{
  json rec;
  rec["id"] = s.id;
  rec["name"] = s.image_ref;
  rec["task"] = s.task;
  if (s.subject)
    rec["subject"] = *s.subject;
  rec["bbox"] = detail::bbox_to_json(s.bbox);
  detail::put_scanpath(rec, s.scanpath);
  rec["poisoned"] = s.poisoned;
  if (s.trigger)
    rec["trigger"] = trigger_to_json(*s.trigger);
  if (s.attack_tag)
    rec["attack_tag"] = to_string(*s.attack_tag);
  if (!s.objects.empty()) {
    json objs = json::object();
    for (const auto& [cat, box] : s.objects)
      objs[cat] = detail::bbox_to_json(box);
    rec["objects"] = std::move(objs);
  }
  return rec;
}

/// Parses a dataset document: either a bare array of records or an object
/// {canvas: {width, height}, tasks: [...], samples: [...]}.
inline Dataset parse_dataset(const std::string& text, const std::string& source = "dataset")
{
  const json doc = detail::parse_json_text(text, source);
  Dataset d;
  const json* records = &doc;
  if (doc.is_object()) {
    if (doc.contains("canvas")) {
      const auto& c = doc.at("canvas");
      d.canvas.width = detail::number_field(c, "width", source + " canvas");
      d.canvas.height = detail::number_field(c, "height", source + " canvas");
    }
    if (doc.contains("tasks")) {
      for (const auto& t : doc.at("tasks")) {
        if (!t.is_string())
          throw FormatError(source + ": 'tasks' must be an array of strings");
        d.task_vocabulary.insert(t.get<std::string>());
      }
    }
    if (!doc.contains("samples") || !doc.at("samples").is_array())
      throw FormatError(source + ": missing 'samples' array");
    records = &doc.at("samples");
  } else if (!doc.is_array()) {
    throw FormatError(source + ": expected an array of records or a dataset object");
  }

  std::set<std::string> ids;
  d.samples.reserve(records->size());
  for (std::size_t i = 0; i < records->size(); ++i) {
    auto s = sample_from_json((*records)[i], i);
    if (!ids.insert(s.id).second)
      throw StructuralError(source + ": " + detail::record_label(i, s.id) + ": duplicate id");
    d.task_vocabulary.insert(s.task);
    d.samples.push_back(std::move(s));
  }
  return d;
}

inline Dataset load_dataset(const std::string& path)
{
  return parse_dataset(read_text_file(path), path);
}

inline std::string dump_dataset(const Dataset& d)
{
  json doc;
  doc["canvas"] = {{"width", d.canvas.width}, {"height", d.canvas.height}};
  doc["tasks"] = json::array();
  for (const auto& t : d.task_vocabulary)
    doc["tasks"].push_back(t);
  doc["samples"] = json::array();
  for (const auto& s : d.samples)
    doc["samples"].push_back(sample_to_json(s));
  return doc.dump(1) + "\n";
}

inline void save_dataset(const Dataset& d, const std::string& path)
{
  write_text_file(path, dump_dataset(d));
}

// ---------------------------------------------------------------------------
// Predictions
// ---------------------------------------------------------------------------

/// Parses {id: {X, Y, T}}. Duplicate ids, ragged arrays, and scanpaths that
/// fail validation (empty, too long, non-positive durations, non-finite
/// coordinates) are rejected.
inline PredictionSet parse_predictions(const std::string& text,
                                       const std::string& source = "predictions",
                                       std::size_t max_len = default_max_len)
{
  std::string duplicate;
  std::set<std::string> seen;
  const json::parser_callback_t cb = [&](int depth, json::parse_event_t event, json& parsed) {
    if (event == json::parse_event_t::key && depth == 1) {
      auto key = parsed.get<std::string>();
      if (!seen.insert(key).second && duplicate.empty())
        duplicate = key;
    }
    return true;
  };
  const json doc = detail::parse_json_text(text, source, cb);
  if (!duplicate.empty())
    throw StructuralError(source + ": duplicate prediction id '" + duplicate + "'");
  if (!doc.is_object())
    throw FormatError(source + ": expected an object mapping id to {X, Y, T}");

  PredictionSet out;
  for (const auto& [id, rec] : doc.items()) {
    const auto where = source + ": prediction '" + id + "'";
    if (!rec.is_object())
      throw FormatError(where + ": expected {X, Y, T}");
    auto p = detail::zip_scanpath(rec, where);
    if (p.empty() || p.size() > max_len)
      throw StructuralError(where + ": length " + std::to_string(p.size()) +
                            " outside [1, " + std::to_string(max_len) + "]");
    for (const auto& f : p)
      if (!std::isfinite(f.x) || !std::isfinite(f.y) || !(f.t > 0.0))
        throw StructuralError(where + ": fixation with non-finite position or t <= 0");
    out.emplace(id, std::move(p));
  }
  return out;
}

inline PredictionSet load_predictions(const std::string& path,
                                      std::size_t max_len = default_max_len)
{
  return parse_predictions(read_text_file(path), path, max_len);
}

inline std::string dump_predictions(const PredictionSet& preds)
{
  json doc = json::object();
  for (const auto& [id, p] : preds) {
    json rec;
    detail::put_scanpath(rec, p);
    doc[id] = std::move(rec);
  }
  return doc.dump(1) + "\n";
}

inline void save_predictions(const PredictionSet& preds, const std::string& path)
{
  write_text_file(path, dump_predictions(preds));
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::string> split_csv_line(std::string_view line)
{
  std::vector<std::string> cells;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  cells.push_back(std::move(cur));
  return cells;
}

inline std::optional<double> parse_number(std::string_view cell)
{
  while (!cell.empty() && (cell.front() == ' ' || cell.front() == '\t'))
    cell.remove_prefix(1);
  while (!cell.empty() && (cell.back() == ' ' || cell.back() == '\t' || cell.back() == '\r'))
    cell.remove_suffix(1);
  if (!cell.empty() && cell.front() == '+')
    cell.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc{} || ptr != cell.data() + cell.size() || cell.empty())
    return std::nullopt;
  return v;
}

} // namespace detail

inline std::string csv_escape(std::string_view cell)
{
  if (cell.find_first_of(",\"\n\r") == std::string_view::npos)
    return std::string(cell);
  std::string out = "\"";
  for (char c : cell) {
    if (c == '"')
      out += '"';
    out += c;
  }
  out += '"';
  return out;
}

inline std::string csv_row(const std::vector<std::string>& cells)
{
  std::string out;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i)
      out += ',';
    out += csv_escape(cells[i]);
  }
  out += '\n';
  return out;
}

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

inline ActivationMatrix parse_activations(const std::string& text,
                                          const std::string& source = "activations")
{
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  ActivationMatrix m;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r')
      line.pop_back();
    if (line.empty())
      continue;
    const auto cells = detail::split_csv_line(line);
    const auto where = source + ": line " + std::to_string(line_no);
    if (!have_header) {
      if (cells.empty() || cells[0] != "id")
        throw FormatError(where + ": header must start with 'id'");
      if (cells.size() < 3)
        throw FormatError(where + ": need at least 2 numeric columns");
      m.dim = cells.size() - 1;
      have_header = true;
      continue;
    }
    if (cells.size() != m.dim + 1)
      throw StructuralError(where + ": expected " + std::to_string(m.dim + 1) +
                            " cells, found " + std::to_string(cells.size()));
    for (std::size_t k = 1; k < cells.size(); ++k) {
      const auto v = detail::parse_number(cells[k]);
      if (!v)
        throw FormatError(where + " (id '" + cells[0] + "'): non-numeric cell '" + cells[k] + "'");
      if (!std::isfinite(*v))
        throw FormatError(where + " (id '" + cells[0] + "'): NaN or infinite value");
      m.values.push_back(*v);
    }
    m.ids.push_back(cells[0]);
  }
  if (!have_header)
    throw FormatError(source + ": empty activation file");
  return m;
}

inline ActivationMatrix load_activations(const std::string& path)
{
  return parse_activations(read_text_file(path), path);
}

inline std::string dump_activations(const ActivationMatrix& m)
{
  std::string out = "id";
  for (std::size_t k = 0; k < m.dim; ++k)
    out += ",d" + std::to_string(k);
  out += '\n';
  for (std::size_t i = 0; i < m.rows(); ++i) {
    out += csv_escape(m.ids[i]);
    for (double v : m.row(i)) {
      out += ',';
      out += format_double(v);
    }
    out += '\n';
  }
  return out;
}

inline void save_activations(const ActivationMatrix& m, const std::string& path)
{
  write_text_file(path, dump_activations(m));
}

} // namespace spb
