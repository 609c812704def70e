#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "spb/core.hpp"
#include "spb/error.hpp"
#include "spb/trigger_spec.hpp"

namespace spb {

/// Interleaved 8-bit RGB image, row-major, top row first.
struct Raster
{
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels; // width * height * 3

  Raster() = default;
  Raster(int w, int h, Rgb fill = {0, 0, 0})
    : width(w)
    , height(h)
    , pixels(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 3)
  {
    for (std::size_t i = 0; i < pixels.size(); i += 3) {
      pixels[i] = fill[0];
      pixels[i + 1] = fill[1];
      pixels[i + 2] = fill[2];
    }
  }

  Rgb at(int x, int y) const
  {
    const auto i = index(x, y);
    return {pixels[i], pixels[i + 1], pixels[i + 2]};
  }

  void set(int x, int y, Rgb c)
  {
    const auto i = index(x, y);
    pixels[i] = c[0];
    pixels[i + 1] = c[1];
    pixels[i + 2] = c[2];
  }

  friend bool operator==(const Raster&, const Raster&) = default;

private:
  std::size_t index(int x, int y) const
  {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
            static_cast<std::size_t>(x)) *
           3;
  }
};

inline PatchSpec default_patch()
{
  return PatchSpec{PatchShape::square, 128, {255, 255, 255},
                   AnchorKind::top_center, 0, 0};
}

inline TokenSpec default_token()
{
  return TokenSpec{TokenKind::zws, std::string(zws_utf8), Placement::suffix};
}

/// White 128x128 top-center patch, trailing zero-width space, or both.
inline TriggerSpec default_trigger(Modality modality)
{
  TriggerSpec spec;
  spec.modality = modality;
  if (modality != Modality::language)
    spec.patch = default_patch();
  if (modality != Modality::vision)
    spec.token = default_token();
  return spec;
}

/// Inserts the token into the task string. Zero-width spaces are attached
/// with no separator; words are joined with a single space. Applying twice
/// inserts twice.
inline std::string apply_text_trigger(std::string_view task,
                                      const TriggerSpec& spec)
{
  if (!spec.token)
    throw PreconditionError("apply_text_trigger: trigger has no text token");
  const auto& tok = *spec.token;
  const std::string_view text =
    tok.kind == TokenKind::zws ? zws_utf8 : std::string_view(tok.text);
  const std::string_view sep =
    tok.kind == TokenKind::word && !task.empty() ? " " : "";

  std::string out;
  out.reserve(task.size() + text.size() + sep.size());
  if (tok.placement == Placement::prefix) {
    out.append(text).append(sep).append(task);
  } else {
    out.append(task).append(sep).append(text);
  }
  return out;
}

/// Inverse of apply_text_trigger for a single application; returns the task
/// unchanged if the token is not where the spec places it.
inline std::string strip_text_trigger(std::string_view task,
                                      const TriggerSpec& spec)
{
  if (!spec.token)
    return std::string(task);
  const auto& tok = *spec.token;
  const std::string_view text =
    tok.kind == TokenKind::zws ? zws_utf8 : std::string_view(tok.text);
  const std::string sep = tok.kind == TokenKind::word ? " " : "";
  if (tok.placement == Placement::prefix) {
    const std::string head = std::string(text) + sep;
    if (task.starts_with(head))
      return std::string(task.substr(head.size()));
    if (task == text)
      return {};
  } else {
    const std::string tail = sep + std::string(text);
    if (task.ends_with(tail))
      return std::string(task.substr(0, task.size() - tail.size()));
    if (task == text)
      return {};
  }
  return std::string(task);
}

/// Number of Unicode code points in a UTF-8 string (continuation bytes are
/// not counted).
inline std::size_t codepoint_length(std::string_view s)
{
  std::size_t n = 0;
  for (unsigned char c : s)
    n += (c & 0xC0) != 0x80;
  return n;
}

struct PatchRegion
{
  // Squares: top-left corner. Circles: center.
  int x = 0;
  int y = 0;
};

/// Resolves the anchor to pixel coordinates and checks that the whole patch
/// fits inside a width x height image.
inline PatchRegion resolve_patch(const PatchSpec& patch, int width, int height)
{
  if (patch.size_px <= 0)
    throw PreconditionError("patch size_px must be > 0");
  const int s = patch.size_px;
  PatchRegion r;
  if (patch.shape == PatchShape::square) {
    switch (patch.anchor) {
      case AnchorKind::top_center: r = {(width - s) / 2, 0}; break;
      case AnchorKind::bottom_right: r = {width - s, height - s}; break;
      case AnchorKind::center: r = {(width - s) / 2, (height - s) / 2}; break;
      case AnchorKind::explicit_xy: r = {patch.anchor_x, patch.anchor_y}; break;
    }
    if (r.x < 0 || r.y < 0 || r.x + s > width || r.y + s > height)
      throw BoundsError("square patch of " + std::to_string(s) +
                        " px exceeds " + std::to_string(width) + "x" +
                        std::to_string(height) + " image at anchor " +
                        std::string(to_string(patch.anchor)));
  } else {
    // The disc spans [c - r, c + r] on both axes.
    switch (patch.anchor) {
      case AnchorKind::top_center: r = {width / 2, s}; break;
      case AnchorKind::bottom_right: r = {width - 1 - s, height - 1 - s}; break;
      case AnchorKind::center: r = {width / 2, height / 2}; break;
      case AnchorKind::explicit_xy: r = {patch.anchor_x, patch.anchor_y}; break;
    }
    if (r.x - s < 0 || r.y - s < 0 || r.x + s >= width || r.y + s >= height)
      throw BoundsError("circle patch of radius " + std::to_string(s) +
                        " px exceeds " + std::to_string(width) + "x" +
                        std::to_string(height) + " image at anchor " +
                        std::string(to_string(patch.anchor)));
  }
  return r;
}

/// Returns a copy of `image` with the patch painted in. Exactly the pixels
/// inside the patch change: size_px^2 for squares, and every (i, j) with
/// (i - cx)^2 + (j - cy)^2 <= r^2 for circles.
inline Raster apply_visual_trigger(const Raster& image, const TriggerSpec& spec)
{
  if (!spec.patch)
    throw PreconditionError("apply_visual_trigger: trigger has no patch");
  const auto& patch = *spec.patch;
  const auto origin = resolve_patch(patch, image.width, image.height);
  Raster out = image;
  const int s = patch.size_px;
  if (patch.shape == PatchShape::square) {
    for (int y = origin.y; y < origin.y + s; ++y)
      for (int x = origin.x; x < origin.x + s; ++x)
        out.set(x, y, patch.color);
  } else {
    const long r2 = static_cast<long>(s) * s;
    for (int y = origin.y - s; y <= origin.y + s; ++y) {
      for (int x = origin.x - s; x <= origin.x + s; ++x) {
        const long dx = x - origin.x;
        const long dy = y - origin.y;
        if (dx * dx + dy * dy <= r2)
          out.set(x, y, patch.color);
      }
    }
  }
  return out;
}

/// Attaches trigger metadata to a clean sample. Text tokens are written into
/// the task string; image_ref is left alone because pixel stamping is a
/// separate step.
inline Sample mark_triggered(const Sample& s,
                             const TriggerSpec& spec,
                             AttackKind attack = AttackKind::fixed_path)
{
  if (s.poisoned || s.trigger)
    throw PreconditionError("mark_triggered: sample '" + s.id +
                            "' is already poisoned");
  if (auto why = trigger_violation(spec); !why.empty())
    throw PreconditionError("mark_triggered: " + why);
  Sample out = s;
  out.poisoned = true;
  out.trigger = spec;
  out.attack_tag = attack;
  if (spec.token)
    out.task = apply_text_trigger(s.task, spec);
  return out;
}

} // namespace spb
