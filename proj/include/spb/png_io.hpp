#pragma once

// PNG read/write through libpng's simplified API. Link against PNG::PNG.

#include <cstdint>
#include <string>
#include <vector>

#include <png.h>

#include "spb/error.hpp"
#include "spb/trigger.hpp"

namespace spb {

inline Raster read_png(const std::string& path)
{
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str()))
    throw IoError("cannot read PNG '" + path + "': " + image.message);
  image.format = PNG_FORMAT_RGB;
  Raster out;
  out.width = static_cast<int>(image.width);
  out.height = static_cast<int>(image.height);
  out.pixels.resize(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, out.pixels.data(), 0, nullptr)) {
    png_image_free(&image);
    throw IoError("cannot decode PNG '" + path + "': " + image.message);
  }
  return out;
}

inline void write_png(const Raster& r, const std::string& path)
{
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(r.width);
  image.height = static_cast<png_uint_32>(r.height);
  image.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.c_str(), 0, r.pixels.data(), 0, nullptr))
    throw IoError("cannot write PNG '" + path + "': " + image.message);
}

inline void write_png_gray(int width, int height,
                           const std::vector<std::uint8_t>& gray,
                           const std::string& path)
{
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  image.format = PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&image, path.c_str(), 0, gray.data(), 0, nullptr))
    throw IoError("cannot write PNG '" + path + "': " + image.message);
}

} // namespace spb
