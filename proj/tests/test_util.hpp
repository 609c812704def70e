#pragma once

#include <filesystem>
#include <string>

#include "spb/core.hpp"

namespace testutil {

inline spb::Sample make_sample(const std::string& id, spb::Scanpath path,
                               spb::BBox box = {700, 400, 200, 200}, const std::string& task = "cup")
{
  spb::Sample s;
  s.id = id;
  s.image_ref = id + ".jpg";
  s.task = task;
  s.scanpath = std::move(path);
  s.bbox = box;
  return s;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name)
{
  auto dir = std::filesystem::temp_directory_path() / ("spb_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

} // namespace testutil
