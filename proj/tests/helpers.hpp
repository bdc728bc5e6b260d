#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "histmap/raster.hpp"

namespace testutil {

// Rows of '.' and '#' (or digits for labels).
inline histmap::BinaryMask bits(const std::vector<std::string>& rows) {
  histmap::BinaryMask m(static_cast<int>(rows.size()), static_cast<int>(rows[0].size()));
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x) m.at(x, y) = rows[y][x] == '#';
  return m;
}

inline histmap::InstanceMask labels(const std::vector<std::string>& rows) {
  histmap::InstanceMask m(static_cast<int>(rows.size()), static_cast<int>(rows[0].size()));
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x) m.at(x, y) = rows[y][x] == '.' ? 0 : static_cast<uint16_t>(rows[y][x] - '0');
  return m;
}

// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("histmap_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testutil
