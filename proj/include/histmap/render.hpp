#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "histmap/eval.hpp"
#include "histmap/raster.hpp"

namespace histmap {

struct RgbImage {
  int height = 0;
  int width = 0;
  std::vector<uint8_t> px;  // interleaved RGB, row-major
};

/// Grayscale copy of the grid with each object's mask boundary drawn in its
/// own color and the object id printed next to it.
RgbImage render_overlay(const RasterGrid& grid, std::span<const Label> ids, std::span<const BinaryMask> masks);

}  // namespace histmap
