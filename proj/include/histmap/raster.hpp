#pragma once

// Raster primitives: intensity grids, instance label masks, binary masks,
// 4-connected morphology and component labeling, overlap measures.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "histmap/error.hpp"

namespace histmap {

/// Row-major 2-D plane of pixels. The tag keeps grids, label masks and
/// binary masks from being mixed up even when they share a pixel type.
template <typename T, typename Tag>
class Plane {
 public:
  using value_type = T;

  Plane() = default;
  Plane(int height, int width, T fill = T{}) : height_(height), width_(width) {
    require(height >= 1 && width >= 1, "plane dimensions must be positive");
    px_.assign(static_cast<size_t>(height) * static_cast<size_t>(width), fill);
  }
  Plane(int height, int width, std::vector<T> px) : height_(height), width_(width), px_(std::move(px)) {
    require(height >= 1 && width >= 1, "plane dimensions must be positive");
    require(px_.size() == static_cast<size_t>(height) * static_cast<size_t>(width),
            "plane payload size does not match dimensions");
  }

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  size_t size() const noexcept { return px_.size(); }
  bool empty() const noexcept { return px_.empty(); }

  T& at(int x, int y) { return px_[static_cast<size_t>(y) * width_ + x]; }
  const T& at(int x, int y) const { return px_[static_cast<size_t>(y) * width_ + x]; }
  T& operator[](size_t i) { return px_[i]; }
  const T& operator[](size_t i) const { return px_[i]; }

  bool contains(int x, int y) const noexcept { return x >= 0 && y >= 0 && x < width_ && y < height_; }
  bool same_shape(int h, int w) const noexcept { return h == height_ && w == width_; }
  template <typename U, typename G>
  bool same_shape(const Plane<U, G>& o) const noexcept {
    return o.height() == height_ && o.width() == width_;
  }

  std::vector<T>& data() noexcept { return px_; }
  const std::vector<T>& data() const noexcept { return px_; }

  friend bool operator==(const Plane&, const Plane&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<T> px_;
};

struct IntensityTag;
struct LabelTag;
struct BitTag;

/// 8-bit intensities, 0 = ink, 255 = paper.
using RasterGrid = Plane<uint8_t, IntensityTag>;
/// 16-bit instance ids, 0 = background.
using InstanceMask = Plane<uint16_t, LabelTag>;
/// One byte per pixel, 0 or 1.
using BinaryMask = Plane<uint8_t, BitTag>;

using Label = uint16_t;

/// Inclusive-exclusive pixel box: columns [x0, x1), rows [y0, y1).
struct Box {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  int width() const noexcept { return x1 - x0; }
  int height() const noexcept { return y1 - y0; }
  bool degenerate() const noexcept { return x1 <= x0 || y1 <= y0; }
  friend bool operator==(const Box&, const Box&) = default;
};

// Label inventory and selection.
std::vector<Label> inventory(const InstanceMask& m);
Label max_label(const InstanceMask& m);
BinaryMask select_label(const InstanceMask& m, Label label);
BinaryMask foreground(const InstanceMask& m);
size_t count(const BinaryMask& b);
std::optional<Box> bounding_box(const BinaryMask& b);

InstanceMask connected_components(const BinaryMask& b);
BinaryMask dilate(const BinaryMask& b, int iterations);
BinaryMask erode(const BinaryMask& b, int iterations);
bool is_connected(const BinaryMask& b);

BinaryMask mask_and(const BinaryMask& a, const BinaryMask& b);
BinaryMask mask_or(const BinaryMask& a, const BinaryMask& b);

/// Translates content by (dx, dy); vacated pixels take `fill`.
/// |dx| must be below the width and |dy| below the height.
RasterGrid shift_grid(const RasterGrid& g, int dx, int dy, uint8_t fill);
InstanceMask shift_mask(const InstanceMask& m, int dx, int dy);

/// Pixel counts of a ∩ b and a ∪ b.
struct Overlap {
  size_t intersection = 0;
  size_t uni = 0;
};
Overlap overlap(const BinaryMask& a, const BinaryMask& b);

/// |a ∩ b| / |a ∪ b|, 1 when both are empty.
double binary_iou(const BinaryMask& a, const BinaryMask& b);

}  // namespace histmap
