#include "histmap/render.hpp"

#include <array>
#include <string>

namespace histmap {

namespace {

// 3x5 digits, one row per 3-bit group, MSB = left column
constexpr std::array<std::array<uint8_t, 5>, 10> kDigits = {{
    {7, 5, 5, 5, 7}, {2, 6, 2, 2, 7}, {7, 1, 7, 4, 7}, {7, 1, 7, 1, 7}, {5, 5, 7, 1, 1},
    {7, 4, 7, 1, 7}, {7, 4, 7, 5, 7}, {7, 1, 1, 1, 1}, {7, 5, 7, 5, 7}, {7, 5, 7, 1, 7},
}};

std::array<uint8_t, 3> color_for(Label id) {
  static constexpr std::array<std::array<uint8_t, 3>, 8> palette = {{
      {230, 25, 75}, {60, 180, 75}, {0, 130, 200}, {245, 130, 48},
      {145, 30, 180}, {70, 240, 240}, {240, 50, 230}, {128, 128, 0},
  }};
  return palette[id % palette.size()];
}

void put(RgbImage& img, int x, int y, std::array<uint8_t, 3> c) {
  if (x < 0 || y < 0 || x >= img.width || y >= img.height) return;
  const size_t i = (static_cast<size_t>(y) * img.width + x) * 3;
  img.px[i] = c[0];
  img.px[i + 1] = c[1];
  img.px[i + 2] = c[2];
}

void draw_number(RgbImage& img, int x, int y, Label id, std::array<uint8_t, 3> c) {
  const std::string s = std::to_string(id);
  for (char ch : s) {
    const auto& glyph = kDigits[static_cast<size_t>(ch - '0')];
    for (int r = 0; r < 5; ++r)
      for (int col = 0; col < 3; ++col)
        if (glyph[r] & (4 >> col)) put(img, x + col, y + r, c);
    x += 4;
  }
}

}  // namespace

RgbImage render_overlay(const RasterGrid& grid, std::span<const Label> ids, std::span<const BinaryMask> masks) {
  RgbImage img{grid.height(), grid.width(), {}};
  img.px.resize(grid.size() * 3);
  for (size_t i = 0; i < grid.size(); ++i) img.px[3 * i] = img.px[3 * i + 1] = img.px[3 * i + 2] = grid[i];
  for (size_t o = 0; o < masks.size() && o < ids.size(); ++o) {
    const auto& m = masks[o];
    const auto c = color_for(ids[o]);
    auto on = [&](int x, int y) { return m.contains(x, y) && m.at(x, y); };
    for (int y = 0; y < m.height(); ++y)
      for (int x = 0; x < m.width(); ++x)
        if (on(x, y) && (!on(x - 1, y) || !on(x + 1, y) || !on(x, y - 1) || !on(x, y + 1))) put(img, x, y, c);
    if (const auto b = bounding_box(m)) draw_number(img, b->x0, std::max(0, b->y0 - 6), ids[o], c);
  }
  return img;
}

}  // namespace histmap
