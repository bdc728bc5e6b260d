#include "histmap/raster.hpp"

#include <algorithm>
#include <cstdlib>
#include <deque>
#include <set>

namespace histmap {

namespace {

template <typename P>
P shift_plane(const P& in, int dx, int dy, typename P::value_type fill) {
  require(std::abs(dx) < in.width() && std::abs(dy) < in.height(),
          "shift magnitude must be smaller than the grid dimension");
  P out(in.height(), in.width(), fill);
  for (int y = 0; y < in.height(); ++y) {
    const int ty = y + dy;
    if (ty < 0 || ty >= in.height()) continue;
    for (int x = 0; x < in.width(); ++x) {
      const int tx = x + dx;
      if (tx < 0 || tx >= in.width()) continue;
      out.at(tx, ty) = in.at(x, y);
    }
  }
  return out;
}

constexpr int kDx[4] = {1, -1, 0, 0};
constexpr int kDy[4] = {0, 0, 1, -1};

}  // namespace

std::vector<Label> inventory(const InstanceMask& m) {
  std::vector<bool> seen(65536, false);
  for (Label v : m.data()) seen[v] = true;
  std::vector<Label> out;
  for (size_t v = 1; v < seen.size(); ++v)
    if (seen[v]) out.push_back(static_cast<Label>(v));
  return out;
}

Label max_label(const InstanceMask& m) {
  Label best = 0;
  for (Label v : m.data()) best = std::max(best, v);
  return best;
}

BinaryMask select_label(const InstanceMask& m, Label label) {
  BinaryMask out(m.height(), m.width());
  for (size_t i = 0; i < m.size(); ++i) out[i] = (label != 0 && m[i] == label) ? 1 : 0;
  return out;
}

BinaryMask foreground(const InstanceMask& m) {
  BinaryMask out(m.height(), m.width());
  for (size_t i = 0; i < m.size(); ++i) out[i] = m[i] != 0 ? 1 : 0;
  return out;
}

size_t count(const BinaryMask& b) {
  size_t n = 0;
  for (uint8_t v : b.data()) n += v != 0;
  return n;
}

std::optional<Box> bounding_box(const BinaryMask& b) {
  Box box{b.width(), b.height(), 0, 0};
  bool any = false;
  for (int y = 0; y < b.height(); ++y)
    for (int x = 0; x < b.width(); ++x)
      if (b.at(x, y)) {
        any = true;
        box.x0 = std::min(box.x0, x);
        box.y0 = std::min(box.y0, y);
        box.x1 = std::max(box.x1, x + 1);
        box.y1 = std::max(box.y1, y + 1);
      }
  if (!any) return std::nullopt;
  return box;
}

InstanceMask connected_components(const BinaryMask& b) {
  InstanceMask out(b.height(), b.width());
  unsigned next = 1;
  std::deque<std::pair<int, int>> queue;
  for (int y = 0; y < b.height(); ++y) {
    for (int x = 0; x < b.width(); ++x) {
      if (!b.at(x, y) || out.at(x, y) != 0) continue;
      if (next > 65535) fail(ErrorKind::infeasible, "more than 65535 components in one mask");
      const auto label = static_cast<Label>(next++);
      out.at(x, y) = label;
      queue.emplace_back(x, y);
      while (!queue.empty()) {
        auto [cx, cy] = queue.front();
        queue.pop_front();
        for (int k = 0; k < 4; ++k) {
          const int nx = cx + kDx[k], ny = cy + kDy[k];
          if (b.contains(nx, ny) && b.at(nx, ny) && out.at(nx, ny) == 0) {
            out.at(nx, ny) = label;
            queue.emplace_back(nx, ny);
          }
        }
      }
    }
  }
  return out;
}

BinaryMask dilate(const BinaryMask& b, int iterations) {
  require(iterations >= 0, "dilate: iterations must be non-negative");
  BinaryMask cur = b;
  for (int it = 0; it < iterations; ++it) {
    BinaryMask next = cur;
    for (int y = 0; y < cur.height(); ++y)
      for (int x = 0; x < cur.width(); ++x) {
        if (!cur.at(x, y)) continue;
        for (int k = 0; k < 4; ++k) {
          const int nx = x + kDx[k], ny = y + kDy[k];
          if (cur.contains(nx, ny)) next.at(nx, ny) = 1;
        }
      }
    cur = std::move(next);
  }
  return cur;
}

BinaryMask erode(const BinaryMask& b, int iterations) {
  require(iterations >= 0, "erode: iterations must be non-negative");
  BinaryMask cur = b;
  for (int it = 0; it < iterations; ++it) {
    BinaryMask next(cur.height(), cur.width());
    for (int y = 0; y < cur.height(); ++y)
      for (int x = 0; x < cur.width(); ++x) {
        if (!cur.at(x, y)) continue;
        bool keep = true;
        for (int k = 0; k < 4 && keep; ++k) {
          const int nx = x + kDx[k], ny = y + kDy[k];
          keep = cur.contains(nx, ny) && cur.at(nx, ny);
        }
        next.at(x, y) = keep ? 1 : 0;
      }
    cur = std::move(next);
  }
  return cur;
}

bool is_connected(const BinaryMask& b) {
  return inventory(connected_components(b)).size() <= 1;
}

BinaryMask mask_and(const BinaryMask& a, const BinaryMask& b) {
  require(a.same_shape(b), "mask dimensions differ");
  BinaryMask out(a.height(), a.width());
  for (size_t i = 0; i < a.size(); ++i) out[i] = (a[i] && b[i]) ? 1 : 0;
  return out;
}

BinaryMask mask_or(const BinaryMask& a, const BinaryMask& b) {
  require(a.same_shape(b), "mask dimensions differ");
  BinaryMask out(a.height(), a.width());
  for (size_t i = 0; i < a.size(); ++i) out[i] = (a[i] || b[i]) ? 1 : 0;
  return out;
}

RasterGrid shift_grid(const RasterGrid& g, int dx, int dy, uint8_t fill) { return shift_plane(g, dx, dy, fill); }

InstanceMask shift_mask(const InstanceMask& m, int dx, int dy) { return shift_plane(m, dx, dy, Label{0}); }

Overlap overlap(const BinaryMask& a, const BinaryMask& b) {
  require(a.same_shape(b), "mask dimensions differ");
  Overlap o;
  for (size_t i = 0; i < a.size(); ++i) {
    const bool pa = a[i] != 0, pb = b[i] != 0;
    o.intersection += pa && pb;
    o.uni += pa || pb;
  }
  return o;
}

double binary_iou(const BinaryMask& a, const BinaryMask& b) {
  const Overlap o = overlap(a, b);
  if (o.uni == 0) return 1.0;
  return static_cast<double>(o.intersection) / static_cast<double>(o.uni);
}

}  // namespace histmap
