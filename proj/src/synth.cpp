#include "histmap/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numeric>

namespace histmap {

namespace {

constexpr int kPlacementAttempts = 2000;
constexpr int kAppearanceRetries = 100;

uint8_t clamp_u8(int v) { return static_cast<uint8_t>(std::clamp(v, 0, 255)); }

uint8_t ink_intensity(Rng& rng) { return static_cast<uint8_t>(rng.uniform_int(15, 55)); }

void paint_rect(AnnotatedFrame& f, const Box& r, Label label, uint8_t ink) {
  for (int y = r.y0; y < r.y1; ++y)
    for (int x = r.x0; x < r.x1; ++x) {
      f.grid.at(x, y) = ink;
      f.mask.at(x, y) = label;
    }
}

Box random_rect(const SynthConfig& cfg, int height, int width, Rng& rng) {
  const int w = std::min<int>(static_cast<int>(rng.uniform_int(cfg.rect_size.lo, cfg.rect_size.hi)), width);
  const int h = std::min<int>(static_cast<int>(rng.uniform_int(cfg.rect_size.lo, cfg.rect_size.hi)), height);
  const int x0 = static_cast<int>(rng.uniform_int(0, width - w));
  const int y0 = static_cast<int>(rng.uniform_int(0, height - h));
  return Box{x0, y0, x0 + w, y0 + h};
}

struct Centroid {
  double x = 0, y = 0;
  size_t n = 0;
};

std::map<Label, Centroid> centroids(const InstanceMask& m) {
  std::map<Label, Centroid> out;
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x) {
      const Label l = m.at(x, y);
      if (!l) continue;
      auto& c = out[l];
      c.x += x;
      c.y += y;
      ++c.n;
    }
  for (auto& [l, c] : out) {
    c.x /= static_cast<double>(c.n);
    c.y /= static_cast<double>(c.n);
  }
  return out;
}

uint8_t mean_intensity(const AnnotatedFrame& f, Label label) {
  uint64_t sum = 0, n = 0;
  for (size_t i = 0; i < f.mask.size(); ++i)
    if (f.mask[i] == label) {
      sum += f.grid[i];
      ++n;
    }
  return n ? static_cast<uint8_t>((sum + n / 2) / n) : uint8_t{30};
}

Label find_root(std::map<Label, Label>& parent, Label l) {
  auto it = parent.find(l);
  if (it == parent.end() || it->second == l) return l;
  const Label root = find_root(parent, it->second);
  parent[l] = root;
  return root;
}

}  // namespace

void SynthConfig::validate() const {
  require(shift_range >= 0, "shift_range must be >= 0");
  require(appear_count.valid() && appear_count.lo >= 0, "appear_count range invalid");
  require(disappear_count.valid() && disappear_count.lo >= 0, "disappear_count range invalid");
  require(merge_count.valid() && merge_count.lo >= 0, "merge_count range invalid");
  require(rect_size.valid() && rect_size.lo >= 1, "rect_size range invalid");
  require(max_dilate_iters >= 0, "max_dilate_iters must be >= 0");
}

AnnotatedFrame gen_synthetic_map(int height, int width, int n_buildings, uint64_t seed, CountRange rect_size) {
  require(n_buildings >= 0, "n_buildings must be >= 0");
  require(rect_size.valid() && rect_size.lo >= 1, "rect_size range invalid");
  require(n_buildings <= 65535, "too many buildings");
  Rng rng(seed);
  AnnotatedFrame f{RasterGrid(height, width), InstanceMask(height, width)};
  for (auto& v : f.grid.data()) {
    int base = 228 + static_cast<int>(rng.uniform_int(-10, 10));
    if (rng.uniform_int(0, 63) == 0) base = static_cast<int>(rng.uniform_int(150, 200));
    v = clamp_u8(base);
  }
  if (n_buildings > 0 && (rect_size.lo > width || rect_size.lo > height))
    fail(ErrorKind::infeasible, "layout infeasible: rectangles do not fit the grid");

  SynthConfig sizes;
  sizes.rect_size = rect_size;
  for (int b = 1; b <= n_buildings; ++b) {
    bool placed = false;
    for (int attempt = 0; attempt < kPlacementAttempts && !placed; ++attempt) {
      const Box r = random_rect(sizes, height, width, rng);
      // one pixel of clearance on every side, corners included
      bool clear = true;
      for (int y = std::max(0, r.y0 - 1); y < std::min(height, r.y1 + 1) && clear; ++y)
        for (int x = std::max(0, r.x0 - 1); x < std::min(width, r.x1 + 1) && clear; ++x)
          clear = f.mask.at(x, y) == 0;
      if (!clear) continue;
      const uint8_t ink = ink_intensity(rng);
      for (int y = r.y0; y < r.y1; ++y)
        for (int x = r.x0; x < r.x1; ++x) {
          f.grid.at(x, y) = clamp_u8(ink + static_cast<int>(rng.uniform_int(-6, 6)));
          f.mask.at(x, y) = static_cast<Label>(b);
        }
      placed = true;
    }
    if (!placed)
      fail(ErrorKind::infeasible, "layout infeasible: could not place building " + std::to_string(b) + " of " +
                                      std::to_string(n_buildings));
  }
  return f;
}

uint8_t background_intensity(const AnnotatedFrame& f) {
  std::array<size_t, 256> hist{};
  size_t n = 0;
  for (size_t i = 0; i < f.mask.size(); ++i)
    if (f.mask[i] == 0) {
      ++hist[f.grid[i]];
      ++n;
    }
  if (n == 0) return 255;
  return static_cast<uint8_t>(std::max_element(hist.begin(), hist.end()) - hist.begin());
}

Transformed apply_shift(const AnnotatedFrame& f, const SynthConfig& cfg, Rng& rng) {
  const int r = std::min({cfg.shift_range, f.grid.width() - 1, f.grid.height() - 1});
  const int dx = static_cast<int>(rng.uniform_int(-r, r));
  const int dy = static_cast<int>(rng.uniform_int(-r, r));
  const uint8_t bg = background_intensity(f);
  Transformed out{{shift_grid(f.grid, dx, dy, bg), shift_mask(f.mask, dx, dy)}, {}};
  out.record.op = "shift";
  out.record.dx = dx;
  out.record.dy = dy;
  return out;
}

Transformed apply_appearance(const AnnotatedFrame& f, const SynthConfig& cfg, Rng& rng, Label min_fresh_label) {
  Transformed out{f, {}};
  out.record.op = "appear";
  for (int attempt = 0; attempt < kAppearanceRetries; ++attempt) {
    const Box r = random_rect(cfg, f.grid.height(), f.grid.width(), rng);
    std::vector<Label> hit;
    for (int y = r.y0; y < r.y1; ++y)
      for (int x = r.x0; x < r.x1; ++x) {
        const Label l = f.mask.at(x, y);
        if (l && std::find(hit.begin(), hit.end(), l) == hit.end()) hit.push_back(l);
      }
    if (hit.size() >= 2) continue;
    Label label;
    uint8_t ink;
    if (hit.size() == 1) {
      label = hit.front();
      ink = mean_intensity(f, label);
    } else {
      const unsigned fresh = std::max<unsigned>(max_label(f.mask) + 1u, min_fresh_label);
      if (fresh > 65535) break;
      label = static_cast<Label>(fresh);
      ink = ink_intensity(rng);
    }
    paint_rect(out.frame, r, label, ink);
    out.record.labels = {label};
    out.record.rect = r;
    return out;
  }
  out.record.skipped = true;
  return out;
}

Transformed apply_disappearance(const AnnotatedFrame& f, const SynthConfig&, Rng& rng) {
  Transformed out{f, {}};
  out.record.op = "disappear";
  const auto inv = inventory(f.mask);
  if (inv.empty()) {
    out.record.skipped = true;
    return out;
  }
  const Label victim = inv[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(inv.size()) - 1))];
  const uint8_t bg = background_intensity(f);
  for (size_t i = 0; i < f.mask.size(); ++i)
    if (f.mask[i] == victim) {
      out.frame.mask[i] = 0;
      out.frame.grid[i] = bg;
    }
  out.record.labels = {victim};
  return out;
}

Transformed apply_merge(const AnnotatedFrame& f, const SynthConfig& cfg, Rng&) {
  Transformed out{f, {}};
  out.record.op = "merge";
  const auto cents = centroids(f.mask);
  if (cents.size() < 2) {
    out.record.skipped = true;
    return out;
  }
  // closest centroid pair; strict < keeps the lexicographically smallest pair on ties
  Label a = 0, b = 0;
  double best = INFINITY;
  for (auto i = cents.begin(); i != cents.end(); ++i)
    for (auto j = std::next(i); j != cents.end(); ++j) {
      const double d = std::hypot(i->second.x - j->second.x, i->second.y - j->second.y);
      if (d < best) {
        best = d;
        a = i->first;
        b = j->first;
      }
    }

  const int h = f.mask.height(), w = f.mask.width();
  BinaryMask originals(h, w), allowed(h, w);
  for (size_t i = 0; i < f.mask.size(); ++i) {
    const Label l = f.mask[i];
    originals[i] = (l == a || l == b) ? 1 : 0;
    allowed[i] = (l == 0 || l == a || l == b) ? 1 : 0;
  }

  BinaryMask region = originals;
  int iters = 0;
  while (!is_connected(region)) {
    if (iters == cfg.max_dilate_iters) {
      out.record.skipped = true;
      out.record.labels = {a, b};
      return out;
    }
    region = mask_and(dilate(region, 1), allowed);
    ++iters;
  }
  for (int it = 0; it < iters; ++it) {
    BinaryMask thinner = mask_or(erode(region, 1), originals);
    if (!is_connected(thinner)) break;
    region = std::move(thinner);
  }

  const uint8_t ink = mean_intensity(f, a);
  for (size_t i = 0; i < region.size(); ++i)
    if (region[i]) {
      out.frame.mask[i] = a;
      if (!originals[i]) out.frame.grid[i] = ink;
    }
  out.record.labels = {a, b};
  return out;
}

PseudoVideo synthesize_pseudo_video(const AnnotatedFrame& f, const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  const Label fresh_floor = static_cast<Label>(std::min<unsigned>(max_label(f.mask) + 1u, 65535u));

  PseudoVideo video;
  Transformed cur = apply_shift(f, cfg, rng);
  video.log.push_back(cur.record);

  std::map<Label, Label> lineage;  // absorbed id -> kept id
  const int n_merge = static_cast<int>(rng.uniform_int(cfg.merge_count.lo, cfg.merge_count.hi));
  for (int i = 0; i < n_merge; ++i) {
    cur = apply_merge(cur.frame, cfg, rng);
    if (!cur.record.skipped) lineage[cur.record.labels[1]] = cur.record.labels[0];
    video.log.push_back(cur.record);
  }
  const int n_dis = static_cast<int>(rng.uniform_int(cfg.disappear_count.lo, cfg.disappear_count.hi));
  for (int i = 0; i < n_dis; ++i) {
    cur = apply_disappearance(cur.frame, cfg, rng);
    video.log.push_back(cur.record);
  }
  const int n_app = static_cast<int>(rng.uniform_int(cfg.appear_count.lo, cfg.appear_count.hi));
  for (int i = 0; i < n_app; ++i) {
    cur = apply_appearance(cur.frame, cfg, rng, fresh_floor);
    video.log.push_back(cur.record);
  }

  AnnotatedFrame source = f;
  if (!lineage.empty())
    for (auto& l : source.mask.data())
      if (l) l = find_root(lineage, l);

  video.frames.push_back(std::move(source));
  video.frames.push_back(std::move(cur.frame));
  for (const auto& rec : video.log)
    if (rec.skipped) video.flags.push_back(rec.op + ":skipped");
  return video;
}

}  // namespace histmap
