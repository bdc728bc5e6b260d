#pragma once

// Synthetic single-year maps and two-frame pseudo time series built from
// shift, appearance (incl. shape change), disappearance and merge.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "histmap/raster.hpp"
#include "histmap/rng.hpp"

namespace histmap {

struct CountRange {
  int lo = 0;
  int hi = 0;
  bool valid() const noexcept { return lo <= hi; }
  friend bool operator==(const CountRange&, const CountRange&) = default;
};

struct SynthConfig {
  int shift_range = 5;
  CountRange appear_count{0, 3};
  CountRange disappear_count{0, 2};
  CountRange merge_count{0, 1};
  CountRange rect_size{5, 30};
  int max_dilate_iters = 10;
  uint64_t seed = 0;

  /// Throws on an invalid configuration.
  void validate() const;
};

struct AnnotatedFrame {
  RasterGrid grid;
  InstanceMask mask;
  friend bool operator==(const AnnotatedFrame&, const AnnotatedFrame&) = default;
};

/// What one transformation did. `labels` is op specific:
/// appear -> {assigned id}, disappear -> {removed id}, merge -> {kept id, absorbed id}.
struct TransformRecord {
  std::string op;
  bool skipped = false;
  int dx = 0;
  int dy = 0;
  std::vector<Label> labels;
  std::optional<Box> rect;
};

struct Transformed {
  AnnotatedFrame frame;
  TransformRecord record;
};

/// Light speckled paper with `n_buildings` dark axis-aligned rectangles that
/// neither overlap nor touch. Labels 1..n in placement order.
AnnotatedFrame gen_synthetic_map(int height, int width, int n_buildings, uint64_t seed,
                                 CountRange rect_size = {5, 30});

/// Modal intensity of the pixels outside every instance (255 when there are none).
uint8_t background_intensity(const AnnotatedFrame& f);

Transformed apply_shift(const AnnotatedFrame& f, const SynthConfig& cfg, Rng& rng);

/// `min_fresh_label` raises the floor for newly assigned ids so a label that
/// vanished earlier in a composition is never reused.
Transformed apply_appearance(const AnnotatedFrame& f, const SynthConfig& cfg, Rng& rng, Label min_fresh_label = 0);
Transformed apply_disappearance(const AnnotatedFrame& f, const SynthConfig& cfg, Rng& rng);
Transformed apply_merge(const AnnotatedFrame& f, const SynthConfig& cfg, Rng& rng);

struct PseudoVideo {
  std::vector<AnnotatedFrame> frames;  // chronological: source, then transformed
  std::vector<TransformRecord> log;
  std::vector<std::string> flags;
};

/// Two-frame pseudo video. Frame 0 is the source (merge participants relabeled
/// to their shared id); frame 1 is shifted, then merged, thinned and extended.
PseudoVideo synthesize_pseudo_video(const AnnotatedFrame& f, const SynthConfig& cfg);

}  // namespace histmap
