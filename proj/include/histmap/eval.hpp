#pragma once

// Spatio-temporal instance evaluation and semantic IoU.

#include <span>
#include <vector>

#include "histmap/raster.hpp"

namespace histmap {

/// One object followed through a video: exactly one mask slot per frame,
/// empty where the object is absent.
struct LinkedInstance {
  Label id = 0;
  std::vector<BinaryMask> masks;
};

/// Sum of per-frame intersections over sum of per-frame unions; 1 when both
/// tracks are empty in every frame.
double st_iou(const LinkedInstance& pred, const LinkedInstance& gt);

struct MatchPair {
  Label pred = 0;
  Label gt = 0;
  double iou = 0.0;
  friend bool operator==(const MatchPair&, const MatchPair&) = default;
};

struct MatchResult {
  size_t tp = 0;
  size_t fp = 0;
  size_t fn = 0;
  std::vector<MatchPair> pairs;
};

/// Greedy one-to-one matching in descending st-IoU order (ties: smaller pred id,
/// then smaller gt id); a pair counts only when its st-IoU is strictly above
/// `threshold`.
MatchResult match_instances(std::span<const LinkedInstance> preds, std::span<const LinkedInstance> gts,
                            double threshold = 0.5);

struct Prf1 {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// 0/0 evaluates to 0.
Prf1 prf1(const MatchResult& m);
Prf1 prf1(size_t tp, size_t fp, size_t fn);

double semantic_iou(const BinaryMask& pred, const BinaryMask& gt);

/// Dataset-level IoU: total intersection over total union across tiles.
class IouAccumulator {
 public:
  void add(const BinaryMask& pred, const BinaryMask& gt);
  size_t intersection() const noexcept { return inter_; }
  size_t uni() const noexcept { return union_; }
  double value() const noexcept;

 private:
  size_t inter_ = 0;
  size_t union_ = 0;
};

/// Ground-truth tracks of a labeled video: one instance per label present in
/// any frame, in ascending label order.
std::vector<LinkedInstance> tracks_from_masks(std::span<const InstanceMask> frames);

}  // namespace histmap
