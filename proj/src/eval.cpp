#include "histmap/eval.hpp"

#include <algorithm>
#include <set>

namespace histmap {

double st_iou(const LinkedInstance& pred, const LinkedInstance& gt) {
  require(pred.masks.size() == gt.masks.size(), "st_iou: frame count mismatch");
  size_t inter = 0, uni = 0;
  for (size_t t = 0; t < pred.masks.size(); ++t) {
    const Overlap o = overlap(pred.masks[t], gt.masks[t]);
    inter += o.intersection;
    uni += o.uni;
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

MatchResult match_instances(std::span<const LinkedInstance> preds, std::span<const LinkedInstance> gts,
                            double threshold) {
  struct Cand {
    size_t p, g;
    double iou;
  };
  std::vector<Cand> cands;
  for (size_t p = 0; p < preds.size(); ++p)
    for (size_t g = 0; g < gts.size(); ++g) {
      const double v = st_iou(preds[p], gts[g]);
      if (v > threshold) cands.push_back({p, g, v});
    }
  std::sort(cands.begin(), cands.end(), [&](const Cand& a, const Cand& b) {
    if (a.iou != b.iou) return a.iou > b.iou;
    if (preds[a.p].id != preds[b.p].id) return preds[a.p].id < preds[b.p].id;
    return gts[a.g].id < gts[b.g].id;
  });
  std::vector<bool> pred_used(preds.size(), false), gt_used(gts.size(), false);
  MatchResult r;
  for (const auto& c : cands) {
    if (pred_used[c.p] || gt_used[c.g]) continue;
    pred_used[c.p] = gt_used[c.g] = true;
    r.pairs.push_back({preds[c.p].id, gts[c.g].id, c.iou});
  }
  r.tp = r.pairs.size();
  r.fp = preds.size() - r.tp;
  r.fn = gts.size() - r.tp;
  return r;
}

Prf1 prf1(size_t tp, size_t fp, size_t fn) {
  auto ratio = [](double num, double den) { return den == 0.0 ? 0.0 : num / den; };
  Prf1 out;
  out.precision = ratio(static_cast<double>(tp), static_cast<double>(tp + fp));
  out.recall = ratio(static_cast<double>(tp), static_cast<double>(tp + fn));
  out.f1 = ratio(2.0 * out.precision * out.recall, out.precision + out.recall);
  return out;
}

Prf1 prf1(const MatchResult& m) { return prf1(m.tp, m.fp, m.fn); }

double semantic_iou(const BinaryMask& pred, const BinaryMask& gt) { return binary_iou(pred, gt); }

void IouAccumulator::add(const BinaryMask& pred, const BinaryMask& gt) {
  const Overlap o = overlap(pred, gt);
  inter_ += o.intersection;
  union_ += o.uni;
}

double IouAccumulator::value() const noexcept {
  if (union_ == 0) return 1.0;
  return static_cast<double>(inter_) / static_cast<double>(union_);
}

std::vector<LinkedInstance> tracks_from_masks(std::span<const InstanceMask> frames) {
  std::set<Label> labels;
  for (const auto& f : frames)
    for (Label l : inventory(f)) labels.insert(l);
  std::vector<LinkedInstance> out;
  for (Label l : labels) {
    LinkedInstance inst{l, {}};
    for (const auto& f : frames) inst.masks.push_back(select_label(f, l));
    out.push_back(std::move(inst));
  }
  return out;
}

}  // namespace histmap
