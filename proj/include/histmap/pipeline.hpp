#pragma once

// Streaming drivers around the model: per-object video segmentation with
// FIFO memory, prompt-free tile-stream segmentation with the self-sorting
// bank, and the training losses built on the same forward paths.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "histmap/linker.hpp"
#include "histmap/membank.hpp"
#include "histmap/model.hpp"

namespace histmap {

struct BankConfig {
  size_t capacity = 8;
  size_t retrieve_k = 4;
  double conf_threshold = 0.7;
  RetrieveMode tileset_mode = RetrieveMode::weighted_sample;
  uint64_t seed = 0;
  void validate() const;
};

struct ObjectTrack {
  Label id = 0;
  bool rejected = false;
  std::string reason;
  std::vector<BinaryMask> masks;  // one per frame; empty when rejected
  std::vector<double> confidences;
};

/// Frames are in processing order (latest first); prompts refer to frame 0.
std::vector<ObjectTrack> segment_video(ModelParams& p, std::span<const RasterGrid> frames,
                                       std::span<const ObjectPrompt> prompts, const BankConfig& bank);

struct TileResult {
  BinaryMask mask;
  double confidence = 0.0;
  bool stored = false;  // admitted to the bank
};

std::vector<TileResult> segment_tileset(ModelParams& p, std::span<const RasterGrid> tiles, const BankConfig& bank);

struct LossTerms {
  Var loss;                         // 1 x 1, mean over terms
  double bce = 0.0;                 // mean BCE part
  double iou_mse = 0.0;             // mean confidence error part
  size_t terms = 0;                 // objects x frames (or tiles)
  std::vector<double> iou_targets;  // realized IoU per term, in term order
};

/// Video-mode training loss: ground-truth tight boxes of frame 0 as prompts,
/// per-object FIFO banks, BCE on logits plus squared error between confidence
/// and the realized IoU of the thresholded mask. `iou_targets` overrides the
/// realized IoU (used to hold the targets fixed under perturbation).
LossTerms video_loss(ag::Graph& g, ModelParams& p, std::span<const RasterGrid> frames,
                     std::span<const InstanceMask> gts, const BankConfig& bank,
                     const std::vector<double>* iou_targets = nullptr);

/// Tile-stream loss against the foreground of each tile's instance mask.
LossTerms tileset_loss(ag::Graph& g, ModelParams& p, std::span<const RasterGrid> tiles,
                       std::span<const InstanceMask> gts, const BankConfig& bank,
                       const std::vector<double>* iou_targets = nullptr);

Mat mask_to_column(const BinaryMask& m);

}  // namespace histmap
