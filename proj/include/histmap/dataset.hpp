#pragma once

// On-disk video directories.
//
//   <video>/manifest.json   {"frames": [...], "masks": [...], "years": [...],
//                            "order": "chronological" | "latest_first",
//                            "flags": [...]}
//   <video>/frame_0000.png  8-bit grayscale
//   <video>/mask_0000.png   16-bit grayscale instance ids
//
// "masks" may be empty for unlabeled input; "years" is optional. A dataset
// is a directory of video directories, visited in name order.

#include <filesystem>
#include <string>
#include <vector>

#include "histmap/raster.hpp"
#include "histmap/synth.hpp"
#include "histmap/train.hpp"

namespace histmap {

enum class FrameOrder { chronological, latest_first };

struct VideoManifest {
  std::vector<std::string> frames;
  std::vector<std::string> masks;
  std::vector<int> years;
  FrameOrder order = FrameOrder::chronological;
  std::vector<std::string> flags;
};

VideoManifest parse_video_manifest(const std::string& text, const std::string& origin);
std::string dump_video_manifest(const VideoManifest& m);

struct VideoData {
  std::string name;
  VideoManifest manifest;
  std::vector<RasterGrid> frames;    // stored order
  std::vector<InstanceMask> masks;   // stored order, empty when unlabeled
};

VideoData load_video(const std::filesystem::path& dir);
void save_video(const std::filesystem::path& dir, std::span<const AnnotatedFrame> frames, FrameOrder order,
                const std::vector<std::string>& flags = {}, const std::vector<int>& years = {});

/// Subdirectories holding a manifest.json, sorted by name. Rejects a missing
/// directory and an empty dataset.
std::vector<std::filesystem::path> list_videos(const std::filesystem::path& dataset);

/// Index of stored frame i when processing latest first.
std::vector<size_t> processing_order(size_t n_frames, FrameOrder stored);

/// Frames and masks reordered latest first.
VideoSample to_sample(const VideoData& v);

/// Predicted tracks of one video, frames in stored order.
struct PredictedVideo {
  std::string name;
  size_t n_frames = 0;
  std::vector<LinkedInstance> objects;
  std::vector<std::vector<double>> confidences;  // per object, per frame (may be empty)
  std::vector<std::string> flags;
};

/// <dir>/predictions.json plus obj_<id>_<frame>.png (0/255) per object and frame.
void save_predictions(const std::filesystem::path& dir, const PredictedVideo& v);
PredictedVideo load_predictions(const std::filesystem::path& dir);

}  // namespace histmap
