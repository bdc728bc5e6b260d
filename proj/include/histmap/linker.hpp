#pragma once

// Heuristic frame-to-frame instance linking (the two-step baseline) and the
// prompt providers that stand in for an object detector.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "histmap/eval.hpp"
#include "histmap/raster.hpp"

namespace histmap {

/// Links instances of consecutive frames by mask IoU. Each instance of frame
/// t+1 joins the frame-t track it overlaps most (IoU >= tau, ties to the
/// smaller track id); when several instances want one track the highest IoU
/// wins and the rest start new tracks. Track ids are 1.. in creation order.
std::vector<LinkedInstance> link_instances(std::span<const InstanceMask> frames, double tau = 0.3);

enum class PromptMode { oracle, jittered_oracle, from_file };

struct PromptProvider {
  PromptMode mode = PromptMode::oracle;
  double sigma = 0.0;  // pixels, jittered_oracle only
  uint64_t seed = 0;
  std::filesystem::path file;  // from_file only
};

struct ObjectPrompt {
  Label id = 0;
  Box box;
  friend bool operator==(const ObjectPrompt&, const ObjectPrompt&) = default;
};

/// Boxes for the objects of the first processed frame.
std::vector<ObjectPrompt> provide_prompts(const InstanceMask& gt, const PromptProvider& provider);

/// Tight box of every instance, ascending label order.
std::vector<ObjectPrompt> oracle_prompts(const InstanceMask& gt);

/// Corners displaced by rounded N(0, sigma^2) noise, clipped to the frame;
/// boxes that collapse are dropped.
std::vector<ObjectPrompt> jitter_prompts(std::span<const ObjectPrompt> prompts, int height, int width, double sigma,
                                         uint64_t seed);

/// Prompt file: {"prompts": [{"id": 1, "box": [x0, y0, x1, y1]}, ...]}.
std::vector<ObjectPrompt> parse_prompts(const std::string& text, const std::string& origin = "<prompts>");
std::vector<ObjectPrompt> load_prompts(const std::filesystem::path& path);
std::string dump_prompts(std::span<const ObjectPrompt> prompts);

}  // namespace histmap
