#pragma once

// Training loop, optimizer, validation scoring and gradient checking.

#include <functional>
#include <span>
#include <vector>

#include "histmap/eval.hpp"
#include "histmap/pipeline.hpp"

namespace histmap {

enum class TaskMode { video, tileset };

/// Frames and instance masks in processing order (latest first).
struct VideoSample {
  std::vector<RasterGrid> frames;
  std::vector<InstanceMask> masks;
};

struct TrainConfig {
  TaskMode mode = TaskMode::video;
  int epochs = 50;
  double lr = 1e-4;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  size_t frames_per_sample = 2;
  size_t stream_len = 2;  // tiles per step in tileset mode
  bool keep_best = true;
  int val_every = 1;  // epochs between validations (the last epoch is always validated)
  uint64_t seed = 0;
  BankConfig bank;
  void validate() const;
};

/// Decoupled weight decay Adam over the trainable tensors.
class AdamW {
 public:
  AdamW(std::vector<ag::Param*> params, double lr, double weight_decay, double beta1 = 0.9, double beta2 = 0.999,
        double eps = 1e-8);
  void step();
  long steps() const noexcept { return t_; }

 private:
  std::vector<ag::Param*> params_;
  std::vector<Mat> m_, v_;
  double lr_, wd_, b1_, b2_, eps_;
  long t_ = 0;
};

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;
  double bce = 0.0;
  double iou_mse = 0.0;
  double val_score = 0.0;
  bool best = false;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  int best_epoch = -1;
  double best_val = 0.0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Trains in place. With keep_best the parameters of the epoch with the
/// highest validation score are restored at the end (the first such epoch on
/// ties; the final epoch when `val` is empty).
TrainReport train(ModelParams& p, std::span<const VideoSample> train_set, std::span<const VideoSample> val_set,
                  const TrainConfig& cfg, const EpochCallback& on_epoch = {});

/// Video mode: instance F1 at st-IoU > 0.5 with oracle prompts from frame 0,
/// pooled over videos. Tileset mode: dataset-level foreground IoU of one stream.
double validation_score(ModelParams& p, std::span<const VideoSample> set, const TrainConfig& cfg);

/// Counts of a video-mode evaluation with the given prompts per video.
MatchResult evaluate_video(ModelParams& p, const VideoSample& video, std::span<const ObjectPrompt> prompts,
                           const BankConfig& bank);

/// The frames a training step uses: `count` distinct indices in processing
/// order, drawn without replacement (all of them when the video is shorter).
std::vector<size_t> sample_frames(size_t n_frames, size_t count, Rng& rng);

struct GradCheckReport {
  double max_rel_error = 0.0;
  size_t checked = 0;
  std::vector<std::string> families;  // families covered
  std::string worst;                  // name[index] of the worst scalar
};

struct GradCheckOptions {
  size_t min_scalars = 120;
  double step = 1e-5;
  uint64_t seed = 0;
  /// Multiplies the analytic gradient of the largest-magnitude sampled scalar
  /// before comparing (mutation testing of the checker itself).
  double corrupt_factor = 1.0;
};

/// Central finite differences of the full video loss against the analytic
/// gradient on a stratified sample of trainable scalars. The IoU targets are
/// taken at the unperturbed parameters and held fixed.
GradCheckReport grad_check(ModelParams& p, const VideoSample& sample, const BankConfig& bank,
                           const GradCheckOptions& opt = {});

}  // namespace histmap
