#pragma once

// Toy-scale memory-attention segmentation network.
//
//   grid -> patch embed + sinusoidal positions -> encoder blocks whose query
//   and value projections carry low-rank adapters -> F_t
//   F_t + memories -> memory attention (self, cross, feed-forward) -> E_t
//   E_t + (box prompt | default query tokens) -> two-way decoder -> mask
//   logits and a confidence from the IoU head
//   mask probabilities + F_t -> memory encoder -> memory tokens
//
// The encoder base weights and the prompt encoder are seeded at random and
// frozen; adapters, memory modules and the decoder are trainable.

#include <cstdint>
#include <deque>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "histmap/autograd.hpp"
#include "histmap/membank.hpp"
#include "histmap/raster.hpp"

namespace histmap {

using ag::Mat;
using ag::Var;

struct ModelConfig {
  int input_size = 128;
  int patch = 16;
  int d_model = 32;
  int n_enc_blocks = 2;
  int n_mem_blocks = 2;
  int n_dec_blocks = 2;
  int n_heads = 4;
  int lora_rank = 4;
  int ffn_mult = 2;
  int mask_channels = 8;
  int n_query_tokens = 2;
  bool use_memory = true;
  uint64_t init_seed = 0;

  int grid() const noexcept { return input_size / patch; }
  int tokens() const noexcept { return grid() * grid(); }
  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Projection y = x W^T + b; with adapter factors present the weight is
/// W + B A (W: d x k frozen, A: r x k, B: d x r).
struct Proj {
  ag::Param* W = nullptr;
  ag::Param* b = nullptr;
  ag::Param* A = nullptr;
  ag::Param* B = nullptr;
  bool adapted() const noexcept { return A != nullptr; }
};

struct Norm {
  ag::Param* gamma = nullptr;
  ag::Param* beta = nullptr;
};

struct Attention {
  Proj q, k, v, o;
};

struct FeedForward {
  Proj up, down;
};

struct EncoderBlock {
  Norm ln1, ln2;
  Attention attn;
  FeedForward ffn;
};

struct MemoryBlock {
  Norm ln_self, ln_cross, ln_ffn;
  Attention self_attn, cross_attn;
  FeedForward ffn;
};

struct DecoderBlock {
  Norm ln_self, ln_t2i, ln_mlp, ln_i2t_img, ln_i2t_tok, ln_img_mlp;
  Attention self_attn, t2i, i2t;
  FeedForward mlp, img_mlp;
};

/// All tensors of the network plus named handles into them.
class ModelParams {
 public:
  explicit ModelParams(const ModelConfig& cfg);
  ModelParams(const ModelParams&) = delete;
  ModelParams& operator=(const ModelParams&) = delete;

  const ModelConfig& config() const noexcept { return cfg_; }

  std::deque<ag::Param>& tensors() noexcept { return tensors_; }
  const std::deque<ag::Param>& tensors() const noexcept { return tensors_; }
  ag::Param* find(const std::string& name);
  const ag::Param* find(const std::string& name) const;

  std::vector<ag::Param*> trainable();
  std::vector<ag::Param*> frozen();
  size_t scalar_count(bool trainable_only) const;

  void zero_grad();
  std::vector<Mat> snapshot() const;
  void restore(const std::vector<Mat>& values);
  /// Same config and values, fresh gradients.
  std::unique_ptr<ModelParams> clone() const;

  Proj patch_embed;
  std::vector<EncoderBlock> encoder;
  Norm enc_out;
  ag::Param* prompt_corners = nullptr;  // 2 x d: top-left, bottom-right
  std::vector<MemoryBlock> memory;
  Proj memory_encoder;
  ag::Param* query_tokens = nullptr;  // n_query x d, row 0 is the mask token
  Norm dec_in;
  std::vector<DecoderBlock> decoder;
  Norm ln_final_t2i, ln_final_out;
  Attention final_t2i;
  FeedForward hyper;  // mask token -> mask_channels
  Proj upscale;       // d -> patch^2 * mask_channels
  Proj high_res;      // 1 -> mask_channels
  FeedForward iou_head;

  Mat image_pe;  // tokens x d, fixed

 private:
  ag::Param& add(const std::string& name, Mat value, bool trainable, const std::string& family);
  Proj make_proj(const std::string& name, int out, int in, bool trainable, const std::string& family, Rng& rng,
                 bool adapter = false);
  Norm make_norm(const std::string& name, int dim, bool trainable, const std::string& family);
  Attention make_attention(const std::string& name, bool trainable, const std::string& family, Rng& rng,
                           bool adapt_qv);
  FeedForward make_ffn(const std::string& name, int in, int hidden, int out, bool trainable,
                       const std::string& family, Rng& rng);

  ModelConfig cfg_;
  std::deque<ag::Param> tensors_;
};

/// Fixed 2-D sinusoidal encoding of a normalized position (x, y) in [0, 1]^2.
Eigen::RowVectorXd sinusoidal_encoding(double x, double y, int dim);

/// y = (W + B A) x + b for a single input vector.
Eigen::VectorXd lora_forward(const Eigen::VectorXd& x, const Mat& W, const Eigen::VectorXd& b, const Mat& A,
                             const Mat& B);

struct FrameEmbedding {
  Var tokens;    // tokens x d
  Var high_res;  // pixels x 1, centered darkness of the input grid
};

struct Decoded {
  Var logits;      // pixels x 1, row-major over the frame
  Var confidence;  // 1 x 1 in [0, 1]
};

struct MemoryFeatures {
  Var tokens;  // tokens x d
  Vec pooled;  // unit norm
};

Var project(ag::Graph& g, const Proj& p, Var x);
Var attend(ag::Graph& g, const Attention& a, int heads, Var q, Var k, Var v);

FrameEmbedding encode_frame(ag::Graph& g, ModelParams& p, const RasterGrid& grid);
/// With no memories (or use_memory off) the cross-attention sub-layer is skipped.
FrameEmbedding memory_attention(ag::Graph& g, ModelParams& p, const FrameEmbedding& f, std::span<const Var> memories);
Var encode_box_prompt(ag::Graph& g, ModelParams& p, const Box& box);
/// `prompt` absent means prompt-free decoding from the default query tokens.
Decoded decode_mask(ag::Graph& g, ModelParams& p, const FrameEmbedding& e, std::optional<Var> prompt);
MemoryFeatures encode_memory(ag::Graph& g, ModelParams& p, Var logits, const FrameEmbedding& f);

/// Unit-norm mean of the rows of a token matrix.
Vec pooled_summary(const Mat& tokens);
BinaryMask threshold_logits(const Mat& logits, int size);

}  // namespace histmap
