#include "histmap/model.hpp"

#include <cmath>
#include <numbers>

#include "histmap/error.hpp"
#include "histmap/rng.hpp"

namespace histmap {

using ag::Graph;
using ag::Param;

void ModelConfig::validate() const {
  require(input_size > 0 && patch > 0, "input_size and patch must be positive");
  require(input_size % patch == 0, "input_size must be divisible by patch");
  require(d_model > 0 && n_heads > 0 && d_model % n_heads == 0, "d_model must be divisible by n_heads");
  require(d_model % 4 == 0, "d_model must be a multiple of 4");
  require(lora_rank >= 1 && 2 * lora_rank <= d_model, "lora_rank must satisfy 1 <= r <= d_model / 2");
  require(n_enc_blocks >= 0 && n_mem_blocks >= 0 && n_dec_blocks >= 0, "block counts must be >= 0");
  require(ffn_mult >= 1 && mask_channels >= 1 && n_query_tokens >= 1, "ffn_mult, mask_channels, n_query_tokens >= 1");
}

Eigen::RowVectorXd sinusoidal_encoding(double x, double y, int dim) {
  require(dim % 4 == 0, "positional encoding width must be a multiple of 4");
  Eigen::RowVectorXd out(dim);
  const int q = dim / 4;
  for (int j = 0; j < q; ++j) {
    const double w = std::numbers::pi / 2 * std::ldexp(1.0, j);
    out(2 * j) = std::sin(w * x);
    out(2 * j + 1) = std::cos(w * x);
    out(2 * q + 2 * j) = std::sin(w * y);
    out(2 * q + 2 * j + 1) = std::cos(w * y);
  }
  return out;
}

Eigen::VectorXd lora_forward(const Eigen::VectorXd& x, const Mat& W, const Eigen::VectorXd& b, const Mat& A,
                             const Mat& B) {
  require(W.cols() == x.size() && W.rows() == b.size(), "lora_forward: W/x/b dimension mismatch");
  require(A.cols() == W.cols() && B.rows() == W.rows() && B.cols() == A.rows(),
          "lora_forward: adapter dimension mismatch");
  const Mat w = W + B * A;
  return w * x + b;
}

// ---- parameters ----

Param& ModelParams::add(const std::string& name, Mat value, bool trainable, const std::string& family) {
  Param& p = tensors_.emplace_back();
  p.name = name;
  p.value = std::move(value);
  p.trainable = trainable;
  p.family = family;
  p.zero_grad();
  return p;
}

static Mat gaussian(int rows, int cols, double stddev, Rng& rng) {
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = stddev * rng.normal();
  return m;
}

Proj ModelParams::make_proj(const std::string& name, int out, int in, bool trainable, const std::string& family,
                            Rng& rng, bool adapter) {
  Proj p;
  p.W = &add(name + ".W", gaussian(out, in, 1.0 / std::sqrt(in), rng), trainable, family);
  p.b = &add(name + ".b", Mat::Zero(1, out), trainable, family);
  if (adapter) {
    const int r = cfg_.lora_rank;
    p.A = &add(name + ".lora_A", gaussian(r, in, 1.0 / std::sqrt(in), rng), true, "lora");
    p.B = &add(name + ".lora_B", Mat::Zero(out, r), true, "lora");
  }
  return p;
}

Norm ModelParams::make_norm(const std::string& name, int dim, bool trainable, const std::string& family) {
  return {&add(name + ".gamma", Mat::Ones(1, dim), trainable, family),
          &add(name + ".beta", Mat::Zero(1, dim), trainable, family)};
}

Attention ModelParams::make_attention(const std::string& name, bool trainable, const std::string& family, Rng& rng,
                                      bool adapt_qv) {
  const int d = cfg_.d_model;
  Attention a;
  a.q = make_proj(name + ".q", d, d, trainable, family, rng, adapt_qv);
  a.k = make_proj(name + ".k", d, d, trainable, family, rng);
  a.v = make_proj(name + ".v", d, d, trainable, family, rng, adapt_qv);
  a.o = make_proj(name + ".o", d, d, trainable, family, rng);
  return a;
}

FeedForward ModelParams::make_ffn(const std::string& name, int in, int hidden, int out, bool trainable,
                                  const std::string& family, Rng& rng) {
  return {make_proj(name + ".up", hidden, in, trainable, family, rng),
          make_proj(name + ".down", out, hidden, trainable, family, rng)};
}

ModelParams::ModelParams(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(cfg_.init_seed);
  const int d = cfg_.d_model, P = cfg_.patch, G = cfg_.grid(), c = cfg_.mask_channels;
  const int hidden = cfg_.ffn_mult * d;

  patch_embed = make_proj("encoder.patch_embed", d, P * P, false, "encoder", rng);
  for (int i = 0; i < cfg_.n_enc_blocks; ++i) {
    const std::string n = "encoder.block" + std::to_string(i);
    EncoderBlock b;
    b.ln1 = make_norm(n + ".ln1", d, false, "encoder");
    b.attn = make_attention(n + ".attn", false, "encoder", rng, true);
    b.ln2 = make_norm(n + ".ln2", d, false, "encoder");
    b.ffn = make_ffn(n + ".ffn", d, hidden, d, false, "encoder", rng);
    encoder.push_back(b);
  }
  enc_out = make_norm("encoder.out", d, false, "encoder");
  prompt_corners = &add("prompt.corners", gaussian(2, d, 1.0, rng), false, "prompt_encoder");

  for (int i = 0; i < cfg_.n_mem_blocks; ++i) {
    const std::string n = "memory.block" + std::to_string(i);
    MemoryBlock b;
    b.ln_self = make_norm(n + ".ln_self", d, true, "memory_attention");
    b.self_attn = make_attention(n + ".self", true, "memory_attention", rng, false);
    b.ln_cross = make_norm(n + ".ln_cross", d, true, "memory_attention");
    b.cross_attn = make_attention(n + ".cross", true, "memory_attention", rng, false);
    b.ln_ffn = make_norm(n + ".ln_ffn", d, true, "memory_attention");
    b.ffn = make_ffn(n + ".ffn", d, hidden, d, true, "memory_attention", rng);
    memory.push_back(b);
  }
  memory_encoder = make_proj("memory_encoder.proj", d, 1, true, "memory_encoder", rng);

  query_tokens = &add("decoder.query_tokens", gaussian(cfg_.n_query_tokens, d, 1.0, rng), true, "query_tokens");
  dec_in = make_norm("decoder.in", d, true, "decoder");
  for (int i = 0; i < cfg_.n_dec_blocks; ++i) {
    const std::string n = "decoder.block" + std::to_string(i);
    DecoderBlock b;
    b.ln_self = make_norm(n + ".ln_self", d, true, "decoder");
    b.self_attn = make_attention(n + ".self", true, "decoder", rng, false);
    b.ln_t2i = make_norm(n + ".ln_t2i", d, true, "decoder");
    b.t2i = make_attention(n + ".t2i", true, "decoder", rng, false);
    b.ln_mlp = make_norm(n + ".ln_mlp", d, true, "decoder");
    b.mlp = make_ffn(n + ".mlp", d, hidden, d, true, "decoder", rng);
    b.ln_i2t_img = make_norm(n + ".ln_i2t_img", d, true, "decoder");
    b.ln_i2t_tok = make_norm(n + ".ln_i2t_tok", d, true, "decoder");
    b.i2t = make_attention(n + ".i2t", true, "decoder", rng, false);
    b.ln_img_mlp = make_norm(n + ".ln_img_mlp", d, true, "decoder");
    b.img_mlp = make_ffn(n + ".img_mlp", d, hidden, d, true, "decoder", rng);
    decoder.push_back(b);
  }
  ln_final_t2i = make_norm("decoder.final.ln_t2i", d, true, "decoder");
  final_t2i = make_attention("decoder.final.t2i", true, "decoder", rng, false);
  ln_final_out = make_norm("decoder.final.ln_out", d, true, "decoder");
  hyper = make_ffn("mask_head.hyper", d, d, c, true, "mask_head", rng);
  upscale = make_proj("mask_head.upscale", P * P * c, d, true, "mask_head", rng);
  high_res = make_proj("mask_head.high_res", c, 1, true, "mask_head", rng);
  iou_head = make_ffn("iou_head", d, d, 1, true, "iou_head", rng);

  image_pe.resize(G * G, d);
  for (int ty = 0; ty < G; ++ty)
    for (int tx = 0; tx < G; ++tx)
      image_pe.row(ty * G + tx) = sinusoidal_encoding((tx + 0.5) / G, (ty + 0.5) / G, d);
}

Param* ModelParams::find(const std::string& name) {
  for (auto& p : tensors_)
    if (p.name == name) return &p;
  return nullptr;
}

const Param* ModelParams::find(const std::string& name) const {
  for (const auto& p : tensors_)
    if (p.name == name) return &p;
  return nullptr;
}

std::vector<Param*> ModelParams::trainable() {
  std::vector<Param*> out;
  for (auto& p : tensors_)
    if (p.trainable) out.push_back(&p);
  return out;
}

std::vector<Param*> ModelParams::frozen() {
  std::vector<Param*> out;
  for (auto& p : tensors_)
    if (!p.trainable) out.push_back(&p);
  return out;
}

size_t ModelParams::scalar_count(bool trainable_only) const {
  size_t n = 0;
  for (const auto& p : tensors_)
    if (p.trainable || !trainable_only) n += static_cast<size_t>(p.value.size());
  return n;
}

void ModelParams::zero_grad() {
  for (auto& p : tensors_) p.zero_grad();
}

std::vector<Mat> ModelParams::snapshot() const {
  std::vector<Mat> out;
  out.reserve(tensors_.size());
  for (const auto& p : tensors_) out.push_back(p.value);
  return out;
}

void ModelParams::restore(const std::vector<Mat>& values) {
  require(values.size() == tensors_.size(), "restore: tensor count mismatch");
  for (size_t i = 0; i < values.size(); ++i) {
    require(values[i].rows() == tensors_[i].value.rows() && values[i].cols() == tensors_[i].value.cols(),
            "restore: shape mismatch for " + tensors_[i].name);
    tensors_[i].value = values[i];
  }
}

std::unique_ptr<ModelParams> ModelParams::clone() const {
  auto out = std::make_unique<ModelParams>(cfg_);
  out->restore(snapshot());
  return out;
}

// ---- forward ----

Var project(Graph& g, const Proj& p, Var x) {
  Var w = g.param(*p.W);
  if (p.adapted()) w = ag::add(w, ag::matmul(g.param(*p.B), g.param(*p.A)));
  return ag::add_row(ag::matmul_nt(x, w), g.param(*p.b));
}

static Var norm(Graph& g, const Norm& n, Var x) { return ag::layer_norm_rows(x, g.param(*n.gamma), g.param(*n.beta)); }

static Var feed_forward(Graph& g, const FeedForward& f, Var x) {
  return project(g, f.down, ag::gelu(project(g, f.up, x)));
}

Var attend(Graph& g, const Attention& a, int heads, Var q, Var k, Var v) {
  Var Q = project(g, a.q, q), K = project(g, a.k, k), V = project(g, a.v, v);
  const Eigen::Index d = Q.cols(), dh = d / heads;
  const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Var> outs;
  for (int h = 0; h < heads; ++h) {
    Var qh = ag::slice_cols(Q, h * dh, dh), kh = ag::slice_cols(K, h * dh, dh), vh = ag::slice_cols(V, h * dh, dh);
    Var att = ag::softmax_rows(ag::scale(ag::matmul_nt(qh, kh), inv));
    outs.push_back(ag::matmul(att, vh));
  }
  Var cat = heads == 1 ? outs[0] : ag::concat_cols(outs);
  return project(g, a.o, cat);
}

FrameEmbedding encode_frame(Graph& g, ModelParams& p, const RasterGrid& grid) {
  const auto& cfg = p.config();
  const int S = cfg.input_size, P = cfg.patch, G = cfg.grid();
  require(grid.height() == S && grid.width() == S,
          "encode_frame: grid must be " + std::to_string(S) + "x" + std::to_string(S));
  Mat patches(G * G, P * P);
  Mat dark(S * S, 1);
  for (int y = 0; y < S; ++y)
    for (int x = 0; x < S; ++x) {
      const double v = 1.0 - grid.at(x, y) / 255.0;
      patches((y / P) * G + x / P, (y % P) * P + x % P) = v;
      dark(y * S + x, 0) = v - 0.5;
    }
  Var t = ag::add(project(g, p.patch_embed, g.constant(std::move(patches))), g.constant(p.image_pe));
  for (const auto& b : p.encoder) {
    Var h = norm(g, b.ln1, t);
    t = ag::add(t, attend(g, b.attn, cfg.n_heads, h, h, h));
    t = ag::add(t, feed_forward(g, b.ffn, norm(g, b.ln2, t)));
  }
  return {norm(g, p.enc_out, t), g.constant(std::move(dark))};
}

FrameEmbedding memory_attention(Graph& g, ModelParams& p, const FrameEmbedding& f, std::span<const Var> memories) {
  const auto& cfg = p.config();
  std::optional<Var> mem, mem_keys;
  if (cfg.use_memory && !memories.empty()) {
    mem = memories.size() == 1 ? memories[0] : ag::concat_rows(memories);
    mem_keys = ag::add(*mem, g.constant(p.image_pe.replicate(static_cast<Eigen::Index>(memories.size()), 1)));
  }
  Var pe = g.constant(p.image_pe);
  Var t = f.tokens;
  for (const auto& b : p.memory) {
    Var h = norm(g, b.ln_self, t);
    Var hp = ag::add(h, pe);
    t = ag::add(t, attend(g, b.self_attn, cfg.n_heads, hp, hp, h));
    if (mem) {
      Var q = ag::add(norm(g, b.ln_cross, t), pe);
      t = ag::add(t, attend(g, b.cross_attn, cfg.n_heads, q, *mem_keys, *mem));
    }
    t = ag::add(t, feed_forward(g, b.ffn, norm(g, b.ln_ffn, t)));
  }
  return {t, f.high_res};
}

Var encode_box_prompt(Graph& g, ModelParams& p, const Box& box) {
  const int S = p.config().input_size;
  require(0 <= box.x0 && box.x0 < box.x1 && box.x1 <= S && 0 <= box.y0 && box.y0 < box.y1 && box.y1 <= S,
          "encode_box_prompt: box must satisfy 0 <= x0 < x1 <= " + std::to_string(S) + " and likewise for y");
  const int d = p.config().d_model;
  Mat pe(2, d);
  pe.row(0) = sinusoidal_encoding(static_cast<double>(box.x0) / S, static_cast<double>(box.y0) / S, d);
  pe.row(1) = sinusoidal_encoding(static_cast<double>(box.x1) / S, static_cast<double>(box.y1) / S, d);
  return ag::add(g.constant(std::move(pe)), g.param(*p.prompt_corners));
}

Decoded decode_mask(Graph& g, ModelParams& p, const FrameEmbedding& e, std::optional<Var> prompt) {
  const auto& cfg = p.config();
  const int heads = cfg.n_heads;
  Var pe = g.constant(p.image_pe);
  Var img = norm(g, p.dec_in, e.tokens);
  Var tok = g.param(*p.query_tokens);
  if (prompt) {
    const Var parts[] = {tok, *prompt};
    tok = ag::concat_rows(parts);
  }
  for (const auto& b : p.decoder) {
    Var h = norm(g, b.ln_self, tok);
    tok = ag::add(tok, attend(g, b.self_attn, heads, h, h, h));
    h = norm(g, b.ln_t2i, tok);
    tok = ag::add(tok, attend(g, b.t2i, heads, h, ag::add(img, pe), img));
    tok = ag::add(tok, feed_forward(g, b.mlp, norm(g, b.ln_mlp, tok)));
    Var ti = norm(g, b.ln_i2t_img, img), tt = norm(g, b.ln_i2t_tok, tok);
    img = ag::add(img, attend(g, b.i2t, heads, ag::add(ti, pe), tt, tt));
    img = ag::add(img, feed_forward(g, b.img_mlp, norm(g, b.ln_img_mlp, img)));
  }
  Var h = norm(g, p.ln_final_t2i, tok);
  tok = ag::add(tok, attend(g, p.final_t2i, heads, h, ag::add(img, pe), img));
  tok = norm(g, p.ln_final_out, tok);

  Var mask_token = ag::slice_rows(tok, 0, 1);
  Var hyp = feed_forward(g, p.hyper, mask_token);
  Var up = ag::unpatchify(project(g, p.upscale, img), cfg.grid(), cfg.patch, cfg.mask_channels);
  Var feat = ag::gelu(ag::add(up, project(g, p.high_res, e.high_res)));
  Var logits = ag::matmul_nt(feat, hyp);
  Var conf = ag::sigmoid(feed_forward(g, p.iou_head, mask_token));
  return {logits, conf};
}

Vec pooled_summary(const Mat& tokens) {
  const Eigen::RowVectorXd m = tokens.colwise().mean();
  const double n = m.norm();
  require(n > 0, "pooled_summary: zero token mean");
  Vec out(static_cast<size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.size(); ++i) out[static_cast<size_t>(i)] = m(i) / n;
  return out;
}

MemoryFeatures encode_memory(Graph& g, ModelParams& p, Var logits, const FrameEmbedding& f) {
  const auto& cfg = p.config();
  Var down = ag::patch_mean(ag::sigmoid(logits), cfg.grid(), cfg.patch);
  Var tokens = ag::add(f.tokens, project(g, p.memory_encoder, down));
  return {tokens, pooled_summary(tokens.value())};
}

BinaryMask threshold_logits(const Mat& logits, int size) {
  require(logits.size() == static_cast<Eigen::Index>(size) * size, "threshold_logits: size mismatch");
  BinaryMask m(size, size);
  for (int i = 0; i < size * size; ++i) m[i] = logits.data()[i] > 0.0 ? 1 : 0;
  return m;
}

}  // namespace histmap
