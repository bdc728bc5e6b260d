#include "histmap/pipeline.hpp"

#include "histmap/error.hpp"

namespace histmap {

using ag::Graph;

void BankConfig::validate() const {
  require(capacity >= 1, "bank capacity must be >= 1");
  require(retrieve_k >= 1, "retrieve_k must be >= 1");
  require(conf_threshold >= 0.0 && conf_threshold <= 1.0, "conf_threshold must be in [0, 1]");
}

Mat mask_to_column(const BinaryMask& m) {
  Mat out(static_cast<Eigen::Index>(m.size()), 1);
  for (size_t i = 0; i < m.size(); ++i) out(static_cast<Eigen::Index>(i), 0) = m[i] ? 1.0 : 0.0;
  return out;
}

namespace {

template <typename Payload, typename Lift>
std::vector<Var> memory_vars(const std::vector<MemoryEntry<Payload>>& entries, Lift lift) {
  std::vector<Var> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(lift(e.tokens));
  return out;
}

bool box_in_frame(const Box& b, int size) {
  return 0 <= b.x0 && b.x0 < b.x1 && b.x1 <= size && 0 <= b.y0 && b.y0 < b.y1 && b.y1 <= size;
}

struct Encoded {
  Mat tokens, high_res;
};

}  // namespace

std::vector<ObjectTrack> segment_video(ModelParams& p, std::span<const RasterGrid> frames,
                                       std::span<const ObjectPrompt> prompts, const BankConfig& bank) {
  bank.validate();
  const int S = p.config().input_size;
  std::vector<Encoded> enc;
  for (const auto& f : frames) {
    Graph g;
    g.set_grad_enabled(false);
    const auto e = encode_frame(g, p, f);
    enc.push_back({e.tokens.value(), e.high_res.value()});
  }

  std::vector<ObjectTrack> out;
  for (size_t o = 0; o < prompts.size(); ++o) {
    ObjectTrack tr;
    tr.id = prompts[o].id;
    if (!box_in_frame(prompts[o].box, S)) {
      tr.rejected = true;
      tr.reason = "prompt box outside the " + std::to_string(S) + "x" + std::to_string(S) + " frame";
      out.push_back(std::move(tr));
      continue;
    }
    MemoryBank<Mat> mem(BankPolicy::fifo, bank.capacity);
    Rng rng(derive_seed(bank.seed, o));
    for (size_t t = 0; t < frames.size(); ++t) {
      Graph g;
      g.set_grad_enabled(false);
      FrameEmbedding f{g.constant(enc[t].tokens), g.constant(enc[t].high_res)};
      const Vec query = pooled_summary(enc[t].tokens);
      const auto entries = mem.retrieve(query, bank.retrieve_k, RetrieveMode::recent_k, rng);
      const auto mvars = memory_vars(entries, [&](const Mat& m) { return g.constant(m); });
      const auto e = memory_attention(g, p, f, mvars);
      std::optional<Var> prompt;
      if (t == 0) prompt = encode_box_prompt(g, p, prompts[o].box);
      const auto dec = decode_mask(g, p, e, prompt);
      const double conf = dec.confidence.value()(0, 0);
      tr.masks.push_back(threshold_logits(dec.logits.value(), S));
      tr.confidences.push_back(conf);
      auto mf = encode_memory(g, p, dec.logits, f);
      mem.update_fifo({mf.tokens.value(), std::move(mf.pooled), conf, static_cast<int>(t), 0});
    }
    out.push_back(std::move(tr));
  }
  return out;
}

std::vector<TileResult> segment_tileset(ModelParams& p, std::span<const RasterGrid> tiles, const BankConfig& bank) {
  bank.validate();
  const int S = p.config().input_size;
  MemoryBank<Mat> mem(BankPolicy::self_sorting, bank.capacity);
  Rng rng(bank.seed);
  std::vector<TileResult> out;
  for (size_t i = 0; i < tiles.size(); ++i) {
    Graph g;
    g.set_grad_enabled(false);
    const auto f = encode_frame(g, p, tiles[i]);
    const Vec query = pooled_summary(f.tokens.value());
    const auto entries = mem.retrieve(query, bank.retrieve_k, bank.tileset_mode, rng);
    const auto mvars = memory_vars(entries, [&](const Mat& m) { return g.constant(m); });
    const auto e = memory_attention(g, p, f, mvars);
    const auto dec = decode_mask(g, p, e, std::nullopt);
    TileResult r;
    r.mask = threshold_logits(dec.logits.value(), S);
    r.confidence = dec.confidence.value()(0, 0);
    auto mf = encode_memory(g, p, dec.logits, f);
    r.stored = mem.update_self_sorting({mf.tokens.value(), std::move(mf.pooled), r.confidence, static_cast<int>(i), 0},
                                       bank.conf_threshold);
    out.push_back(std::move(r));
  }
  return out;
}

namespace {

struct LossAccumulator {
  std::vector<Var> terms;
  double bce = 0.0, mse = 0.0;
  std::vector<double> targets;

  void add(const Decoded& dec, const BinaryMask& gt, int size, const std::vector<double>* fixed) {
    const Mat target = mask_to_column(gt);
    const double iou = fixed ? fixed->at(targets.size()) : binary_iou(threshold_logits(dec.logits.value(), size), gt);
    Var b = ag::bce_with_logits(dec.logits, target);
    Var m = ag::squared_error(dec.confidence, iou);
    bce += b.value()(0, 0);
    mse += m.value()(0, 0);
    targets.push_back(iou);
    terms.push_back(ag::add(b, m));
  }

  LossTerms finish(Graph& g) {
    LossTerms out;
    out.terms = terms.size();
    out.iou_targets = std::move(targets);
    if (terms.empty()) {
      out.loss = g.constant(Mat::Zero(1, 1));
      return out;
    }
    const double n = static_cast<double>(terms.size());
    Var total = terms.size() == 1 ? terms[0] : ag::sum_all(ag::concat_rows(terms));
    out.loss = ag::scale(total, 1.0 / n);
    out.bce = bce / n;
    out.iou_mse = mse / n;
    return out;
  }
};

}  // namespace

LossTerms video_loss(Graph& g, ModelParams& p, std::span<const RasterGrid> frames, std::span<const InstanceMask> gts,
                     const BankConfig& bank, const std::vector<double>* iou_targets) {
  require(!frames.empty() && frames.size() == gts.size(), "video_loss: need one mask per frame");
  const int S = p.config().input_size;
  std::vector<FrameEmbedding> enc;
  for (const auto& f : frames) enc.push_back(encode_frame(g, p, f));
  LossAccumulator acc;
  const auto prompts = oracle_prompts(gts[0]);
  for (const auto& pr : prompts) {
    MemoryBank<Var> mem(BankPolicy::fifo, bank.capacity);
    Rng rng(0);
    for (size_t t = 0; t < frames.size(); ++t) {
      const auto entries = mem.retrieve({}, bank.retrieve_k, RetrieveMode::recent_k, rng);
      const auto mvars = memory_vars(entries, [](Var v) { return v; });
      const auto e = memory_attention(g, p, enc[t], mvars);
      std::optional<Var> prompt;
      if (t == 0) prompt = encode_box_prompt(g, p, pr.box);
      const auto dec = decode_mask(g, p, e, prompt);
      acc.add(dec, select_label(gts[t], pr.id), S, iou_targets);
      if (t + 1 < frames.size()) {
        auto mf = encode_memory(g, p, dec.logits, enc[t]);
        mem.update_fifo({mf.tokens, std::move(mf.pooled), dec.confidence.value()(0, 0), static_cast<int>(t), 0});
      }
    }
  }
  return acc.finish(g);
}

LossTerms tileset_loss(Graph& g, ModelParams& p, std::span<const RasterGrid> tiles, std::span<const InstanceMask> gts,
                       const BankConfig& bank, const std::vector<double>* iou_targets) {
  require(!tiles.empty() && tiles.size() == gts.size(), "tileset_loss: need one mask per tile");
  const int S = p.config().input_size;
  MemoryBank<Var> mem(BankPolicy::self_sorting, bank.capacity);
  Rng rng(bank.seed);
  LossAccumulator acc;
  for (size_t i = 0; i < tiles.size(); ++i) {
    const auto f = encode_frame(g, p, tiles[i]);
    const Vec query = pooled_summary(f.tokens.value());
    const auto entries = mem.retrieve(query, bank.retrieve_k, bank.tileset_mode, rng);
    const auto mvars = memory_vars(entries, [](Var v) { return v; });
    const auto e = memory_attention(g, p, f, mvars);
    const auto dec = decode_mask(g, p, e, std::nullopt);
    acc.add(dec, foreground(gts[i]), S, iou_targets);
    if (i + 1 < tiles.size()) {
      auto mf = encode_memory(g, p, dec.logits, f);
      mem.update_self_sorting({mf.tokens, std::move(mf.pooled), dec.confidence.value()(0, 0), static_cast<int>(i), 0},
                              bank.conf_threshold);
    }
  }
  return acc.finish(g);
}

}  // namespace histmap
