#include "histmap/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

#include "histmap/error.hpp"

namespace histmap {

using ag::Graph;
using ag::Param;

void TrainConfig::validate() const {
  require(epochs >= 1, "epochs must be >= 1");
  require(lr > 0 && weight_decay >= 0, "lr must be > 0 and weight_decay >= 0");
  require(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1 && eps > 0, "invalid Adam constants");
  require(frames_per_sample >= 1, "frames_per_sample must be >= 1");
  require(stream_len >= 1, "stream_len must be >= 1");
  require(val_every >= 1, "val_every must be >= 1");
  bank.validate();
}

AdamW::AdamW(std::vector<Param*> params, double lr, double weight_decay, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), wd_(weight_decay), b1_(beta1), b2_(beta2), eps_(eps) {
  for (auto* p : params_) {
    m_.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
  }
}

void AdamW::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    Param& p = *params_[i];
    const Mat& g = p.grad;
    m_[i] = b1_ * m_[i] + (1.0 - b1_) * g;
    v_[i] = b2_ * v_[i] + (1.0 - b2_) * g.cwiseProduct(g);
    p.value *= 1.0 - lr_ * wd_;
    p.value.array() -= lr_ * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
  }
}

std::vector<size_t> sample_frames(size_t n_frames, size_t count, Rng& rng) {
  std::vector<size_t> idx(n_frames);
  for (size_t i = 0; i < n_frames; ++i) idx[i] = i;
  if (count >= n_frames) return idx;
  for (size_t i = 0; i < count; ++i) {
    const auto j = static_cast<size_t>(rng.uniform_int(static_cast<int64_t>(i), static_cast<int64_t>(n_frames - 1)));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(count);
  std::sort(idx.begin(), idx.end());
  return idx;
}

MatchResult evaluate_video(ModelParams& p, const VideoSample& video, std::span<const ObjectPrompt> prompts,
                           const BankConfig& bank) {
  const auto tracks = segment_video(p, video.frames, prompts, bank);
  std::vector<LinkedInstance> preds;
  for (const auto& t : tracks)
    if (!t.rejected) preds.push_back({t.id, t.masks});
  const auto gts = tracks_from_masks(video.masks);
  return match_instances(preds, gts, 0.5);
}

double validation_score(ModelParams& p, std::span<const VideoSample> set, const TrainConfig& cfg) {
  if (cfg.mode == TaskMode::video) {
    size_t tp = 0, fp = 0, fn = 0;
    for (const auto& v : set) {
      const auto r = evaluate_video(p, v, oracle_prompts(v.masks.front()), cfg.bank);
      tp += r.tp;
      fp += r.fp;
      fn += r.fn;
    }
    return prf1(tp, fp, fn).f1;
  }
  std::vector<RasterGrid> tiles;
  for (const auto& v : set) tiles.push_back(v.frames.front());
  const auto res = segment_tileset(p, tiles, cfg.bank);
  IouAccumulator acc;
  for (size_t i = 0; i < set.size(); ++i) acc.add(res[i].mask, foreground(set[i].masks.front()));
  return acc.value();
}

TrainReport train(ModelParams& p, std::span<const VideoSample> train_set, std::span<const VideoSample> val_set,
                  const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  require(!train_set.empty(), "train: empty dataset");
  for (const auto& v : train_set)
    require(!v.frames.empty() && v.frames.size() == v.masks.size(), "train: sample needs one mask per frame");

  AdamW opt(p.trainable(), cfg.lr, cfg.weight_decay, cfg.beta1, cfg.beta2, cfg.eps);
  Rng rng(cfg.seed);
  std::vector<size_t> order(train_set.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  TrainReport report;
  std::vector<Mat> best;
  double best_val = -std::numeric_limits<double>::infinity();
  uint64_t step = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(i - 1)))]);

    double loss_sum = 0, bce_sum = 0, mse_sum = 0;
    size_t steps = 0;
    auto run = [&](LossTerms& L, Graph& g) {
      if (L.terms == 0) return;
      g.backward(L.loss);
      opt.step();
      loss_sum += L.loss.value()(0, 0);
      bce_sum += L.bce;
      mse_sum += L.iou_mse;
      ++steps;
    };

    if (cfg.mode == TaskMode::video) {
      for (size_t idx : order) {
        const auto& v = train_set[idx];
        std::vector<RasterGrid> frames;
        std::vector<InstanceMask> masks;
        for (size_t f : sample_frames(v.frames.size(), cfg.frames_per_sample, rng)) {
          frames.push_back(v.frames[f]);
          masks.push_back(v.masks[f]);
        }
        p.zero_grad();
        Graph g;
        auto L = video_loss(g, p, frames, masks, cfg.bank);
        run(L, g);
        ++step;
      }
    } else {
      for (size_t s = 0; s < order.size(); s += cfg.stream_len) {
        std::vector<RasterGrid> tiles;
        std::vector<InstanceMask> masks;
        for (size_t j = s; j < std::min(order.size(), s + cfg.stream_len); ++j) {
          tiles.push_back(train_set[order[j]].frames.front());
          masks.push_back(train_set[order[j]].masks.front());
        }
        BankConfig bank = cfg.bank;
        bank.seed = derive_seed(cfg.seed, step);
        p.zero_grad();
        Graph g;
        auto L = tileset_loss(g, p, tiles, masks, bank);
        run(L, g);
        ++step;
      }
    }

    EpochRecord rec;
    rec.epoch = epoch;
    if (steps) {
      rec.loss = loss_sum / static_cast<double>(steps);
      rec.bce = bce_sum / static_cast<double>(steps);
      rec.iou_mse = mse_sum / static_cast<double>(steps);
    }
    const bool validate = !val_set.empty() && ((epoch + 1) % cfg.val_every == 0 || epoch + 1 == cfg.epochs);
    rec.val_score = validate ? validation_score(p, val_set, cfg) : std::numeric_limits<double>::quiet_NaN();
    if (val_set.empty() || (validate && rec.val_score > best_val)) {
      best_val = rec.val_score;
      rec.best = true;
      report.best_epoch = epoch;
      if (cfg.keep_best && !val_set.empty()) best = p.snapshot();
    }
    report.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  report.best_val = best_val;
  if (cfg.keep_best && !best.empty()) p.restore(best);
  return report;
}

GradCheckReport grad_check(ModelParams& p, const VideoSample& sample, const BankConfig& bank,
                           const GradCheckOptions& opt) {
  require(!sample.frames.empty() && sample.frames.size() == sample.masks.size(), "grad_check: malformed sample");
  // analytic pass
  p.zero_grad();
  std::vector<double> targets;
  {
    Graph g;
    auto L = video_loss(g, p, sample.frames, sample.masks, bank);
    require(L.terms > 0, "grad_check: sample has no objects in frame 0");
    targets = L.iou_targets;
    g.backward(L.loss);
  }
  auto loss_at = [&]() {
    Graph g;
    g.set_grad_enabled(false);
    return video_loss(g, p, sample.frames, sample.masks, bank, &targets).loss.value()(0, 0);
  };

  // stratified sample: equal share per family
  std::map<std::string, std::vector<Param*>> families;
  for (auto* t : p.trainable()) families[t->family].push_back(t);
  Rng rng(opt.seed);
  const size_t per_family = (opt.min_scalars + families.size() - 1) / families.size();
  std::vector<std::pair<Param*, Eigen::Index>> picks;
  GradCheckReport rep;
  for (auto& [fam, tensors] : families) {
    rep.families.push_back(fam);
    size_t total = 0;
    for (auto* t : tensors) total += static_cast<size_t>(t->value.size());
    std::set<std::pair<Param*, Eigen::Index>> chosen;
    const size_t want = std::min(per_family, total);
    while (chosen.size() < want) {
      auto flat = static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(total - 1)));
      for (auto* t : tensors) {
        if (flat < static_cast<size_t>(t->value.size())) {
          chosen.insert({t, static_cast<Eigen::Index>(flat)});
          break;
        }
        flat -= static_cast<size_t>(t->value.size());
      }
    }
    picks.insert(picks.end(), chosen.begin(), chosen.end());
  }

  std::vector<double> analytic;
  for (auto& [t, i] : picks) analytic.push_back(t->grad.data()[i]);
  if (opt.corrupt_factor != 1.0) {
    size_t k = 0;
    for (size_t j = 1; j < analytic.size(); ++j)
      if (std::abs(analytic[j]) > std::abs(analytic[k])) k = j;
    analytic[k] *= opt.corrupt_factor;
  }

  for (size_t j = 0; j < picks.size(); ++j) {
    auto& [t, i] = picks[j];
    double& x = t->value.data()[i];
    const double orig = x;
    x = orig + opt.step;
    const double up = loss_at();
    x = orig - opt.step;
    const double down = loss_at();
    x = orig;
    const double numeric = (up - down) / (2 * opt.step);
    const double ga = analytic[j];
    const double rel = std::abs(ga - numeric) / std::max(std::abs(ga) + std::abs(numeric), 1e-8);
    if (rel > rep.max_rel_error || rep.worst.empty()) {
      rep.max_rel_error = std::max(rep.max_rel_error, rel);
      if (rel >= rep.max_rel_error) rep.worst = t->name + "[" + std::to_string(i) + "]";
    }
  }
  rep.checked = picks.size();
  return rep;
}

}  // namespace histmap
