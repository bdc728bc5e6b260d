#include "histmap/commands.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

#include "histmap/checkpoint.hpp"
#include "histmap/dataset.hpp"
#include "histmap/error.hpp"
#include "histmap/eval.hpp"
#include "histmap/image_io.hpp"
#include "histmap/render.hpp"

namespace histmap {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

enum SeedStream : uint64_t { kGenmap = 1, kSynth = 2, kInit = 3, kTrain = 4, kBank = 5, kJitter = 6 };

class Timer {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

RunManifest begin(const RunContext& ctx, const std::string& command) {
  RunManifest m;
  m.command = command;
  m.config = dump_settings(ctx.settings);
  m.seed = ctx.settings.seed;
  fs::create_directories(ctx.out);
  return m;
}

void finish(const RunContext& ctx, RunManifest& m, const Timer& t) {
  m.wall_clock_s = t.seconds();
  write_run_manifest(ctx.out, m);
}

void say(const RunContext& ctx, const std::string& line) {
  if (ctx.log) *ctx.log << line << "\n";
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  if (!out || !(out << text)) fail(ErrorKind::io, "cannot write " + p.string());
}

std::string item_name(const char* stem, size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%04zu", stem, i);
  return buf;
}

void save_overlay(const fs::path& path, const RasterGrid& grid, const std::vector<Label>& ids,
                  const std::vector<BinaryMask>& masks) {
  const auto img = render_overlay(grid, ids, masks);
  save_rgb(path, img.height, img.width, img.px);
}

BinaryMask load_binary(const fs::path& p) {
  const RasterGrid g = load_grid(p);
  BinaryMask m(g.height(), g.width());
  for (size_t i = 0; i < g.size(); ++i) m[i] = g[i] ? 1 : 0;
  return m;
}

std::vector<ObjectPrompt> prompts_for(const RunContext& ctx, const VideoData& v, const VideoSample& s, size_t index) {
  const auto& pp = ctx.settings.prompts;
  if (pp.mode == PromptMode::from_file) {
    fs::path file = pp.file;
    if (file.empty())
      file = fs::path(v.name) / "prompts.json";
    else if (fs::is_directory(file))
      file = file / (v.name + ".json");
    return load_prompts(file);
  }
  if (s.masks.empty()) fail(ErrorKind::invalid_argument, v.name + ": oracle prompts need instance masks");
  PromptProvider p = pp;
  p.seed = derive_seed(derive_seed(ctx.settings.seed, kJitter), index);
  return provide_prompts(s.masks.front(), p);
}

}  // namespace

json manifest_to_json(const RunManifest& m) {
  json items = json::array();
  for (const auto& it : m.items) items.push_back({{"name", it.name}, {"status", it.status}, {"flags", it.flags}});
  return {{"command", m.command},       {"config", m.config},
          {"seed", m.seed},             {"inputs", m.inputs},
          {"outputs", m.outputs},       {"tool_version", m.tool_version},
          {"wall_clock_s", m.wall_clock_s}, {"items", items}};
}

void write_run_manifest(const fs::path& out_dir, const RunManifest& m) {
  fs::create_directories(out_dir);
  write_text(out_dir / "run_manifest.json", manifest_to_json(m).dump(2) + "\n");
}

RunManifest cmd_genmap(const RunContext& ctx) {
  Timer timer;
  const auto& s = ctx.settings;
  RunManifest m = begin(ctx, "genmap");
  const uint64_t base = derive_seed(s.seed, kGenmap);
  for (int i = 0; i < s.n_maps; ++i) {
    const std::string name = item_name("map", static_cast<size_t>(i));
    const auto f = gen_synthetic_map(s.map_size, s.map_size, s.n_buildings, derive_seed(base, static_cast<uint64_t>(i)),
                                     s.synth.rect_size);
    save_video(ctx.out / name, std::span(&f, 1), FrameOrder::chronological);
    m.items.push_back({name, "ok", {}});
    m.outputs.push_back((ctx.out / name).string());
    say(ctx, "genmap " + name + ": " + std::to_string(inventory(f.mask).size()) + " buildings");
  }
  finish(ctx, m, timer);
  return m;
}

RunManifest cmd_synth(const RunContext& ctx, const fs::path& in_dir) {
  Timer timer;
  const auto& s = ctx.settings;
  RunManifest m = begin(ctx, "synth");
  m.inputs.push_back(in_dir.string());
  const uint64_t base = derive_seed(s.seed, kSynth);
  const auto videos = list_videos(in_dir);
  for (size_t i = 0; i < videos.size(); ++i) {
    const auto v = load_video(videos[i]);
    if (v.masks.empty()) fail(ErrorKind::invalid_argument, v.name + ": synth needs instance masks");
    const size_t latest = processing_order(v.frames.size(), v.manifest.order).front();
    SynthConfig cfg = s.synth;
    cfg.seed = derive_seed(base, i);
    const auto pv = synthesize_pseudo_video({v.frames[latest], v.masks[latest]}, cfg);
    save_video(ctx.out / v.name, pv.frames, FrameOrder::chronological, pv.flags);
    m.items.push_back({v.name, "ok", pv.flags});
    m.outputs.push_back((ctx.out / v.name).string());
    say(ctx, "synth " + v.name + ": " + std::to_string(pv.log.size()) + " transforms");
  }
  finish(ctx, m, timer);
  return m;
}

RunManifest cmd_train(const RunContext& ctx, const fs::path& dataset) {
  Timer timer;
  const auto& s = ctx.settings;
  RunManifest m = begin(ctx, "train");
  m.inputs.push_back(dataset.string());
  std::vector<VideoSample> all;
  for (const auto& dir : list_videos(dataset)) {
    const auto v = load_video(dir);
    if (v.masks.empty()) fail(ErrorKind::invalid_argument, v.name + ": training needs instance masks");
    if (!v.frames[0].same_shape(s.model.input_size, s.model.input_size))
      fail(ErrorKind::invalid_argument, v.name + ": frames must be " + std::to_string(s.model.input_size) + "x" +
                                            std::to_string(s.model.input_size) + " to match input_size");
    all.push_back(to_sample(v));
    m.items.push_back({v.name, "train", {}});
  }
  size_t n_val = s.val_count >= 0 ? static_cast<size_t>(s.val_count) : (all.size() >= 2 ? std::max<size_t>(1, all.size() / 5) : 0);
  require(n_val < all.size(), "val_count must leave at least one training video");
  for (size_t i = all.size() - n_val; i < all.size(); ++i) m.items[i].status = "validation";
  const std::span<const VideoSample> train_set(all.data(), all.size() - n_val);
  const std::span<const VideoSample> val_set(all.data() + train_set.size(), n_val);

  ModelConfig mc = s.model;
  mc.init_seed = derive_seed(s.seed, kInit);
  ModelParams params(mc);
  TrainConfig tc = s.train;
  tc.seed = derive_seed(s.seed, kTrain);
  tc.bank.seed = derive_seed(s.seed, kBank);

  std::string metrics;
  const auto report = train(params, train_set, val_set, tc, [&](const EpochRecord& r) {
    json line = {{"epoch", r.epoch}, {"loss", r.loss}, {"bce", r.bce}, {"iou_mse", r.iou_mse}, {"best", r.best}};
    line["val_score"] = std::isnan(r.val_score) ? json(nullptr) : json(r.val_score);
    metrics += line.dump() + "\n";
    char buf[160];
    std::snprintf(buf, sizeof buf, "epoch %3d  loss %.5f  bce %.5f  iou_mse %.5f  val %s", r.epoch, r.loss, r.bce,
                  r.iou_mse, std::isnan(r.val_score) ? "-" : std::to_string(r.val_score).c_str());
    say(ctx, buf);
  });
  write_text(ctx.out / "metrics.jsonl", metrics);
  json meta = {{"best_epoch", report.best_epoch},
               {"best_val", std::isfinite(report.best_val) ? json(report.best_val) : json(nullptr)},
               {"epochs", tc.epochs},
               {"mode", tc.mode == TaskMode::video ? "video" : "tileset"}};
  save_checkpoint(ctx.out / "model.ckpt", params, meta);
  m.outputs = {(ctx.out / "model.ckpt").string(), (ctx.out / "metrics.jsonl").string()};
  finish(ctx, m, timer);
  return m;
}

RunManifest cmd_infer(const RunContext& ctx, const fs::path& checkpoint, const fs::path& input) {
  Timer timer;
  const auto& s = ctx.settings;
  RunManifest m = begin(ctx, "infer");
  m.inputs = {checkpoint.string(), input.string()};
  auto ck = load_checkpoint(checkpoint);
  ModelParams& params = *ck.params;
  const int S = params.config().input_size;
  BankConfig bank = s.train.bank;
  bank.seed = derive_seed(s.seed, kBank);
  const auto videos = list_videos(input);

  if (s.train.mode == TaskMode::tileset) {
    std::vector<VideoData> items;
    std::vector<RasterGrid> tiles;
    for (const auto& dir : videos) {
      auto v = load_video(dir);
      const size_t latest = processing_order(v.frames.size(), v.manifest.order).front();
      if (!v.frames[latest].same_shape(S, S))
        fail(ErrorKind::invalid_argument, v.name + ": tile must be " + std::to_string(S) + "x" + std::to_string(S));
      tiles.push_back(v.frames[latest]);
      items.push_back(std::move(v));
    }
    const auto res = segment_tileset(params, tiles, bank);
    json summary = json::array();
    for (size_t i = 0; i < items.size(); ++i) {
      const fs::path dir = ctx.out / items[i].name;
      fs::create_directories(dir);
      RasterGrid g(S, S);
      for (size_t k = 0; k < g.size(); ++k) g[k] = res[i].mask[k] ? 255 : 0;
      save_grid(dir / "pred.png", g);
      save_overlay(dir / "overlay.png", tiles[i], {1}, {res[i].mask});
      summary.push_back({{"name", items[i].name}, {"confidence", res[i].confidence}, {"stored", res[i].stored}});
      m.items.push_back({items[i].name, "ok", {res[i].stored ? "stored-in-bank" : "not-stored"}});
      m.outputs.push_back(dir.string());
    }
    write_text(ctx.out / "tileset.json", summary.dump(2) + "\n");
    finish(ctx, m, timer);
    return m;
  }

  for (size_t i = 0; i < videos.size(); ++i) {
    const auto v = load_video(videos[i]);
    ItemStatus st{v.name, "ok", {}};
    if (!v.frames[0].same_shape(S, S)) {
      st.status = "rejected";
      st.flags.push_back("frame size differs from input_size " + std::to_string(S));
      m.items.push_back(st);
      continue;
    }
    const VideoSample sample = to_sample(v);
    const auto prompts = prompts_for(ctx, v, sample, i);
    const auto tracks = segment_video(params, sample.frames, prompts, bank);
    const auto order = processing_order(v.frames.size(), v.manifest.order);

    PredictedVideo pv;
    pv.name = v.name;
    pv.n_frames = v.frames.size();
    for (const auto& t : tracks) {
      if (t.rejected) {
        st.flags.push_back("object " + std::to_string(t.id) + " rejected: " + t.reason);
        continue;
      }
      LinkedInstance inst{t.id, std::vector<BinaryMask>(pv.n_frames)};
      std::vector<double> conf(pv.n_frames);
      for (size_t k = 0; k < order.size(); ++k) {
        inst.masks[order[k]] = t.masks[k];
        conf[order[k]] = t.confidences[k];
      }
      pv.objects.push_back(std::move(inst));
      pv.confidences.push_back(std::move(conf));
    }
    pv.flags = st.flags;
    const fs::path dir = ctx.out / v.name;
    save_predictions(dir, pv);
    std::vector<Label> ids;
    for (const auto& o : pv.objects) ids.push_back(o.id);
    for (size_t f = 0; f < pv.n_frames; ++f) {
      std::vector<BinaryMask> masks;
      for (const auto& o : pv.objects) masks.push_back(o.masks[f]);
      char buf[32];
      std::snprintf(buf, sizeof buf, "overlay_%04zu.png", f);
      save_overlay(dir / buf, v.frames[f], ids, masks);
    }
    say(ctx, "infer " + v.name + ": " + std::to_string(pv.objects.size()) + " objects");
    m.items.push_back(st);
    m.outputs.push_back(dir.string());
  }
  finish(ctx, m, timer);
  return m;
}

RunManifest cmd_eval(const RunContext& ctx, const fs::path& pred_dir, const fs::path& gt_dir) {
  Timer timer;
  const auto& s = ctx.settings;
  RunManifest m = begin(ctx, "eval");
  m.inputs = {pred_dir.string(), gt_dir.string()};
  if (!fs::is_directory(pred_dir)) fail(ErrorKind::io, "not a directory: " + pred_dir.string());
  json per_item = json::array();
  json report;
  std::ostringstream table;

  if (s.train.mode == TaskMode::tileset) {
    IouAccumulator acc;
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-24s %10s %10s %8s\n", "item", "inter", "union", "iou");
    table << buf;
    for (const auto& dir : list_videos(gt_dir)) {
      const auto v = load_video(dir);
      if (v.masks.empty()) fail(ErrorKind::invalid_argument, v.name + ": ground truth needs instance masks");
      const size_t latest = processing_order(v.frames.size(), v.manifest.order).front();
      const BinaryMask gt = foreground(v.masks[latest]);
      ItemStatus st{v.name, "ok", {}};
      BinaryMask pred(gt.height(), gt.width());
      const fs::path pp = pred_dir / v.name / "pred.png";
      if (fs::exists(pp)) {
        pred = load_binary(pp);
        if (!pred.same_shape(gt)) fail(ErrorKind::format, pp.string() + ": size differs from ground truth");
      } else {
        st.status = "missing";
        st.flags.push_back("no prediction; scored as empty");
      }
      const auto ov = overlap(pred, gt);
      acc.add(pred, gt);
      per_item.push_back({{"name", v.name}, {"intersection", ov.intersection}, {"union", ov.uni},
                          {"iou", binary_iou(pred, gt)}});
      std::snprintf(buf, sizeof buf, "%-24s %10zu %10zu %8.4f\n", v.name.c_str(), ov.intersection, ov.uni,
                    binary_iou(pred, gt));
      table << buf;
      m.items.push_back(st);
    }
    report = {{"iou", acc.value()}, {"intersection", acc.intersection()}, {"union", acc.uni()}};
    std::snprintf(buf, sizeof buf, "%-24s %10zu %10zu %8.4f\n", "TOTAL", acc.intersection(), acc.uni(), acc.value());
    table << buf;
  } else {
    size_t tp = 0, fp = 0, fn = 0;
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-24s %5s %5s %5s\n", "video", "tp", "fp", "fn");
    table << buf;
    for (const auto& dir : list_videos(gt_dir)) {
      const auto v = load_video(dir);
      if (v.masks.empty()) fail(ErrorKind::invalid_argument, v.name + ": ground truth needs instance masks");
      const auto gts = tracks_from_masks(v.masks);
      ItemStatus st{v.name, "ok", {}};
      std::vector<LinkedInstance> preds;
      if (fs::exists(pred_dir / v.name / "predictions.json")) {
        auto pv = load_predictions(pred_dir / v.name);
        if (pv.n_frames != v.frames.size())
          fail(ErrorKind::format, v.name + ": prediction has " + std::to_string(pv.n_frames) + " frames, ground truth " +
                                      std::to_string(v.frames.size()));
        preds = std::move(pv.objects);
      } else {
        st.status = "missing";
        st.flags.push_back("no predictions; every ground-truth track counts as missed");
      }
      const auto r = match_instances(preds, gts, 0.5);
      tp += r.tp;
      fp += r.fp;
      fn += r.fn;
      json pairs = json::array();
      for (const auto& p : r.pairs) pairs.push_back({{"pred", p.pred}, {"gt", p.gt}, {"st_iou", p.iou}});
      per_item.push_back({{"name", v.name}, {"tp", r.tp}, {"fp", r.fp}, {"fn", r.fn}, {"pairs", pairs}});
      std::snprintf(buf, sizeof buf, "%-24s %5zu %5zu %5zu\n", v.name.c_str(), r.tp, r.fp, r.fn);
      table << buf;
      m.items.push_back(st);
    }
    const Prf1 q = prf1(tp, fp, fn);
    report = {{"precision", q.precision}, {"recall", q.recall}, {"f1", q.f1}, {"tp", tp}, {"fp", fp}, {"fn", fn}};
    std::snprintf(buf, sizeof buf, "%-24s %5zu %5zu %5zu   P %.4f  R %.4f  F1 %.4f\n", "TOTAL", tp, fp, fn,
                  q.precision, q.recall, q.f1);
    table << buf;
  }
  write_text(ctx.out / "report.json", report.dump(2) + "\n");
  write_text(ctx.out / "per_item.json", per_item.dump(2) + "\n");
  if (ctx.log) *ctx.log << table.str();
  m.outputs = {(ctx.out / "report.json").string(), (ctx.out / "per_item.json").string()};
  finish(ctx, m, timer);
  return m;
}

RunManifest cmd_bankdemo(const RunContext& ctx, const fs::path& embeddings, BankDemoPolicy policy) {
  Timer timer;
  const auto& s = ctx.settings;
  RunManifest m = begin(ctx, "bankdemo");
  m.inputs.push_back(embeddings.string());
  std::ifstream in(embeddings);
  if (!in) fail(ErrorKind::io, "cannot open " + embeddings.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::schema, embeddings.string() + ": JSON syntax error at byte " + std::to_string(e.byte));
  }
  const std::string o = embeddings.string();
  if (!doc.is_object() || !doc.contains("embeddings") || !doc["embeddings"].is_array())
    fail(ErrorKind::schema, o + ": expected an object with an \"embeddings\" array");
  struct Item {
    Vec v;
    double c;
  };
  std::vector<Item> items;
  const auto& arr = doc["embeddings"];
  for (size_t i = 0; i < arr.size(); ++i) {
    const std::string where = o + ": embeddings[" + std::to_string(i) + "]";
    const auto& e = arr[i];
    if (!e.is_object() || !e.contains("vector") || !e["vector"].is_array() || e["vector"].empty())
      fail(ErrorKind::schema, where + ".vector: expected a nonempty array of numbers");
    Item it;
    double norm = 0;
    for (const auto& x : e["vector"]) {
      if (!x.is_number()) fail(ErrorKind::schema, where + ".vector: expected numbers");
      it.v.push_back(x.get<double>());
      norm += it.v.back() * it.v.back();
    }
    if (norm == 0) fail(ErrorKind::schema, where + ".vector: must not be all zeros");
    if (!items.empty() && it.v.size() != items[0].v.size())
      fail(ErrorKind::schema, where + ".vector: dimension differs from embeddings[0]");
    it.c = e.value("confidence", 1.0);
    if (!(it.c >= 0 && it.c <= 1)) fail(ErrorKind::schema, where + ".confidence: must be in [0, 1]");
    items.push_back(std::move(it));
  }
  if (items.empty()) fail(ErrorKind::invalid_argument, o + ": no embeddings");

  const auto& bc = s.train.bank;
  MemoryBank<int> bank(policy == BankDemoPolicy::fifo ? BankPolicy::fifo : BankPolicy::self_sorting, bc.capacity);
  const RetrieveMode mode = policy == BankDemoPolicy::fifo ? RetrieveMode::recent_k : bc.tileset_mode;
  Rng rng(derive_seed(s.seed, kBank));
  std::string trace;
  for (size_t i = 0; i < items.size(); ++i) {
    json retrieved = json::array();
    for (const auto& e : bank.retrieve(items[i].v, bc.retrieve_k, mode, rng)) retrieved.push_back(e.source_index);
    const bool kept = bank.update({static_cast<int>(i), items[i].v, items[i].c, static_cast<int>(i), 0},
                                  bc.conf_threshold);
    json state = json::array();
    for (const auto& e : bank.entries())
      state.push_back({{"source", e.source_index}, {"tick", e.insertion_tick}, {"confidence", e.confidence}});
    trace += json{{"step", i}, {"retrieved", retrieved}, {"admitted", kept}, {"bank", state}}.dump() + "\n";
  }
  write_text(ctx.out / "trace.jsonl", trace);
  m.outputs.push_back((ctx.out / "trace.jsonl").string());
  say(ctx, "bankdemo: " + std::to_string(items.size()) + " steps, final size " + std::to_string(bank.size()));
  finish(ctx, m, timer);
  return m;
}

}  // namespace histmap
