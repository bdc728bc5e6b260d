#include <doctest.h>

#include <cmath>
#include <fstream>

#include "histmap/checkpoint.hpp"
#include "histmap/pipeline.hpp"
#include "histmap/synth.hpp"
#include "histmap/train.hpp"

using namespace histmap;

namespace {

ModelConfig small_config(uint64_t seed = 0) {
  ModelConfig c;
  c.input_size = 32;
  c.patch = 8;
  c.d_model = 16;
  c.n_heads = 2;
  c.mask_channels = 4;
  c.init_seed = seed;
  return c;
}

VideoSample make_video(uint64_t seed, int size = 32, int buildings = 2, CountRange rect = {5, 10}) {
  const auto f = gen_synthetic_map(size, size, buildings, seed, rect);
  SynthConfig sc;
  sc.seed = seed + 1000;
  sc.rect_size = rect;
  const auto pv = synthesize_pseudo_video(f, sc);
  return {{pv.frames[1].grid, pv.frames[0].grid}, {pv.frames[1].mask, pv.frames[0].mask}};
}

}  // namespace

TEST_SUITE("pipeline") {
  TEST_CASE("one-frame video is prompted single-image segmentation") {
    ModelParams p(small_config(1));
    const auto v = make_video(3);
    const auto prompts = oracle_prompts(v.masks[0]);
    REQUIRE_FALSE(prompts.empty());
    const auto tracks = segment_video(p, std::span(v.frames.data(), 1), prompts, {});
    REQUIRE(tracks.size() == prompts.size());
    for (size_t i = 0; i < prompts.size(); ++i) {
      ag::Graph g;
      g.set_grad_enabled(false);
      const auto f = encode_frame(g, p, v.frames[0]);
      const auto e = memory_attention(g, p, f, {});
      const auto d = decode_mask(g, p, e, encode_box_prompt(g, p, prompts[i].box));
      CHECK(tracks[i].id == prompts[i].id);
      REQUIRE(tracks[i].masks.size() == 1);
      CHECK(tracks[i].masks[0] == threshold_logits(d.logits.value(), 32));
      CHECK(tracks[i].confidences[0] == d.confidence.value()(0, 0));
    }
  }

  TEST_CASE("prompt handling") {
    ModelParams p(small_config(1));
    const auto v = make_video(4);
    CHECK(segment_video(p, v.frames, {}, {}).empty());
    const std::vector<ObjectPrompt> prompts{{1, {2, 2, 10, 10}}, {2, {20, 20, 40, 30}}};
    const auto tracks = segment_video(p, v.frames, prompts, {});
    REQUIRE(tracks.size() == 2);
    CHECK_FALSE(tracks[0].rejected);
    CHECK(tracks[0].masks.size() == 2);
    CHECK(tracks[1].rejected);
    CHECK_FALSE(tracks[1].reason.empty());
    CHECK(tracks[1].masks.empty());
  }

  TEST_CASE("tile streams") {
    ModelParams p(small_config(2));
    std::vector<RasterGrid> tiles;
    for (uint64_t s = 0; s < 5; ++s) tiles.push_back(make_video(s).frames[0]);
    BankConfig bank;
    bank.conf_threshold = 0.0;
    bank.capacity = 8;
    bank.retrieve_k = 2;
    bank.seed = 9;
    const auto a = segment_tileset(p, tiles, bank), b = segment_tileset(p, tiles, bank);
    REQUIRE(a.size() == 5);
    for (size_t i = 0; i < 5; ++i) {
      CHECK(a[i].mask == b[i].mask);
      CHECK(a[i].confidence == b[i].confidence);
      CHECK(a[i].stored);
    }
    const auto single = segment_tileset(p, std::span(tiles.data(), 1), bank);
    ag::Graph g;
    g.set_grad_enabled(false);
    const auto f = encode_frame(g, p, tiles[0]);
    const auto d = decode_mask(g, p, memory_attention(g, p, f, {}), std::nullopt);
    CHECK(single[0].mask == threshold_logits(d.logits.value(), 32));

    bank.conf_threshold = 1.0;
    for (const auto& r : segment_tileset(p, tiles, bank)) CHECK_FALSE(r.stored);
  }

  TEST_CASE("video loss") {
    ModelParams p(small_config(3));
    const auto v = make_video(6);
    ag::Graph g;
    const auto l = video_loss(g, p, v.frames, v.masks, {});
    CHECK(l.terms == oracle_prompts(v.masks[0]).size() * 2);
    CHECK(l.iou_targets.size() == l.terms);
    CHECK(std::isfinite(l.loss.value()(0, 0)));
    CHECK(l.loss.value()(0, 0) == doctest::Approx(l.bce + l.iou_mse));
    ag::Graph g2;
    CHECK(video_loss(g2, p, v.frames, v.masks, {}).loss.value() == l.loss.value());
  }
}

TEST_SUITE("train") {
  TEST_CASE("AdamW step") {
    ag::Param w{"w", Mat::Constant(1, 1, 1.0), Mat::Constant(1, 1, 0.5), true, "t"};
    AdamW opt({&w}, 0.1, 0.01);
    opt.step();
    // decay first: 1 * (1 - 0.001); bias-corrected m/sqrt(v) = 1
    CHECK(w.value(0, 0) == doctest::Approx(0.999 - 0.1 * 0.5 / (0.5 + 1e-8)).epsilon(1e-14));
    CHECK(opt.steps() == 1);
  }

  TEST_CASE("frame sampling") {
    Rng rng(1);
    for (int rep = 0; rep < 20; ++rep) {
      const auto s = sample_frames(5, 3, rng);
      REQUIRE(s.size() == 3);
      CHECK(std::is_sorted(s.begin(), s.end()));
      CHECK(std::adjacent_find(s.begin(), s.end()) == s.end());
      CHECK(s.back() < 5);
    }
    CHECK(sample_frames(2, 4, rng) == std::vector<size_t>{0, 1});
  }

  TEST_CASE("training is deterministic and leaves frozen tensors alone") {
    std::vector<VideoSample> data;
    for (uint64_t s = 0; s < 4; ++s) data.push_back(make_video(s));
    TrainConfig tc;
    tc.epochs = 2;
    tc.lr = 1e-3;
    tc.seed = 5;
    ModelParams a(small_config(1)), b(small_config(1));
    const auto before = a.clone();
    const auto ra = train(a, std::span(data).first(3), std::span(data).last(1), tc);
    train(b, std::span(data).first(3), std::span(data).last(1), tc);
    CHECK(ra.epochs.size() == 2);
    for (size_t i = 0; i < a.tensors().size(); ++i) {
      const auto& ta = a.tensors()[i];
      CHECK(ta.value == b.tensors()[i].value);
      if (!ta.trainable) CHECK(ta.value == before->tensors()[i].value);
    }
    CHECK_THROWS(train(a, {}, {}, tc));
  }

  TEST_CASE("validation cadence") {
    std::vector<VideoSample> data;
    for (uint64_t s = 0; s < 3; ++s) data.push_back(make_video(s + 10));
    TrainConfig tc;
    tc.epochs = 5;
    tc.val_every = 2;
    ModelParams p(small_config(2));
    const auto r = train(p, std::span(data).first(2), std::span(data).last(1), tc);
    REQUIRE(r.epochs.size() == 5);
    CHECK(std::isnan(r.epochs[0].val_score));
    CHECK_FALSE(std::isnan(r.epochs[1].val_score));
    CHECK(std::isnan(r.epochs[2].val_score));
    CHECK_FALSE(std::isnan(r.epochs[4].val_score));
  }

  TEST_CASE("trained model finds a prompted building") {
    std::vector<VideoSample> data;
    for (uint64_t s = 0; s < 12; ++s) {
      const auto f = gen_synthetic_map(32, 32, 1, 100 + s, {8, 14});
      data.push_back({{f.grid, f.grid}, {f.mask, f.mask}});
    }
    TrainConfig tc;
    tc.epochs = 30;
    tc.lr = 1e-3;
    tc.val_every = 10;
    ModelParams p(small_config(4));
    train(p, std::span(data).first(10), std::span(data).last(2), tc);
    for (size_t i = 10; i < 12; ++i) {
      const auto tracks = segment_video(p, data[i].frames, oracle_prompts(data[i].masks[0]), tc.bank);
      REQUIRE(tracks.size() == 1);
      CHECK(count(tracks[0].masks[0]) > 0);
    }
  }

  TEST_CASE("gradient check") {
    ModelConfig c = small_config(7);
    c.d_model = 16;
    c.mask_channels = 4;
    ModelParams p(c);
    Rng rng(3);
    for (auto* t : p.trainable())
      if (t->family == "lora")
        for (Eigen::Index i = 0; i < t->value.size(); ++i) t->value.data()[i] += 0.1 * rng.normal();
    const auto v = make_video(21);
    const auto ok = grad_check(p, v, {});
    CHECK(ok.max_rel_error < 1e-4);
    CHECK(ok.checked >= 100);
    GradCheckOptions bad;
    bad.corrupt_factor = 2.0;
    CHECK(grad_check(p, v, {}, bad).max_rel_error > 1e-2);
  }
}

TEST_SUITE("checkpoint") {
  TEST_CASE("round trip") {
    const auto dir = std::filesystem::temp_directory_path() / "histmap_test_ckpt";
    std::filesystem::create_directories(dir);
    ModelParams p(small_config(11));
    for (auto* t : p.trainable()) t->value.array() += 0.25;
    save_checkpoint(dir / "m.ckpt", p, {{"note", "x"}});
    const auto ck = load_checkpoint(dir / "m.ckpt");
    CHECK(ck.params->config() == p.config());
    CHECK(ck.meta["note"] == "x");
    REQUIRE(ck.params->tensors().size() == p.tensors().size());
    for (size_t i = 0; i < p.tensors().size(); ++i) {
      CHECK(ck.params->tensors()[i].name == p.tensors()[i].name);
      CHECK(ck.params->tensors()[i].value == p.tensors()[i].value);
    }
    CHECK(config_from_json(config_to_json(p.config())) == p.config());

    const auto size = std::filesystem::file_size(dir / "m.ckpt");
    std::filesystem::copy_file(dir / "m.ckpt", dir / "cut.ckpt", std::filesystem::copy_options::overwrite_existing);
    std::filesystem::resize_file(dir / "cut.ckpt", size - 8);
    CHECK_THROWS_AS(load_checkpoint(dir / "cut.ckpt"), Error);
    std::filesystem::copy_file(dir / "m.ckpt", dir / "long.ckpt", std::filesystem::copy_options::overwrite_existing);
    std::filesystem::resize_file(dir / "long.ckpt", size + 8);
    CHECK_THROWS_AS(load_checkpoint(dir / "long.ckpt"), Error);
    {
      std::ofstream(dir / "bad.ckpt") << "NOTACKPT and some more bytes";
    }
    try {
      load_checkpoint(dir / "bad.ckpt");
      FAIL("expected format error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::format);
    }
    CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), Error);
  }
}
