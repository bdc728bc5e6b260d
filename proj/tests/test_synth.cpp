#include <doctest.h>

#include "helpers.hpp"
#include "histmap/synth.hpp"

using namespace histmap;

namespace {

bool solid_rectangle(const BinaryMask& m) {
  const auto b = bounding_box(m);
  return b && count(m) == static_cast<size_t>(b->width() * b->height());
}

AnnotatedFrame blank(int size) { return {RasterGrid(size, size, 240), InstanceMask(size, size)}; }

void paint(AnnotatedFrame& f, Box b, Label l) {
  for (int y = b.y0; y < b.y1; ++y)
    for (int x = b.x0; x < b.x1; ++x) {
      f.mask.at(x, y) = l;
      f.grid.at(x, y) = 20;
    }
}

}  // namespace

TEST_SUITE("synth") {
  TEST_CASE("gen_synthetic_map") {
    const auto empty = gen_synthetic_map(32, 32, 0, 1);
    CHECK(inventory(empty.mask).empty());
    CHECK(gen_synthetic_map(64, 64, 5, 9) == gen_synthetic_map(64, 64, 5, 9));

    const auto f = gen_synthetic_map(128, 128, 3, 42);
    CHECK(inventory(f.mask) == std::vector<Label>{1, 2, 3});
    const auto cc = connected_components(foreground(f.mask));
    CHECK(inventory(cc).size() == 3);
    for (Label l : inventory(f.mask)) {
      const auto m = select_label(f.mask, l);
      CHECK(solid_rectangle(m));
      const auto b = *bounding_box(m);
      CHECK(b.width() >= 5);
      CHECK(b.width() <= 30);
      CHECK(b.height() >= 5);
      CHECK(b.height() <= 30);
    }
    try {
      gen_synthetic_map(16, 16, 50, 1);
      FAIL("expected infeasible");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::infeasible);
    }
  }

  TEST_CASE("shift with zero range is identity") {
    const auto f = gen_synthetic_map(48, 48, 3, 3);
    SynthConfig cfg;
    cfg.shift_range = 0;
    Rng rng(1);
    CHECK(apply_shift(f, cfg, rng).frame == f);
  }

  TEST_CASE("building at the right edge vanishes under a +5 shift") {
    auto f = blank(20);
    paint(f, {17, 5, 20, 12}, 1);
    const auto s = shift_mask(f.mask, 5, 0);
    CHECK(inventory(s).empty());
  }

  TEST_CASE("appearance") {
    SynthConfig cfg;
    for (uint64_t seed = 0; seed < 20; ++seed) {
      Rng rng(seed);
      const auto t = apply_appearance(blank(64), cfg, rng);
      REQUIRE_FALSE(t.record.skipped);
      CHECK(inventory(t.frame.mask) == std::vector<Label>{1});
      const auto m = select_label(t.frame.mask, 1);
      CHECK(solid_rectangle(m));
      const auto b = *bounding_box(m);
      CHECK(b.width() >= 5);
      CHECK(b.width() <= 30);
      CHECK(b.height() >= 5);
      CHECK(b.height() <= 30);
    }

    // one large instance 7 covering most of the frame: every placement either
    // extends 7 or lands on free space with a fresh id
    auto big = blank(40);
    paint(big, {0, 0, 40, 34}, 7);
    for (uint64_t seed = 0; seed < 40; ++seed) {
      Rng rng(seed);
      const auto t = apply_appearance(big, cfg, rng);
      if (t.record.skipped) continue;
      if (t.record.labels[0] == 7) {
        CHECK(inventory(t.frame.mask) == std::vector<Label>{7});
        CHECK(count(select_label(t.frame.mask, 7)) >= count(select_label(big.mask, 7)));
      } else {
        CHECK(t.record.labels[0] == 8);
      }
    }

    // disjoint placement gets max label + 1
    auto corner = blank(64);
    paint(corner, {0, 0, 2, 2}, 4);
    paint(corner, {62, 62, 64, 64}, 2);
    int fresh = 0;
    for (uint64_t seed = 0; seed < 20; ++seed) {
      Rng rng(seed);
      const auto t = apply_appearance(corner, cfg, rng);
      if (!t.record.skipped && t.record.labels[0] != 4 && t.record.labels[0] != 2) {
        CHECK(t.record.labels[0] == 5);
        ++fresh;
      }
    }
    CHECK(fresh > 0);
  }

  TEST_CASE("disappearance") {
    SynthConfig cfg;
    Rng rng(5);
    auto one = blank(32);
    paint(one, {3, 3, 9, 9}, 1);
    CHECK(inventory(apply_disappearance(one, cfg, rng).frame.mask).empty());

    const auto three = gen_synthetic_map(64, 64, 3, 11);
    const auto t = apply_disappearance(three, cfg, rng);
    CHECK(inventory(t.frame.mask).size() == 2);
    for (Label l : inventory(t.frame.mask)) CHECK((l >= 1 && l <= 3));
  }

  TEST_CASE("merge") {
    SynthConfig cfg;
    Rng rng(0);
    auto f = blank(32);
    paint(f, {4, 4, 10, 10}, 3);
    paint(f, {12, 4, 18, 10}, 9);
    const auto t = apply_merge(f, cfg, rng);
    REQUIRE_FALSE(t.record.skipped);
    CHECK(inventory(t.frame.mask) == std::vector<Label>{3});
    const auto region = select_label(t.frame.mask, 3);
    CHECK(is_connected(region));
    CHECK(mask_and(region, foreground(f.mask)) == foreground(f.mask));

    auto single = blank(32);
    paint(single, {4, 4, 10, 10}, 1);
    const auto s = apply_merge(single, cfg, rng);
    CHECK(s.record.skipped);
    CHECK(s.frame == single);

    SynthConfig tight;
    tight.max_dilate_iters = 1;
    auto far = blank(40);
    paint(far, {0, 0, 5, 5}, 1);
    paint(far, {30, 30, 35, 35}, 2);
    const auto k = apply_merge(far, tight, rng);
    CHECK(k.record.skipped);
    CHECK(k.frame == far);
  }

  TEST_CASE("pseudo video") {
    const auto f = gen_synthetic_map(96, 96, 6, 17);
    SynthConfig still;
    still.shift_range = 0;
    still.appear_count = {0, 0};
    still.disappear_count = {0, 0};
    still.merge_count = {0, 0};
    const auto same = synthesize_pseudo_video(f, still);
    REQUIRE(same.frames.size() == 2);
    CHECK(same.frames[0] == same.frames[1]);

    SynthConfig cfg;
    for (uint64_t seed = 0; seed < 30; ++seed) {
      cfg.seed = seed;
      const auto v = synthesize_pseudo_video(f, cfg);
      CHECK(v.frames[1] == synthesize_pseudo_video(f, cfg).frames[1]);
      const auto inv0 = inventory(v.frames[0].mask);
      const Label max0 = max_label(f.mask);
      for (Label l : inventory(v.frames[1].mask)) {
        const bool old = std::find(inv0.begin(), inv0.end(), l) != inv0.end();
        CHECK((old || l > max0));
      }
    }
    SynthConfig bad;
    bad.appear_count = {3, 1};
    CHECK_THROWS(synthesize_pseudo_video(f, bad));
  }
}
