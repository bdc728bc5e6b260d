#include <doctest.h>

#include <fstream>

#include "helpers.hpp"
#include "histmap/eval.hpp"
#include "histmap/linker.hpp"

using namespace histmap;
using testutil::bits;

namespace {

BinaryMask row_mask(int on_from, int on_to) {
  BinaryMask m(1, 8);
  for (int x = on_from; x < on_to; ++x) m.at(x, 0) = 1;
  return m;
}

}  // namespace

TEST_SUITE("eval") {
  TEST_CASE("st_iou") {
    const LinkedInstance a{1, {row_mask(0, 4), row_mask(0, 4)}};
    CHECK(st_iou(a, a) == 1.0);
    // areas 4/4 in both frames; intersections 2 then 4
    const LinkedInstance g{1, {row_mask(2, 6), row_mask(0, 4)}};
    CHECK(st_iou(a, g) == doctest::Approx(0.6));
    const LinkedInstance empty{1, {BinaryMask(1, 8), BinaryMask(1, 8)}};
    CHECK(st_iou(empty, g) == 0.0);
    CHECK(st_iou(empty, empty) == 1.0);
    CHECK_THROWS(st_iou(a, LinkedInstance{1, {row_mask(0, 4)}}));
  }

  TEST_CASE("matching counts") {
    std::vector<LinkedInstance> gts{{1, {row_mask(0, 2)}}, {2, {row_mask(3, 5)}}, {3, {row_mask(6, 8)}}};
    auto same = match_instances(gts, gts);
    CHECK(same.tp == 3);
    CHECK(same.fp == 0);
    CHECK(same.fn == 0);

    std::vector<LinkedInstance> preds{{1, {row_mask(0, 2)}}, {2, {row_mask(2, 3)}}};
    const auto r = match_instances(preds, gts);
    CHECK(r.tp == 1);
    CHECK(r.fp == 1);
    CHECK(r.fn == 2);
    REQUIRE(r.pairs.size() == 1);
    CHECK(r.pairs[0] == MatchPair{1, 1, 1.0});
  }

  TEST_CASE("threshold is strict") {
    const LinkedInstance p{1, {row_mask(0, 2)}}, g{1, {row_mask(0, 4)}};
    CHECK(match_instances(std::span(&p, 1), std::span(&g, 1), 0.5).tp == 0);
    CHECK(match_instances(std::span(&p, 1), std::span(&g, 1), 0.49).tp == 1);
  }

  TEST_CASE("prf1") {
    const auto q = prf1(1, 1, 2);
    CHECK(q.precision == doctest::Approx(0.5));
    CHECK(q.recall == doctest::Approx(1.0 / 3));
    CHECK(q.f1 == doctest::Approx(0.4));
    const auto z = prf1(0, 0, 0);
    CHECK(z.precision == 0.0);
    CHECK(z.recall == 0.0);
    CHECK(z.f1 == 0.0);
    const auto one = prf1(5, 0, 0);
    CHECK(one.precision == 1.0);
    CHECK(one.recall == 1.0);
    CHECK(one.f1 == 1.0);
  }

  TEST_CASE("semantic iou") {
    const auto gt = bits({"##..", "##.."});
    CHECK(semantic_iou(gt, gt) == 1.0);
    CHECK(semantic_iou(BinaryMask(2, 4), gt) == 0.0);
    CHECK_THROWS(semantic_iou(gt, BinaryMask(4, 2)));

    IouAccumulator acc;
    acc.add(bits({"##..", "##.."}), bits({".##.", ".##."}));  // 2 / 6
    acc.add(bits({"##", "##"}), bits({"##", "##"}));          // 4 / 4
    CHECK(acc.intersection() == 6);
    CHECK(acc.uni() == 10);
    CHECK(acc.value() == doctest::Approx(0.6));
  }

  TEST_CASE("tracks from masks") {
    const std::vector<InstanceMask> frames{testutil::labels({"1.2"}), testutil::labels({"..3"})};
    const auto t = tracks_from_masks(frames);
    REQUIRE(t.size() == 3);
    CHECK(t[0].id == 1);
    CHECK(count(t[0].masks[1]) == 0);
    CHECK(t[2].id == 3);
    CHECK(count(t[2].masks[0]) == 0);
  }
}

TEST_SUITE("linker") {
  TEST_CASE("identical frames give full tracks") {
    const auto m = testutil::labels({"11..", "....", "..22"});
    const std::vector<InstanceMask> frames{m, m, m};
    const auto tracks = link_instances(frames);
    REQUIRE(tracks.size() == 2);
    for (const auto& t : tracks) {
      REQUIRE(t.masks.size() == 3);
      CHECK(t.masks[0] == t.masks[2]);
      CHECK(count(t.masks[1]) == 2);
    }
  }

  TEST_CASE("late instance") {
    const InstanceMask empty(2, 2);
    const std::vector<InstanceMask> frames{empty, empty, testutil::labels({"1.", ".."}), empty};
    const auto tracks = link_instances(frames);
    REQUIRE(tracks.size() == 1);
    CHECK(count(tracks[0].masks[0]) == 0);
    CHECK(count(tracks[0].masks[2]) == 1);
    CHECK(count(tracks[0].masks[3]) == 0);
  }

  TEST_CASE("two candidates for one track") {
    // frame 0: A (ids 1) and B (id 2) both overlap frame-1 instance C
    const auto f0 = testutil::labels({
        "111...",
        "111...",
        "111...",
        "...22.",
        "...22.",
        "......",
    });
    const auto f1 = testutil::labels({
        "......",
        ".1111.",
        ".1111.",
        ".1111.",
        ".1111.",
        "......",
    });
    // brute force: IoU(C, A) = 4/21, IoU(C, B) = 4/16
    const auto a = select_label(f0, 1), b = select_label(f0, 2), c = select_label(f1, 1);
    REQUIRE(binary_iou(a, c) == doctest::Approx(4.0 / 21));
    REQUIRE(binary_iou(b, c) == doctest::Approx(4.0 / 16));
    const std::vector<InstanceMask> frames{f0, f1};
    const auto tracks = link_instances(frames, 0.15);
    REQUIRE(tracks.size() == 2);
    CHECK(count(tracks[0].masks[1]) == 0);
    CHECK(tracks[1].masks[1] == c);
  }

  TEST_CASE("prompt providers") {
    const auto m = testutil::labels({"11...", "11...", "...22"});
    const auto o = oracle_prompts(m);
    REQUIRE(o.size() == 2);
    CHECK(o[0] == ObjectPrompt{1, {0, 0, 2, 2}});
    CHECK(o[1] == ObjectPrompt{2, {3, 2, 5, 3}});

    PromptProvider jit{PromptMode::jittered_oracle, 0.0, 4, {}};
    CHECK(provide_prompts(m, jit) == o);

    InstanceMask big(64, 64);
    for (int y = 10; y < 30; ++y)
      for (int x = 20; x < 44; ++x) big.at(x, y) = 1;
    jit.sigma = 3;
    const auto j1 = provide_prompts(big, jit), j2 = provide_prompts(big, jit);
    CHECK(j1 == j2);
    for (const auto& p : j1) {
      CHECK_FALSE(p.box.degenerate());
      CHECK(p.box.x0 >= 0);
      CHECK(p.box.y1 <= 64);
    }
  }

  TEST_CASE("prompt files") {
    const std::vector<ObjectPrompt> ps{{1, {0, 0, 4, 5}}, {7, {2, 3, 9, 9}}};
    CHECK(parse_prompts(dump_prompts(ps)) == ps);
    const auto dir = testutil::scratch("prompts");
    std::ofstream(dir / "p.json") << dump_prompts(ps);
    CHECK(load_prompts(dir / "p.json") == ps);
    try {
      parse_prompts("{\"prompts\": [\n{\"id\": 1, \"box\": [0, 0, 4]}\n]}", "p.json");
      FAIL("expected schema error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::schema);
      CHECK(std::string(e.what()).find("p.json") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_prompts("{\"prompts\": [", "p.json"), Error);
  }
}
