#include <doctest.h>

#include <set>

#include "histmap/model.hpp"
#include "histmap/synth.hpp"

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

Mat forward_logits(ModelParams& p, const RasterGrid& grid) {
  ag::Graph g;
  g.set_grad_enabled(false);
  const auto f = encode_frame(g, p, grid);
  const auto e = memory_attention(g, p, f, {});
  return decode_mask(g, p, e, encode_box_prompt(g, p, {2, 3, 20, 17})).logits.value();
}

double max_abs_diff(const Mat& a, const Mat& b) { return (a - b).cwiseAbs().maxCoeff(); }

}  // namespace

TEST_SUITE("model") {
  TEST_CASE("config validation") {
    CHECK_NOTHROW(ModelConfig{}.validate());
    auto c = small_config();
    c.patch = 7;
    CHECK_THROWS(c.validate());
    c = small_config();
    c.n_heads = 3;
    CHECK_THROWS(c.validate());
    c = small_config();
    c.lora_rank = 9;
    CHECK_THROWS(c.validate());
  }

  TEST_CASE("lora_forward") {
    Rng rng(4);
    Mat W(3, 5), A(2, 5), B(3, 2);
    for (auto* m : {&W, &A, &B})
      for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] = rng.normal();
    Eigen::VectorXd x(5), b(3);
    for (int i = 0; i < 5; ++i) x[i] = rng.normal();
    b << 0.1, -0.2, 0.3;
    const Eigen::VectorXd base = W * x + b;
    CHECK(lora_forward(x, W, b, A, Mat::Zero(3, 2)) == base);
    CHECK(lora_forward(x, W, b, Mat::Zero(2, 5), B) == base);
    const Eigen::VectorXd full = (W + B * A) * x + b;
    CHECK((lora_forward(x, W, b, A, B) - full).cwiseAbs().maxCoeff() < 1e-12);
    CHECK_THROWS(lora_forward(x, W, b, Mat::Zero(2, 4), B));
  }

  TEST_CASE("adapter parameter count") {
    ModelParams p(ModelConfig{});
    const auto& q = p.encoder[0].attn.q;
    REQUIRE(q.adapted());
    CHECK(q.W->value.size() == 32 * 32);
    CHECK(q.A->value.size() + q.B->value.size() == 4 * (32 + 32));
    CHECK(p.encoder[0].attn.v.adapted());
    CHECK_FALSE(p.encoder[0].attn.k.adapted());
    CHECK_FALSE(p.encoder[0].attn.o.adapted());
  }

  TEST_CASE("parameter census") {
    ModelParams p(small_config());
    const auto tr = p.trainable(), fr = p.frozen();
    CHECK(tr.size() + fr.size() == p.tensors().size());
    std::set<const ag::Param*> seen(tr.begin(), tr.end());
    for (auto* f : fr) CHECK(seen.insert(f).second);
    std::set<std::string> frozen_families, trainable_families;
    for (auto* f : fr) frozen_families.insert(f->family);
    for (auto* t : tr) trainable_families.insert(t->family);
    CHECK(frozen_families == std::set<std::string>{"encoder", "prompt_encoder"});
    CHECK(trainable_families == std::set<std::string>{"lora", "memory_attention", "memory_encoder", "query_tokens",
                                                      "decoder", "mask_head", "iou_head"});
    for (auto* t : tr)
      if (t->family == "lora" && t->name.find(".B") != std::string::npos) CHECK(t->value.isZero(0));
    CHECK(p.scalar_count(false) == p.scalar_count(true) + [&] {
      size_t n = 0;
      for (auto* f : fr) n += static_cast<size_t>(f->value.size());
      return n;
    }());
  }

  TEST_CASE("sinusoidal encoding") {
    const auto a = sinusoidal_encoding(0, 0, 16);
    CHECK(a.size() == 16);
    for (int j = 0; j < 4; ++j) {
      CHECK(a[2 * j] == 0.0);
      CHECK(a[2 * j + 1] == 1.0);
    }
    CHECK((sinusoidal_encoding(1, 1, 16) - sinusoidal_encoding(0, 0, 16)).norm() > 0);
  }

  TEST_CASE("forward passes are deterministic") {
    ModelParams p(small_config(3));
    const auto f = gen_synthetic_map(32, 32, 2, 1, {5, 10});
    CHECK(forward_logits(p, f.grid) == forward_logits(p, f.grid));
    ModelParams q(small_config(3));
    CHECK(forward_logits(q, f.grid) == forward_logits(p, f.grid));
    ag::Graph g;
    CHECK_THROWS(encode_frame(g, p, RasterGrid(16, 16)));
  }

  TEST_CASE("box prompts") {
    ModelParams p(small_config());
    ag::Graph g;
    const Mat a = encode_box_prompt(g, p, {1, 2, 9, 10}).value();
    CHECK(a == encode_box_prompt(g, p, {1, 2, 9, 10}).value());
    CHECK_THROWS(encode_box_prompt(g, p, {9, 10, 1, 2}));
    CHECK_THROWS(encode_box_prompt(g, p, {0, 0, 33, 10}));
    CHECK_THROWS(encode_box_prompt(g, p, {3, 3, 3, 8}));
    const Mat full = encode_box_prompt(g, p, {0, 0, 32, 32}).value();
    const Mat corners = p.prompt_corners->value;
    CHECK((full.row(0) - corners.row(0) - sinusoidal_encoding(0, 0, 16)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((full.row(1) - corners.row(1) - sinusoidal_encoding(1, 1, 16)).cwiseAbs().maxCoeff() < 1e-12);
  }

  TEST_CASE("memory attention") {
    ModelParams p(small_config(1));
    for (auto* t : p.trainable())
      if (t->family == "memory_attention") t->value.array() += 0.05;  // move off identity-ish init
    const auto frame = gen_synthetic_map(32, 32, 2, 5, {5, 10});
    ag::Graph g;
    g.set_grad_enabled(false);
    const auto f = encode_frame(g, p, frame.grid);

    // empty memory: self-attention and feed-forward only, built by hand
    Var t = f.tokens;
    Var pe = g.constant(p.image_pe);
    for (const auto& b : p.memory) {
      Var h = ag::layer_norm_rows(t, g.param(*b.ln_self.gamma), g.param(*b.ln_self.beta));
      Var hp = ag::add(h, pe);
      t = ag::add(t, attend(g, b.self_attn, 2, hp, hp, h));
      Var n = ag::layer_norm_rows(t, g.param(*b.ln_ffn.gamma), g.param(*b.ln_ffn.beta));
      t = ag::add(t, project(g, b.ffn.down, ag::gelu(project(g, b.ffn.up, n))));
    }
    const Mat alone = memory_attention(g, p, f, {}).tokens.value();
    CHECK(alone == t.value());

    const auto mem = encode_memory(g, p, g.constant(Mat::Zero(32 * 32, 1)), f);
    const Var one[] = {mem.tokens};
    const Var three[] = {mem.tokens, mem.tokens, mem.tokens};
    const Mat with_one = memory_attention(g, p, f, one).tokens.value();
    const Mat with_three = memory_attention(g, p, f, three).tokens.value();
    CHECK(max_abs_diff(with_one, with_three) < 1e-12);
    CHECK(max_abs_diff(with_one, alone) > 1e-6);
  }

  TEST_CASE("memory encoder with zero probabilities") {
    ModelParams p(small_config(2));
    ag::Graph g;
    g.set_grad_enabled(false);
    const auto f = encode_frame(g, p, gen_synthetic_map(32, 32, 1, 2, {5, 10}).grid);
    // sigmoid(-inf) = 0; the projection bias starts at zero
    const auto m = encode_memory(g, p, g.constant(Mat::Constant(32 * 32, 1, -1e300)), f);
    CHECK(m.tokens.value() == f.tokens.value());
    CHECK(std::abs(Eigen::Map<const Eigen::VectorXd>(m.pooled.data(), m.pooled.size()).norm() - 1.0) < 1e-12);
  }

  TEST_CASE("confidence stays in [0, 1]") {
    ModelParams p(small_config(6));
    Rng rng(8);
    for (int trial = 0; trial < 20; ++trial) {
      ag::Graph g;
      g.set_grad_enabled(false);
      Mat tokens(p.config().tokens(), 16), hr(32 * 32, 1);
      for (Eigen::Index i = 0; i < tokens.size(); ++i) tokens.data()[i] = 10 * rng.normal();
      for (Eigen::Index i = 0; i < hr.size(); ++i) hr.data()[i] = rng.uniform(-0.5, 0.5);
      const auto d = decode_mask(g, p, {g.constant(tokens), g.constant(hr)}, std::nullopt);
      const double c = d.confidence.value()(0, 0);
      CHECK(c >= 0.0);
      CHECK(c <= 1.0);
      CHECK(d.logits.rows() == 32 * 32);
    }
  }

  TEST_CASE("threshold at logit zero") {
    Mat l(4, 1);
    l << -1, 0, 1e-300, 2;
    const auto m = threshold_logits(l, 2);
    CHECK(m.data() == std::vector<uint8_t>{0, 0, 1, 1});
  }
}
