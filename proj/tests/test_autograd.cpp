#include <doctest.h>

#include <functional>

#include "histmap/autograd.hpp"
#include "histmap/rng.hpp"

using namespace histmap;
using namespace histmap::ag;

namespace {

Mat random_mat(int r, int c, Rng& rng) {
  Mat m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

using Loss = std::function<Var(Graph&, Var)>;

// Max relative error of the analytic gradient of `f` at x against central differences.
double fd_error(const Loss& f, Mat x) {
  Param p{"x", x, {}, true, "test"};
  p.zero_grad();
  {
    Graph g;
    g.backward(f(g, g.param(p)));
  }
  double worst = 0;
  const double h = 1e-6;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    auto eval = [&](double delta) {
      Param q{"x", x, {}, false, "test"};
      q.value.data()[i] += delta;
      Graph g;
      return f(g, g.param(q)).value()(0, 0);
    };
    const double num = (eval(h) - eval(-h)) / (2 * h);
    const double ana = p.grad.data()[i];
    worst = std::max(worst, std::abs(ana - num) / std::max(std::abs(ana) + std::abs(num), 1e-8));
  }
  return worst;
}

}  // namespace

TEST_SUITE("autograd") {
  TEST_CASE("elementwise and linear ops") {
    Rng rng(1);
    const Mat w = random_mat(4, 3, rng), row = random_mat(1, 3, rng), other = random_mat(3, 5, rng);
    const std::vector<std::pair<const char*, Loss>> cases = {
        {"matmul", [&](Graph& g, Var x) { return sum_all(matmul(x, g.constant(other))); }},
        {"matmul_nt", [&](Graph& g, Var x) { return sum_all(hadamard(matmul_nt(x, x), matmul_nt(x, x))); }},
        {"add_sub", [&](Graph& g, Var x) { return sum_all(hadamard(sub(x, g.constant(w)), add(x, x))); }},
        {"add_row", [&](Graph& g, Var x) { return sum_all(hadamard(add_row(g.constant(w), slice_rows(x, 0, 1)), x)); }},
        {"scale", [&](Graph&, Var x) { return mean_all(hadamard(scale(x, -2.5), x)); }},
        {"gelu", [&](Graph&, Var x) { return sum_all(gelu(x)); }},
        {"sigmoid", [&](Graph&, Var x) { return sum_all(hadamard(sigmoid(x), x)); }},
        {"softmax", [&](Graph& g, Var x) { return sum_all(hadamard(softmax_rows(x), g.constant(w))); }},
        {"layer_norm",
         [&](Graph& g, Var x) {
           return sum_all(hadamard(layer_norm_rows(x, g.constant(row), g.constant(row)), g.constant(w)));
         }},
        {"concat",
         [&](Graph& g, Var x) {
           const Var parts[] = {x, scale(x, 2)};
           const Var cols[] = {x, g.constant(w)};
           return add(sum_all(hadamard(concat_rows(parts), concat_rows(parts))),
                      sum_all(hadamard(concat_cols(cols), concat_cols(cols))));
         }},
        {"slices", [&](Graph&, Var x) { return sum_all(hadamard(slice_cols(x, 1, 2), slice_cols(x, 0, 2))); }},
        {"mean_rows", [&](Graph&, Var x) { return sum_all(hadamard(mean_rows(x), mean_rows(x))); }},
        {"bce",
         [&](Graph&, Var x) {
           Mat t = (w.array() > 0).cast<double>();
           return bce_with_logits(x, t);
         }},
        {"squared_error", [&](Graph&, Var x) { return squared_error(mean_all(x), 0.3); }},
    };
    for (const auto& [name, f] : cases) {
      CAPTURE(name);
      CHECK(fd_error(f, random_mat(4, 3, rng)) < 1e-6);
    }
  }

  TEST_CASE("unpatchify and patch_mean") {
    Rng rng(2);
    const Mat t = random_mat(16, 1, rng);
    CHECK(fd_error([&](Graph& g, Var x) { return sum_all(hadamard(unpatchify(x, 2, 2, 2), unpatchify(x, 2, 2, 2))); },
                   random_mat(4, 8, rng)) < 1e-6);
    CHECK(fd_error([&](Graph&, Var x) { return sum_all(hadamard(patch_mean(x, 2, 2), patch_mean(x, 2, 2))); },
                   random_mat(16, 1, rng)) < 1e-6);

    // pixel (px, py) of channel c comes from token (py/p, px/p), column ((py%p)*p + px%p)*c + ch
    Mat tokens(4, 8);
    for (int i = 0; i < 32; ++i) tokens.data()[i] = i;
    Graph g;
    const Mat out = unpatchify(g.constant(tokens), 2, 2, 2).value();
    REQUIRE(out.rows() == 16);
    REQUIRE(out.cols() == 2);
    for (int py = 0; py < 4; ++py)
      for (int px = 0; px < 4; ++px)
        for (int ch = 0; ch < 2; ++ch) {
          const int tok = (py / 2) * 2 + px / 2;
          const int col = ((py % 2) * 2 + px % 2) * 2 + ch;
          CHECK(out(py * 4 + px, ch) == tokens(tok, col));
        }
  }

  TEST_CASE("softmax rows sum to one and bce is stable") {
    Graph g;
    Mat x(2, 3);
    x << 1000, 0, -1000, 1, 2, 3;
    const Mat s = softmax_rows(g.constant(x)).value();
    CHECK(s.row(0).sum() == doctest::Approx(1.0));
    CHECK(s.row(1).sum() == doctest::Approx(1.0));
    Mat logits(2, 1), t(2, 1);
    logits << 800, -800;
    t << 1, 0;
    CHECK(bce_with_logits(g.constant(logits), t).value()(0, 0) == doctest::Approx(0.0));
  }

  TEST_CASE("frozen params collect no gradient") {
    Param frozen{"w", Mat::Ones(2, 2), {}, false, "f"};
    Param live{"v", Mat::Ones(2, 2), {}, true, "t"};
    live.zero_grad();
    Graph g;
    const Var a = g.param(frozen), b = g.param(live);
    CHECK_FALSE(g.needs_grad(a.id()));
    g.backward(sum_all(matmul(a, b)));
    CHECK(frozen.grad.size() == 0);
    CHECK(live.grad.sum() == doctest::Approx(8.0));

    Graph off;
    off.set_grad_enabled(false);
    CHECK_FALSE(off.needs_grad(off.param(live).id()));
  }
}
