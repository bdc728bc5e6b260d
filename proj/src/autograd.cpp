#include "histmap/autograd.hpp"

#include <cmath>

#include "histmap/error.hpp"

namespace histmap::ag {

const Mat& Var::value() const { return g_->value(id_); }

Var Graph::constant(Mat value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Graph::param(Param& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var(this, it->second);
  Node n;
  n.ext = &p.value;
  n.param = &p;
  n.needs_grad = grad_enabled_ && p.trainable;
  nodes_.push_back(std::move(n));
  const int id = static_cast<int>(nodes_.size()) - 1;
  param_nodes_.emplace(&p, id);
  return Var(this, id);
}

Mat& Graph::grad(int id) {
  Node& n = nodes_[id];
  if (!n.has_grad) {
    const Mat& v = value(id);
    n.grad.setZero(v.rows(), v.cols());
    n.has_grad = true;
  }
  return n.grad;
}

Var Graph::push(Mat value, std::initializer_list<Var> inputs, std::function<void(Graph&, int)> backward) {
  bool needs = false;
  for (const Var& v : inputs) needs = needs || nodes_[v.id()].needs_grad;
  return push(std::move(value), needs, std::move(backward));
}

Var Graph::push(Mat value, bool needs_grad, std::function<void(Graph&, int)> backward) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  if (n.needs_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

void Graph::backward(Var root) {
  require(root.graph() == this, "backward: root belongs to another graph");
  require(value(root.id()).size() == 1, "backward: root must be a scalar");
  if (!nodes_[root.id()].needs_grad) return;
  grad(root.id())(0, 0) += 1.0;
  for (int i = root.id(); i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.has_grad || !n.needs_grad) continue;
    if (n.backward) n.backward(*this, i);
    if (n.param) n.param->grad += n.grad;
  }
}

namespace {

void check(bool ok, const char* what) {
  if (!ok) fail(ErrorKind::invalid_argument, std::string("autograd shape mismatch: ") + what);
}

}  // namespace

Var matmul(Var a, Var b) {
  check(a.cols() == b.rows(), "matmul");
  Graph& g = *a.graph();
  Mat out;
  out.noalias() = a.value() * b.value();
  const int ia = a.id(), ib = b.id();
  return g.push(std::move(out), {a, b}, [ia, ib](Graph& g, int i) {
    const Mat& go = g.grad(i);
    if (g.needs_grad(ia)) g.grad(ia).noalias() += go * g.value(ib).transpose();
    if (g.needs_grad(ib)) g.grad(ib).noalias() += g.value(ia).transpose() * go;
  });
}

Var matmul_nt(Var a, Var b) {
  check(a.cols() == b.cols(), "matmul_nt");
  Graph& g = *a.graph();
  Mat out;
  out.noalias() = a.value() * b.value().transpose();
  const int ia = a.id(), ib = b.id();
  return g.push(std::move(out), {a, b}, [ia, ib](Graph& g, int i) {
    const Mat& go = g.grad(i);
    if (g.needs_grad(ia)) g.grad(ia).noalias() += go * g.value(ib);
    if (g.needs_grad(ib)) g.grad(ib).noalias() += go.transpose() * g.value(ia);
  });
}

Var add(Var a, Var b) {
  check(a.rows() == b.rows() && a.cols() == b.cols(), "add");
  Graph& g = *a.graph();
  const int ia = a.id(), ib = b.id();
  return g.push(a.value() + b.value(), {a, b}, [ia, ib](Graph& g, int i) {
    if (g.needs_grad(ia)) g.grad(ia) += g.grad(i);
    if (g.needs_grad(ib)) g.grad(ib) += g.grad(i);
  });
}

Var sub(Var a, Var b) {
  check(a.rows() == b.rows() && a.cols() == b.cols(), "sub");
  Graph& g = *a.graph();
  const int ia = a.id(), ib = b.id();
  return g.push(a.value() - b.value(), {a, b}, [ia, ib](Graph& g, int i) {
    if (g.needs_grad(ia)) g.grad(ia) += g.grad(i);
    if (g.needs_grad(ib)) g.grad(ib) -= g.grad(i);
  });
}

Var add_row(Var a, Var row) {
  check(row.rows() == 1 && row.cols() == a.cols(), "add_row");
  Graph& g = *a.graph();
  Mat out = a.value();
  out.rowwise() += row.value().row(0);
  const int ia = a.id(), ir = row.id();
  return g.push(std::move(out), {a, row}, [ia, ir](Graph& g, int i) {
    if (g.needs_grad(ia)) g.grad(ia) += g.grad(i);
    if (g.needs_grad(ir)) g.grad(ir) += g.grad(i).colwise().sum();
  });
}

Var scale(Var a, double s) {
  Graph& g = *a.graph();
  const int ia = a.id();
  return g.push(a.value() * s, {a}, [ia, s](Graph& g, int i) { g.grad(ia) += g.grad(i) * s; });
}

Var hadamard(Var a, Var b) {
  check(a.rows() == b.rows() && a.cols() == b.cols(), "hadamard");
  Graph& g = *a.graph();
  const int ia = a.id(), ib = b.id();
  return g.push(a.value().cwiseProduct(b.value()), {a, b}, [ia, ib](Graph& g, int i) {
    if (g.needs_grad(ia)) g.grad(ia) += g.grad(i).cwiseProduct(g.value(ib));
    if (g.needs_grad(ib)) g.grad(ib) += g.grad(i).cwiseProduct(g.value(ia));
  });
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluK = 0.044715;
}  // namespace

Var gelu(Var a) {
  Graph& g = *a.graph();
  constexpr double c = kGeluC, k = kGeluK;
  const Mat& x = a.value();
  Mat t = (c * (x.array() + k * x.array().cube())).tanh().matrix();
  Mat out = (0.5 * x.array() * (1.0 + t.array())).matrix();
  const int ia = a.id();
  return g.push(std::move(out), {a}, [ia, t = std::move(t)](Graph& g, int i) {
    constexpr double c = kGeluC, k = kGeluK;
    const auto x = g.value(ia).array();
    const auto d = 0.5 * (1.0 + t.array()) + 0.5 * x * (1.0 - t.array().square()) * c * (1.0 + 3.0 * k * x.square());
    g.grad(ia).array() += g.grad(i).array() * d;
  });
}

Var sigmoid(Var a) {
  Graph& g = *a.graph();
  Mat out = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
  const int ia = a.id();
  return g.push(out, {a}, [ia](Graph& g, int i) {
    const auto s = g.value(i).array();
    g.grad(ia).array() += g.grad(i).array() * s * (1.0 - s);
  });
}

Var softmax_rows(Var a) {
  Graph& g = *a.graph();
  Mat out = a.value();
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    row.array() -= row.maxCoeff();
    row = row.array().exp().matrix();
    row /= row.sum();
  }
  const int ia = a.id();
  return g.push(std::move(out), {a}, [ia](Graph& g, int i) {
    const Mat& s = g.value(i);
    const Mat& go = g.grad(i);
    Eigen::VectorXd dot = (go.cwiseProduct(s)).rowwise().sum();
    Mat d = s.cwiseProduct(go);
    d -= (s.array().colwise() * dot.array()).matrix();
    g.grad(ia) += d;
  });
}

Var layer_norm_rows(Var a, Var gamma, Var beta, double eps) {
  check(gamma.rows() == 1 && gamma.cols() == a.cols() && beta.rows() == 1 && beta.cols() == a.cols(), "layer_norm");
  Graph& g = *a.graph();
  const Mat& x = a.value();
  const Eigen::Index n = x.cols();
  Eigen::VectorXd mean = x.rowwise().mean();
  Mat xhat = x.colwise() - mean;
  Eigen::VectorXd rstd = (xhat.array().square().rowwise().sum() / static_cast<double>(n) + eps).rsqrt();
  xhat = (xhat.array().colwise() * rstd.array()).matrix();
  Mat out = (xhat.array().rowwise() * gamma.value().row(0).array()).matrix();
  out.rowwise() += beta.value().row(0);
  const int ia = a.id(), ig = gamma.id(), ib = beta.id();
  return g.push(std::move(out), {a, gamma, beta},
                [ia, ig, ib, xhat = std::move(xhat), rstd = std::move(rstd), n](Graph& g, int i) {
                  const Mat& go = g.grad(i);
                  if (g.needs_grad(ig)) g.grad(ig) += go.cwiseProduct(xhat).colwise().sum();
                  if (g.needs_grad(ib)) g.grad(ib) += go.colwise().sum();
                  if (g.needs_grad(ia)) {
                    Mat dxhat = (go.array().rowwise() * g.value(ig).row(0).array()).matrix();
                    Eigen::VectorXd m1 = dxhat.rowwise().mean();
                    Eigen::VectorXd m2 = dxhat.cwiseProduct(xhat).rowwise().sum() / static_cast<double>(n);
                    Mat dx = dxhat.colwise() - m1;
                    dx -= (xhat.array().colwise() * m2.array()).matrix();
                    g.grad(ia) += (dx.array().colwise() * rstd.array()).matrix();
                  }
                });
}

Var concat_rows(std::span<const Var> parts) {
  require(!parts.empty(), "concat_rows of nothing");
  Graph& g = *parts[0].graph();
  Eigen::Index rows = 0;
  const Eigen::Index cols = parts[0].cols();
  for (const Var& p : parts) {
    check(p.cols() == cols, "concat_rows");
    rows += p.rows();
  }
  Mat out(rows, cols);
  std::vector<int> ids;
  std::vector<Eigen::Index> offsets;
  Eigen::Index at = 0;
  bool any = false;
  for (const Var& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    ids.push_back(p.id());
    offsets.push_back(at);
    at += p.rows();
    any = any || g.needs_grad(p.id());
  }
  return g.push(std::move(out), any, [ids, offsets](Graph& g, int i) {
    const Mat& go = g.grad(i);
    for (size_t k = 0; k < ids.size(); ++k)
      if (g.needs_grad(ids[k])) g.grad(ids[k]) += go.middleRows(offsets[k], g.value(ids[k]).rows());
  });
}

Var concat_cols(std::span<const Var> parts) {
  require(!parts.empty(), "concat_cols of nothing");
  Graph& g = *parts[0].graph();
  Eigen::Index cols = 0;
  const Eigen::Index rows = parts[0].rows();
  bool any = false;
  for (const Var& p : parts) {
    check(p.rows() == rows, "concat_cols");
    cols += p.cols();
    any = any || g.needs_grad(p.id());
  }
  Mat out(rows, cols);
  std::vector<int> ids;
  std::vector<Eigen::Index> offsets;
  Eigen::Index at = 0;
  for (const Var& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    ids.push_back(p.id());
    offsets.push_back(at);
    at += p.cols();
  }
  return g.push(std::move(out), any, [ids, offsets](Graph& g, int i) {
    const Mat& go = g.grad(i);
    for (size_t k = 0; k < ids.size(); ++k)
      if (g.needs_grad(ids[k])) g.grad(ids[k]) += go.middleCols(offsets[k], g.value(ids[k]).cols());
  });
}

Var slice_rows(Var a, Eigen::Index start, Eigen::Index n) {
  check(start >= 0 && n >= 0 && start + n <= a.rows(), "slice_rows");
  Graph& g = *a.graph();
  const int ia = a.id();
  return g.push(a.value().middleRows(start, n), {a},
                [ia, start, n](Graph& g, int i) { g.grad(ia).middleRows(start, n) += g.grad(i); });
}

Var slice_cols(Var a, Eigen::Index start, Eigen::Index n) {
  check(start >= 0 && n >= 0 && start + n <= a.cols(), "slice_cols");
  Graph& g = *a.graph();
  const int ia = a.id();
  return g.push(a.value().middleCols(start, n), {a},
                [ia, start, n](Graph& g, int i) { g.grad(ia).middleCols(start, n) += g.grad(i); });
}

Var mean_rows(Var a) {
  Graph& g = *a.graph();
  const int ia = a.id();
  const double inv = 1.0 / static_cast<double>(a.rows());
  return g.push(a.value().colwise().mean(), {a}, [ia, inv](Graph& g, int i) {
    g.grad(ia).rowwise() += g.grad(i).row(0) * inv;
  });
}

Var unpatchify(Var tokens, int grid, int patch, int channels) {
  check(tokens.rows() == static_cast<Eigen::Index>(grid) * grid &&
            tokens.cols() == static_cast<Eigen::Index>(patch) * patch * channels,
        "unpatchify");
  Graph& g = *tokens.graph();
  const int side = grid * patch;
  const Mat& t = tokens.value();
  Mat out(static_cast<Eigen::Index>(side) * side, channels);
  for (int ty = 0; ty < grid; ++ty)
    for (int tx = 0; tx < grid; ++tx)
      for (int py = 0; py < patch; ++py)
        for (int px = 0; px < patch; ++px) {
          const Eigen::Index row = static_cast<Eigen::Index>(ty * patch + py) * side + (tx * patch + px);
          out.row(row) = t.row(ty * grid + tx).segment((py * patch + px) * channels, channels);
        }
  const int it = tokens.id();
  return g.push(std::move(out), {tokens}, [it, grid, patch, channels, side](Graph& g, int i) {
    const Mat& go = g.grad(i);
    Mat& gt = g.grad(it);
    for (int ty = 0; ty < grid; ++ty)
      for (int tx = 0; tx < grid; ++tx)
        for (int py = 0; py < patch; ++py)
          for (int px = 0; px < patch; ++px) {
            const Eigen::Index row = static_cast<Eigen::Index>(ty * patch + py) * side + (tx * patch + px);
            gt.row(ty * grid + tx).segment((py * patch + px) * channels, channels) += go.row(row);
          }
  });
}

Var patch_mean(Var pixels, int grid, int patch) {
  const int side = grid * patch;
  check(pixels.rows() == static_cast<Eigen::Index>(side) * side && pixels.cols() == 1, "patch_mean");
  Graph& g = *pixels.graph();
  const double inv = 1.0 / (static_cast<double>(patch) * patch);
  Mat out = Mat::Zero(static_cast<Eigen::Index>(grid) * grid, 1);
  const Mat& p = pixels.value();
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x) out((y / patch) * grid + x / patch, 0) += p(static_cast<Eigen::Index>(y) * side + x, 0);
  out *= inv;
  const int ip = pixels.id();
  return g.push(std::move(out), {pixels}, [ip, grid, patch, side, inv](Graph& g, int i) {
    const Mat& go = g.grad(i);
    Mat& gp = g.grad(ip);
    for (int y = 0; y < side; ++y)
      for (int x = 0; x < side; ++x)
        gp(static_cast<Eigen::Index>(y) * side + x, 0) += go((y / patch) * grid + x / patch, 0) * inv;
  });
}

Var sum_all(Var a) {
  Graph& g = *a.graph();
  Mat out(1, 1);
  out(0, 0) = a.value().sum();
  const int ia = a.id();
  return g.push(std::move(out), {a}, [ia](Graph& g, int i) { g.grad(ia).array() += g.grad(i)(0, 0); });
}

Var mean_all(Var a) {
  const double n = static_cast<double>(a.value().size());
  return scale(sum_all(a), 1.0 / n);
}

Var bce_with_logits(Var logits, const Mat& targets) {
  check(logits.rows() == targets.rows() && logits.cols() == targets.cols(), "bce_with_logits");
  Graph& g = *logits.graph();
  const auto x = logits.value().array();
  const auto t = targets.array();
  const double n = static_cast<double>(targets.size());
  Mat out(1, 1);
  out(0, 0) = (x.max(0.0) - x * t + (-x.abs()).exp().log1p()).sum() / n;
  const int il = logits.id();
  return g.push(std::move(out), {logits}, [il, targets, n](Graph& g, int i) {
    const auto x = g.value(il).array();
    const auto s = 1.0 / (1.0 + (-x).exp());
    g.grad(il).array() += (s - targets.array()) * (g.grad(i)(0, 0) / n);
  });
}

Var squared_error(Var a, double target) {
  check(a.value().size() == 1, "squared_error");
  Graph& g = *a.graph();
  Mat out(1, 1);
  const double d = a.value()(0, 0) - target;
  out(0, 0) = d * d;
  const int ia = a.id();
  return g.push(std::move(out), {a}, [ia, d](Graph& g, int i) { g.grad(ia)(0, 0) += 2.0 * d * g.grad(i)(0, 0); });
}

}  // namespace histmap::ag
