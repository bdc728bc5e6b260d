#pragma once

// Minimal reverse-mode automatic differentiation over row-major dense
// matrices. A Graph records every operation of one forward pass; backward()
// walks the tape in reverse. Nodes that do not depend on a gradient-carrying
// input skip their backward work entirely.

#include <Eigen/Dense>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace histmap::ag {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// A named tensor owned by a model.
struct Param {
  std::string name;
  Mat value;
  Mat grad;
  bool trainable = true;
  std::string family;

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

class Graph;

/// Handle to a node of a Graph.
class Var {
 public:
  Var() = default;
  Var(Graph* g, int id) : g_(g), id_(id) {}
  int id() const noexcept { return id_; }
  Graph* graph() const noexcept { return g_; }
  bool valid() const noexcept { return g_ != nullptr; }
  const Mat& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }

 private:
  Graph* g_ = nullptr;
  int id_ = -1;
};

class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// When false, trainable parameters enter the tape as constants.
  void set_grad_enabled(bool on) { grad_enabled_ = on; }
  bool grad_enabled() const noexcept { return grad_enabled_; }

  Var constant(Mat value);
  /// One tape node per parameter per graph; trainable params carry gradients.
  Var param(Param& p);

  const Mat& value(int id) const { return nodes_[id].ext ? *nodes_[id].ext : nodes_[id].value; }
  bool needs_grad(int id) const { return nodes_[id].needs_grad; }
  Mat& grad(int id);

  /// Seeds d(root)/d(root) = 1 (root must be 1x1), runs the tape backwards and
  /// accumulates into Param::grad of every trainable parameter reached.
  void backward(Var root);

  size_t size() const noexcept { return nodes_.size(); }

  // Used by op implementations.
  Var push(Mat value, std::initializer_list<Var> inputs, std::function<void(Graph&, int)> backward);
  Var push(Mat value, bool needs_grad, std::function<void(Graph&, int)> backward);

 private:
  struct Node {
    Mat value;
    const Mat* ext = nullptr;
    Mat grad;
    bool needs_grad = false;
    bool has_grad = false;
    Param* param = nullptr;
    std::function<void(Graph&, int)> backward;
  };
  std::vector<Node> nodes_;
  std::unordered_map<const Param*, int> param_nodes_;
  bool grad_enabled_ = true;
};

// Linear algebra.
Var matmul(Var a, Var b);     // a * b
Var matmul_nt(Var a, Var b);  // a * b^T
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var add_row(Var a, Var row);  // broadcast a 1 x n row over every row of a
Var scale(Var a, double s);
Var hadamard(Var a, Var b);

// Nonlinearities.
Var gelu(Var a);  // tanh approximation
Var sigmoid(Var a);
Var softmax_rows(Var a);
Var layer_norm_rows(Var a, Var gamma, Var beta, double eps = 1e-5);

// Shape.
Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
Var slice_rows(Var a, Eigen::Index start, Eigen::Index n);
Var slice_cols(Var a, Eigen::Index start, Eigen::Index n);
Var mean_rows(Var a);  // 1 x cols

/// Tokens laid out as (grid x grid) rows of (patch*patch*channels) columns,
/// rearranged into (grid*patch)^2 pixel rows of `channels` columns.
Var unpatchify(Var tokens, int grid, int patch, int channels);
/// Area mean of a (grid*patch)^2 x 1 pixel column down to grid^2 x 1.
Var patch_mean(Var pixels, int grid, int patch);

// Reductions and losses (all 1 x 1).
Var sum_all(Var a);
Var mean_all(Var a);
/// Mean binary cross-entropy between logits and {0,1} targets.
Var bce_with_logits(Var logits, const Mat& targets);
Var squared_error(Var a, double target);

}  // namespace histmap::ag
