// Copyright 2026 The unfoldsep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Tape-based reverse-mode differentiation over small dense tensors.
//
// Every operation appends a node to a Tape and returns a Var handle. Nodes
// are created in topological order, so walking the tape backwards from the
// root visits every node after all of its consumers. Complex spectra are
// rank-3 tensors T x F x 2 with interleaved (re, im) pairs.

#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "unfoldsep/dsp.hpp"

namespace unfoldsep::ad {

struct Shape {
  std::array<std::size_t, 3> dims{1, 1, 1};
  int rank = 0;

  static Shape scalar() { return {}; }
  static Shape vector(std::size_t n) { return {{n, 1, 1}, 1}; }
  static Shape matrix(std::size_t rows, std::size_t cols) {
    return {{rows, cols, 1}, 2};
  }
  static Shape tensor(std::size_t a, std::size_t b, std::size_t c) {
    return {{a, b, c}, 3};
  }

  std::size_t numel() const { return dims[0] * dims[1] * dims[2]; }
  std::size_t rows() const { return dims[0]; }
  std::size_t cols() const { return dims[1]; }
  std::string str() const;

  bool operator==(const Shape&) const = default;
};

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  bool valid() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }

  const Shape& shape() const;
  std::span<const double> value() const;
  /// Gradient after Tape::backward; empty if the node was not reached.
  std::span<const double> grad() const;
  /// Value of a scalar node.
  double item() const;

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  /// Propagates the node's gradient into its parents' gradients.
  using BackwardFn = std::function<void(Tape& tape, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that never receives a gradient.
  Var constant(Shape shape, std::vector<double> value);
  /// Leaf whose gradient is accumulated by backward().
  Var parameter(Shape shape, std::vector<double> value);

  /// Appends an operation node. `backward` may be empty for nodes without
  /// differentiable parents.
  Var record(Shape shape, std::vector<double> value,
             std::vector<std::size_t> parents, BackwardFn backward);

  /// Seeds d(root)/d(root) = 1 and visits every node in reverse creation
  /// order. Clears gradients from any previous call first.
  void backward(Var root);
  /// Same, visiting nodes in `order`, which must list every node reachable
  /// from the root with each node after all of its consumers.
  void backward(Var root, std::span<const std::size_t> order);
  /// A reverse topological order of the nodes reachable from `root` that
  /// differs from creation order (iterative DFS post-order, reversed).
  std::vector<std::size_t> dfs_order(Var root) const;

  std::size_t size() const { return nodes_.size(); }
  const Shape& shape(std::size_t id) const { return nodes_[id].shape; }
  std::span<const double> value(std::size_t id) const { return nodes_[id].value; }
  std::span<const double> grad(std::size_t id) const { return nodes_[id].grad; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  const std::vector<std::size_t>& parents(std::size_t id) const {
    return nodes_[id].parents;
  }

  /// Gradient buffer of `id` for accumulation from a backward function,
  /// zero-initialized on first use; empty span if `id` needs no gradient.
  std::span<double> grad_sink(std::size_t id);

 private:
  struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    std::vector<std::size_t> parents;
    BackwardFn backward;
    bool requires_grad = false;
  };

  void seed(Var root);
  void run_node(std::size_t id);

  std::vector<Node> nodes_;
};

// Elementwise and linear-algebra operations. Shape mismatches throw
// GraphError.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
/// a * c elementwise with a constant buffer of the same size.
Var mul_const(Var a, std::span<const double> c);
/// Sum of all entries, as a scalar.
Var sum(Var a);
/// Sum of equally shaped nodes.
Var add_n(std::span<const Var> terms);
/// Matrix product of rank-2 nodes.
Var matmul(Var a, Var b);
/// Adds a length-cols vector to every row of a rank-2 node.
Var add_row_bias(Var a, Var bias);
/// Columns [begin, end) of a rank-2 node.
Var slice_cols(Var a, std::size_t begin, std::size_t end);
/// Same data, new shape with equal numel.
Var reshape(Var a, Shape shape);

Var sigmoid(Var a);
Var tanh(Var a);
/// clamp(a, lo, hi); subgradient 0 at and beyond the kinks.
Var clip(Var a, double lo, double hi);
/// Softmax over consecutive triples (numel must be a multiple of 3).
Var softmax3(Var a);
/// p0*0 + p1*1 + p2*2 for each triple; the last dimension shrinks by 3.
Var convex_combine3(Var probs);
/// Divides each row of a rank-2 node by its L2 norm (floored at 1e-12).
Var normalize_rows(Var a);
/// log(|z| + delta) for a T x F x 2 complex node; result is T x F.
Var log_magnitude(Var z, double delta);

/// Forward STFT of a length-n signal node; result T x F x 2.
Var stft(Var signal, std::shared_ptr<const StftOperator> op);
/// Inverse STFT of a T x F x 2 node; result has op->length() samples.
Var istft(Var spectrum, std::shared_ptr<const StftOperator> op);
/// magnitude * z / max(|z|, eps): replaces the magnitude of each bin of z
/// while keeping its phase. z is T x F x 2, magnitude T x F.
Var polar_reassign(Var z, Var magnitude, double eps = 1e-8);

/// sum |a - target|; subgradient sign(0) = 0.
Var l1(Var a, std::span<const double> target);
/// Minimum of scalar nodes; the gradient goes to the first argmin only.
Var min_of(std::span<const Var> values);

/// ||V^T V||_F^2 - 2 ||V^T Y||_F^2 + ||Y^T Y||_F^2 for V (N x D) and a
/// constant Y (N x C).
Var dc_classic(Var embeddings, const Eigen::MatrixXd& labels);
/// D - tr((V^T V + rI)^-1 V^T Y (Y^T Y + rI)^-1 Y^T V).
Var dc_whitened(Var embeddings, const Eigen::MatrixXd& labels, double ridge);

}  // namespace unfoldsep::ad
