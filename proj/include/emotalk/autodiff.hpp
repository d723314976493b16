#pragma once

// Minimal reverse-mode automatic differentiation over dense row-major
// matrices. A Graph records every operation as a node; backward() walks the
// nodes in reverse creation order. Nodes whose inputs need no gradient are
// recorded without a backward closure, so frozen sub-networks cost nothing
// on the reverse pass.

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "emotalk/tensor.hpp"

namespace emotalk::ad {

/// A learnable array. `grad` is a scratch accumulator filled by
/// Graph::backward() and cleared with zero_grad(); it is mutable so that
/// forward passes can take parameters by const reference.
struct Parameter {
  Matrix value;
  mutable Matrix grad;
  bool frozen = false;

  Parameter() = default;
  explicit Parameter(Matrix v, bool is_frozen = false)
      : value(std::move(v)), grad(Matrix::Zero(value.rows(), value.cols())), frozen(is_frozen) {}

  void zero_grad() const { grad.setZero(value.rows(), value.cols()); }
};

class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  /// Value of a 1x1 node.
  double scalar() const { return value()(0, 0); }
  bool needs_grad() const;

  Graph* graph() const { return graph_; }
  std::size_t id() const { return id_; }

 private:
  friend class Graph;
  Var(Graph* g, std::size_t id) : graph_(g), id_(id) {}

  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::size_t self)>;

  /// With `track_gradients` false every node is a constant and backward()
  /// is a no-op; used for inference.
  explicit Graph(bool track_gradients = true) : track_(track_gradients) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Matrix value);
  /// Leaf bound to `p`; on backward() its gradient is added to p.grad unless
  /// the parameter is frozen or the graph does not track gradients.
  Var param(const Parameter& p);

  /// Records a node. `fn` runs only if some input needs a gradient.
  Var record(Matrix value, std::span<const Var> inputs, BackwardFn fn);

  /// Seeds d(root)/d(root) = 1 for a 1x1 root and propagates.
  void backward(Var root);

  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
  /// Upstream gradient of a node (zero matrix if nothing flowed into it).
  const Matrix& grad(std::size_t id);
  /// Gradient accumulator of an input node; allocated on first use.
  Matrix& grad_accum(std::size_t id);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool needs_grad = false;
    bool has_grad = false;
    BackwardFn backward;
    const Parameter* param = nullptr;
  };
  std::vector<Node> nodes_;
  bool track_ = true;
};

// ---- operations -----------------------------------------------------------

Var matmul(Var a, Var b);
/// a * b^T
Var matmul_nt(Var a, Var b);
/// Constant left factor: lhs * x.
Var lmul(const Matrix& lhs, Var x);
Var add(Var a, Var b);
Var sub(Var a, Var b);
/// Adds a 1xC row to every row of x.
Var add_row(Var x, Var row);
Var add_const(Var x, const Matrix& c);
Var scale(Var x, double s);
Var hadamard(Var a, Var b);
Var gelu(Var x);
/// Row-wise layer normalization with affine gain and bias (both 1xC).
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
Var softmax_rows(Var x);
Var slice_cols(Var x, Index start, Index count);
Var concat_cols(std::span<const Var> parts);
/// Repeats a 1xC row `times` times.
Var repeat_row(Var row, Index times);
Var select_row(Var x, Index row);
/// Element (r, c) as a 1x1 node.
Var pick(Var x, Index r, Index c);
/// Sum of squares divided by element count, as 1x1.
Var mean_square(Var x);
Var sum_all(Var x);
/// Elementwise log(max(x, floor)).
Var log_floor(Var x, double floor);
/// Strided valid 1-D convolution over rows. x is L x Cin, weight is
/// (kernel*Cin) x Cout with rows ordered tap-major, bias is 1 x Cout.
Var conv1d(Var x, Var weight, Var bias, Index kernel, Index stride);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(double s, Var x) { return scale(x, s); }

}  // namespace emotalk::ad
