#include "emotalk/autodiff.hpp"

#include <cassert>
#include <cmath>
#include <limits>
#include <numbers>

#include "emotalk/error.hpp"

namespace emotalk::ad {

namespace {
constexpr double kInvSqrt2 = 0.70710678118654752440;
}  // namespace

const Matrix& Var::value() const { return graph_->value(id_); }
bool Var::needs_grad() const { return graph_->needs_grad(id_); }

Var Graph::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, false, false, nullptr, nullptr});
  return Var(this, nodes_.size() - 1);
}

Var Graph::param(const Parameter& p) {
  nodes_.push_back(Node{p.value, {}, track_ && !p.frozen, false, nullptr, &p});
  return Var(this, nodes_.size() - 1);
}

Var Graph::record(Matrix value, std::span<const Var> inputs, BackwardFn fn) {
  bool needs = false;
  for (const Var& in : inputs) {
    assert(in.graph() == this);
    needs = needs || nodes_[in.id()].needs_grad;
  }
  nodes_.push_back(Node{std::move(value), {}, needs, false, needs ? std::move(fn) : nullptr, nullptr});
  return Var(this, nodes_.size() - 1);
}

Matrix& Graph::grad_accum(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.has_grad) {
    n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
    n.has_grad = true;
  }
  return n.grad;
}

const Matrix& Graph::grad(std::size_t id) { return grad_accum(id); }

void Graph::backward(Var root) {
  if (root.graph() != this || root.rows() != 1 || root.cols() != 1) {
    throw AlignmentError("backward() requires a 1x1 root of this graph");
  }
  if (!nodes_[root.id()].needs_grad) return;
  grad_accum(root.id())(0, 0) += 1.0;
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.needs_grad || !n.has_grad) continue;
    if (n.backward) {
      n.backward(*this, i);
    } else if (n.param != nullptr) {
      n.param->grad += n.grad;
    }
  }
}

namespace {

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw AlignmentError(std::string(op) + ": shape mismatch");
  }
}

}  // namespace

Var matmul(Var a, Var b) {
  if (a.cols() != b.rows()) throw AlignmentError("matmul: inner dimensions differ");
  Graph& g = *a.graph();
  const Var in[] = {a, b};
  return g.record(a.value() * b.value(), in, [a, b](Graph& gr, std::size_t self) {
    const Matrix& up = gr.grad(self);
    if (a.needs_grad()) gr.grad_accum(a.id()).noalias() += up * b.value().transpose();
    if (b.needs_grad()) gr.grad_accum(b.id()).noalias() += a.value().transpose() * up;
  });
}

Var matmul_nt(Var a, Var b) {
  if (a.cols() != b.cols()) throw AlignmentError("matmul_nt: inner dimensions differ");
  Graph& g = *a.graph();
  const Var in[] = {a, b};
  return g.record(a.value() * b.value().transpose(), in, [a, b](Graph& gr, std::size_t self) {
    const Matrix& up = gr.grad(self);
    if (a.needs_grad()) gr.grad_accum(a.id()).noalias() += up * b.value();
    if (b.needs_grad()) gr.grad_accum(b.id()).noalias() += up.transpose() * a.value();
  });
}

Var lmul(const Matrix& lhs, Var x) {
  if (lhs.cols() != x.rows()) throw AlignmentError("lmul: inner dimensions differ");
  Graph& g = *x.graph();
  const Var in[] = {x};
  return g.record(lhs * x.value(), in, [lhs, x](Graph& gr, std::size_t self) {
    gr.grad_accum(x.id()).noalias() += lhs.transpose() * gr.grad(self);
  });
}

Var add(Var a, Var b) {
  require_same_shape(a, b, "add");
  Graph& g = *a.graph();
  const Var in[] = {a, b};
  return g.record(a.value() + b.value(), in, [a, b](Graph& gr, std::size_t self) {
    const Matrix& up = gr.grad(self);
    if (a.needs_grad()) gr.grad_accum(a.id()) += up;
    if (b.needs_grad()) gr.grad_accum(b.id()) += up;
  });
}

Var sub(Var a, Var b) {
  require_same_shape(a, b, "sub");
  Graph& g = *a.graph();
  const Var in[] = {a, b};
  return g.record(a.value() - b.value(), in, [a, b](Graph& gr, std::size_t self) {
    const Matrix& up = gr.grad(self);
    if (a.needs_grad()) gr.grad_accum(a.id()) += up;
    if (b.needs_grad()) gr.grad_accum(b.id()) -= up;
  });
}

Var add_row(Var x, Var row) {
  if (row.rows() != 1 || row.cols() != x.cols()) throw AlignmentError("add_row: bias shape mismatch");
  Graph& g = *x.graph();
  Matrix out = x.value();
  out.rowwise() += row.value().row(0);
  const Var in[] = {x, row};
  return g.record(std::move(out), in, [x, row](Graph& gr, std::size_t self) {
    const Matrix& up = gr.grad(self);
    if (x.needs_grad()) gr.grad_accum(x.id()) += up;
    if (row.needs_grad()) gr.grad_accum(row.id()) += up.colwise().sum();
  });
}

Var add_const(Var x, const Matrix& c) {
  if (c.rows() != x.rows() || c.cols() != x.cols()) throw AlignmentError("add_const: shape mismatch");
  Graph& g = *x.graph();
  const Var in[] = {x};
  return g.record(x.value() + c, in, [x](Graph& gr, std::size_t self) {
    gr.grad_accum(x.id()) += gr.grad(self);
  });
}

Var scale(Var x, double s) {
  Graph& g = *x.graph();
  const Var in[] = {x};
  return g.record(x.value() * s, in, [x, s](Graph& gr, std::size_t self) {
    gr.grad_accum(x.id()) += s * gr.grad(self);
  });
}

Var hadamard(Var a, Var b) {
  require_same_shape(a, b, "hadamard");
  Graph& g = *a.graph();
  const Var in[] = {a, b};
  return g.record(a.value().cwiseProduct(b.value()), in, [a, b](Graph& gr, std::size_t self) {
    const Matrix& up = gr.grad(self);
    if (a.needs_grad()) gr.grad_accum(a.id()) += up.cwiseProduct(b.value());
    if (b.needs_grad()) gr.grad_accum(b.id()) += up.cwiseProduct(a.value());
  });
}

Var gelu(Var x) {
  Graph& g = *x.graph();
  const Matrix& v = x.value();
  Matrix out = v.unaryExpr([](double z) { return 0.5 * z * (1.0 + std::erf(z * kInvSqrt2)); });
  const Var in[] = {x};
  return g.record(std::move(out), in, [x](Graph& gr, std::size_t self) {
    const Matrix d = x.value().unaryExpr([](double z) {
      const double cdf = 0.5 * (1.0 + std::erf(z * kInvSqrt2));
      const double pdf = std::exp(-0.5 * z * z) * 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
      return cdf + z * pdf;
    });
    gr.grad_accum(x.id()) += gr.grad(self).cwiseProduct(d);
  });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  const Index n = x.cols();
  if (gain.rows() != 1 || gain.cols() != n || bias.rows() != 1 || bias.cols() != n) {
    throw AlignmentError("layer_norm: affine shape mismatch");
  }
  Graph& g = *x.graph();
  const Matrix& v = x.value();
  Matrix xhat(v.rows(), n);
  Vector inv_std(v.rows());
  for (Index r = 0; r < v.rows(); ++r) {
    const double mean = v.row(r).mean();
    const double var = (v.row(r).array() - mean).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (v.row(r).array() - mean) * inv_std(r);
  }
  Matrix out = xhat.array().rowwise() * gain.value().row(0).array();
  out.rowwise() += bias.value().row(0);
  const Var in[] = {x, gain, bias};
  return g.record(std::move(out), in, [x, gain, bias, xhat, inv_std](Graph& gr, std::size_t self) {
    const Matrix& up = gr.grad(self);
    if (gain.needs_grad()) gr.grad_accum(gain.id()) += up.cwiseProduct(xhat).colwise().sum();
    if (bias.needs_grad()) gr.grad_accum(bias.id()) += up.colwise().sum();
    if (x.needs_grad()) {
      const Matrix dxhat = up.array().rowwise() * gain.value().row(0).array();
      Matrix& gx = gr.grad_accum(x.id());
      for (Index r = 0; r < dxhat.rows(); ++r) {
        const double m1 = dxhat.row(r).mean();
        const double m2 = dxhat.row(r).dot(xhat.row(r)) / static_cast<double>(dxhat.cols());
        gx.row(r).array() += inv_std(r) * (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2);
      }
    }
  });
}

Var softmax_rows(Var x) {
  Graph& g = *x.graph();
  const Matrix& v = x.value();
  Matrix out(v.rows(), v.cols());
  for (Index r = 0; r < v.rows(); ++r) {
    const double mx = v.row(r).maxCoeff();
    // Eigen's vectorized exp clamps its argument, so masked logits are zeroed
    // explicitly.
    out.row(r) = (v.row(r).array() == -std::numeric_limits<double>::infinity())
                     .select(0.0, (v.row(r).array() - mx).exp());
    out.row(r) /= out.row(r).sum();
  }
  const Var in[] = {x};
  return g.record(std::move(out), in, [x](Graph& gr, std::size_t self) {
    const Matrix& up = gr.grad(self);
    const Matrix& p = gr.value(self);
    const Vector dots = up.cwiseProduct(p).rowwise().sum();
    Matrix d = up;
    d.colwise() -= dots;
    gr.grad_accum(x.id()) += d.cwiseProduct(p);
  });
}

Var slice_cols(Var x, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > x.cols()) throw RangeError("slice_cols: out of range");
  Graph& g = *x.graph();
  const Var in[] = {x};
  return g.record(x.value().middleCols(start, count), in, [x, start, count](Graph& gr, std::size_t self) {
    gr.grad_accum(x.id()).middleCols(start, count) += gr.grad(self);
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw AlignmentError("concat_cols: no inputs");
  Graph& g = *parts.front().graph();
  const Index rows = parts.front().rows();
  Index cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows) throw AlignmentError("concat_cols: row count mismatch");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  Index at = 0;
  for (const Var& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return g.record(std::move(out), parts, [inputs](Graph& gr, std::size_t self) {
    const Matrix& up = gr.grad(self);
    Index offset = 0;
    for (const Var& p : inputs) {
      if (p.needs_grad()) gr.grad_accum(p.id()) += up.middleCols(offset, p.cols());
      offset += p.cols();
    }
  });
}

Var repeat_row(Var row, Index times) {
  if (row.rows() != 1) throw AlignmentError("repeat_row: expects a single row");
  Graph& g = *row.graph();
  Matrix out = row.value().replicate(times, 1);
  const Var in[] = {row};
  return g.record(std::move(out), in, [row](Graph& gr, std::size_t self) {
    gr.grad_accum(row.id()) += gr.grad(self).colwise().sum();
  });
}

Var select_row(Var x, Index r) {
  if (r < 0 || r >= x.rows()) throw RangeError("select_row: row out of range");
  Graph& g = *x.graph();
  const Var in[] = {x};
  return g.record(x.value().row(r), in, [x, r](Graph& gr, std::size_t self) {
    gr.grad_accum(x.id()).row(r) += gr.grad(self).row(0);
  });
}

Var pick(Var x, Index r, Index c) {
  if (r < 0 || r >= x.rows() || c < 0 || c >= x.cols()) throw RangeError("pick: index out of range");
  Graph& g = *x.graph();
  Matrix out(1, 1);
  out(0, 0) = x.value()(r, c);
  const Var in[] = {x};
  return g.record(std::move(out), in, [x, r, c](Graph& gr, std::size_t self) {
    gr.grad_accum(x.id())(r, c) += gr.grad(self)(0, 0);
  });
}

Var mean_square(Var x) {
  Graph& g = *x.graph();
  const double n = static_cast<double>(x.value().size());
  Matrix out(1, 1);
  out(0, 0) = x.value().squaredNorm() / n;
  const Var in[] = {x};
  return g.record(std::move(out), in, [x, n](Graph& gr, std::size_t self) {
    gr.grad_accum(x.id()) += (2.0 * gr.grad(self)(0, 0) / n) * x.value();
  });
}

Var sum_all(Var x) {
  Graph& g = *x.graph();
  Matrix out(1, 1);
  out(0, 0) = x.value().sum();
  const Var in[] = {x};
  return g.record(std::move(out), in, [x](Graph& gr, std::size_t self) {
    gr.grad_accum(x.id()).array() += gr.grad(self)(0, 0);
  });
}

Var log_floor(Var x, double floor) {
  Graph& g = *x.graph();
  Matrix out = x.value().unaryExpr([floor](double z) { return std::log(std::max(z, floor)); });
  const Var in[] = {x};
  return g.record(std::move(out), in, [x, floor](Graph& gr, std::size_t self) {
    const Matrix d = x.value().unaryExpr([floor](double z) { return z > floor ? 1.0 / z : 0.0; });
    gr.grad_accum(x.id()) += gr.grad(self).cwiseProduct(d);
  });
}

Var conv1d(Var x, Var weight, Var bias, Index kernel, Index stride) {
  const Index len = x.rows();
  const Index cin = x.cols();
  if (kernel < 1 || stride < 1) throw ConfigError("conv1d: kernel and stride must be positive");
  if (weight.rows() != kernel * cin) throw AlignmentError("conv1d: weight rows != kernel * in_channels");
  if (bias.rows() != 1 || bias.cols() != weight.cols()) throw AlignmentError("conv1d: bias shape mismatch");
  if (len < kernel) throw LengthError("conv1d: input shorter than kernel");
  const Index out_len = (len - kernel) / stride + 1;
  Graph& g = *x.graph();

  // With row-major storage the receptive field of output t is one contiguous
  // run of kernel*cin values starting at row t*stride.
  using Strided = Eigen::Map<const Matrix, 0, Eigen::OuterStride<>>;
  const Strided cols(x.value().data(), out_len, kernel * cin, Eigen::OuterStride<>(stride * cin));
  Matrix out = cols * weight.value();
  out.rowwise() += bias.value().row(0);

  const Var in[] = {x, weight, bias};
  return g.record(std::move(out), in, [x, weight, bias, kernel, stride, out_len, cin](Graph& gr, std::size_t self) {
    const Matrix& up = gr.grad(self);
    const Strided im(x.value().data(), out_len, kernel * cin, Eigen::OuterStride<>(stride * cin));
    if (weight.needs_grad()) gr.grad_accum(weight.id()).noalias() += im.transpose() * up;
    if (bias.needs_grad()) gr.grad_accum(bias.id()) += up.colwise().sum();
    if (x.needs_grad()) {
      const Matrix gcols = up * weight.value().transpose();
      Matrix& gx = gr.grad_accum(x.id());
      double* base = gx.data();
      for (Index t = 0; t < out_len; ++t) {
        Eigen::Map<RowVector> dst(base + t * stride * cin, kernel * cin);
        dst += gcols.row(t);
      }
    }
  });
}

}  // namespace emotalk::ad
