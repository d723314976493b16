#include "emotalk/nn.hpp"

#include <cmath>
#include <limits>

#include "emotalk/error.hpp"

namespace emotalk::nn {

Matrix uniform_fan_in(Index rows, Index cols, Index fan_in, double gain, std::mt19937_64& rng) {
  const double a = gain / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-a, a);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

Linear make_linear(Index in, Index out, std::mt19937_64& rng, double gain) {
  return Linear{Parameter(uniform_fan_in(in, out, in, gain, rng)), Parameter(Matrix::Zero(1, out))};
}

Var linear(Graph& g, const Linear& layer, Var x) {
  return ad::add_row(ad::matmul(x, g.param(layer.weight)), g.param(layer.bias));
}

LayerNorm make_layer_norm(Index dim) {
  return LayerNorm{Parameter(Matrix::Ones(1, dim)), Parameter(Matrix::Zero(1, dim))};
}

Var layer_norm(Graph& g, const LayerNorm& norm, Var x) {
  return ad::layer_norm(x, g.param(norm.gain), g.param(norm.bias));
}

MultiHeadAttention make_attention(Index dim, int heads, std::mt19937_64& rng) {
  if (heads < 1 || dim % heads != 0) throw ConfigError("attention width must be divisible by the head count");
  MultiHeadAttention a;
  a.query = make_linear(dim, dim, rng);
  a.key = make_linear(dim, dim, rng);
  a.value = make_linear(dim, dim, rng);
  a.output = make_linear(dim, dim, rng);
  a.heads = heads;
  return a;
}

Var attention(Graph& g, const MultiHeadAttention& attn, Var queries, Var keys_values, std::span<const Matrix> head_bias,
              std::vector<Matrix>* weights_out) {
  const Index dim = attn.query.out_dim();
  const Index head_dim = dim / attn.heads;
  if (!head_bias.empty() && head_bias.size() != 1 && head_bias.size() != static_cast<std::size_t>(attn.heads)) {
    throw AlignmentError("attention: bias count must be 0, 1 or the head count");
  }
  const Var q = linear(g, attn.query, queries);
  const Var k = linear(g, attn.key, keys_values);
  const Var v = linear(g, attn.value, keys_values);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));

  std::vector<Var> heads;
  heads.reserve(attn.heads);
  for (int h = 0; h < attn.heads; ++h) {
    const Var qh = ad::slice_cols(q, h * head_dim, head_dim);
    const Var kh = ad::slice_cols(k, h * head_dim, head_dim);
    const Var vh = ad::slice_cols(v, h * head_dim, head_dim);
    Var scores = ad::scale(ad::matmul_nt(qh, kh), inv_sqrt);
    if (!head_bias.empty()) scores = ad::add_const(scores, head_bias[head_bias.size() == 1 ? 0 : h]);
    const Var weights = ad::softmax_rows(scores);
    if (weights_out != nullptr) weights_out->push_back(weights.value());
    heads.push_back(ad::matmul(weights, vh));
  }
  return linear(g, attn.output, ad::concat_cols(heads));
}

FeedForward make_feed_forward(Index dim, Index inner, std::mt19937_64& rng) {
  return FeedForward{make_linear(dim, inner, rng), make_linear(inner, dim, rng)};
}

Var feed_forward(Graph& g, const FeedForward& ff, Var x) {
  return linear(g, ff.down, ad::gelu(linear(g, ff.up, x)));
}

}  // namespace emotalk::nn
