#pragma once

// Layer building blocks shared by the encoders and the fusion decoder.
// Weights are stored input-major (in x out) so a layer is x * W + b.

#include <concepts>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "emotalk/autodiff.hpp"
#include "emotalk/tensor.hpp"

namespace emotalk::nn {

using ad::Graph;
using ad::Parameter;
using ad::Var;

/// Uniform U(-a, a) fill, a = gain / sqrt(fan_in).
Matrix uniform_fan_in(Index rows, Index cols, Index fan_in, double gain, std::mt19937_64& rng);

struct Linear {
  Parameter weight;  // in x out
  Parameter bias;    // 1 x out

  Index in_dim() const { return weight.value.rows(); }
  Index out_dim() const { return weight.value.cols(); }
};

Linear make_linear(Index in, Index out, std::mt19937_64& rng, double gain = 1.0);
Var linear(Graph& g, const Linear& layer, Var x);

struct LayerNorm {
  Parameter gain;
  Parameter bias;
};

LayerNorm make_layer_norm(Index dim);
Var layer_norm(Graph& g, const LayerNorm& norm, Var x);

struct MultiHeadAttention {
  Linear query;
  Linear key;
  Linear value;
  Linear output;
  int heads = 1;
};

MultiHeadAttention make_attention(Index dim, int heads, std::mt19937_64& rng);

/// Scaled dot-product attention over `heads` column groups. `head_bias`
/// holds either nothing, one Tq x Tk matrix shared by all heads, or one per
/// head; entries may be -inf to mask. When `weights_out` is non-null the
/// post-softmax weights of every head are appended to it.
Var attention(Graph& g, const MultiHeadAttention& attn, Var queries, Var keys_values, std::span<const Matrix> head_bias,
              std::vector<Matrix>* weights_out = nullptr);

struct FeedForward {
  Linear up;
  Linear down;
};

FeedForward make_feed_forward(Index dim, Index inner, std::mt19937_64& rng);
Var feed_forward(Graph& g, const FeedForward& ff, Var x);

// ---- parameter enumeration -----------------------------------------------
// `f(name, Parameter&)` is called for every array, in a fixed order. Works on
// const and non-const containers alike.

template <class T, class U>
concept SameOrConst = std::same_as<std::remove_const_t<T>, U>;

template <SameOrConst<Linear> L, class F>
void visit(const std::string& prefix, L& l, F&& f) {
  f(prefix + ".weight", l.weight);
  f(prefix + ".bias", l.bias);
}

template <SameOrConst<LayerNorm> N, class F>
void visit(const std::string& prefix, N& n, F&& f) {
  f(prefix + ".gain", n.gain);
  f(prefix + ".bias", n.bias);
}

template <SameOrConst<MultiHeadAttention> A, class F>
void visit(const std::string& prefix, A& a, F&& f) {
  visit(prefix + ".query", a.query, f);
  visit(prefix + ".key", a.key, f);
  visit(prefix + ".value", a.value, f);
  visit(prefix + ".output", a.output, f);
}

template <SameOrConst<FeedForward> FF, class F>
void visit(const std::string& prefix, FF& ff, F&& f) {
  visit(prefix + ".up", ff.up, f);
  visit(prefix + ".down", ff.down, f);
}

}  // namespace emotalk::nn
