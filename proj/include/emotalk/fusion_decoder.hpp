#pragma once

// Emotion-guided feature fusion decoder.
//
// Per frame the fused input is [emotion | content | style | level]; a
// periodic positional encoding is added, then each decoder block applies
//   x += SelfAttention(LN(x))          causal, linear distance bias per head
//   x += CrossAttention(LN(x), G(e))   G projects raw emotion features
//   x += FeedForward(LN(x))
// and a final norm plus affine head produce 52 coefficients.

#include <random>
#include <string>
#include <vector>

#include "emotalk/autodiff.hpp"
#include "emotalk/data_model.hpp"
#include "emotalk/nn.hpp"

namespace emotalk {

struct FusionConfig {
  int d_emotion = 256;
  int d_content = 512;
  int d_style = 32;
  int d_level = 32;
  int n_heads = 4;
  int ppe_period = 30;
  int n_styles = 24;
  int n_levels = 2;
  int n_decoder_blocks = 1;
  int d_ff = 1664;

  int d_fused() const { return d_emotion + d_content + d_style + d_level; }

  /// 256 + 512 + 32 + 32 = 832 wide, four heads, 24 styles, 2 levels.
  static FusionConfig full();
  /// Same topology at 32 + 64 + 8 + 8 = 112 wide.
  static FusionConfig desk();

  void validate() const;
};

struct DecoderBlock {
  nn::LayerNorm self_norm;
  nn::MultiHeadAttention self_attn;
  nn::LayerNorm cross_norm;
  nn::MultiHeadAttention cross_attn;
  nn::LayerNorm ff_norm;
  nn::FeedForward ff;
};

struct FusionParams {
  nn::Linear emotion_projection;  // d_model -> d_emotion
  nn::Linear content_projection;  // d_model -> d_content
  ad::Parameter style_table;      // n_styles x d_style
  ad::Parameter level_table;      // n_levels x d_level
  nn::Linear guidance_projection;  // d_model -> d_fused
  std::vector<DecoderBlock> blocks;
  nn::LayerNorm final_norm;
  nn::Linear head;  // d_fused -> 52
  int ppe_period = 30;
};

FusionParams init_fusion(const FusionConfig& config, Index d_model, std::mt19937_64& rng);

/// Post-softmax attention weights recorded during one decode, per head.
struct AttentionTrace {
  std::vector<Matrix> self_weights;
  std::vector<Matrix> cross_weights;
};

// ---- graph-level building blocks --------------------------------------------

ad::Var fuse(ad::Graph& g, const FusionParams& params, ad::Var emotion, ad::Var content, int style_id, int level_id);
ad::Var decode(ad::Graph& g, const FusionParams& params, ad::Var fused, ad::Var emotion_raw,
               AttentionTrace* trace = nullptr);

// ---- value-level operations ---------------------------------------------------

FeatureSequence fuse_features(const FusionParams& params, const FeatureSequence& emotion,
                              const FeatureSequence& content, int style_id, int level_id);

/// PPE(t, 2i) = sin((t mod period) / 10000^(2i/d)), PPE(t, 2i+1) = cos(same).
Matrix periodic_positional_encoding(Index frames, Index dim, int period);

/// Head slopes 2^(-8h/H), h = 1..H.
std::vector<double> alibi_slopes(int heads);
/// Per-head additive bias: slope * (j - i) for j <= i, -inf for j > i.
std::vector<Matrix> alibi_bias(Index frames, int heads);
/// 0 on and below the diagonal, -inf above.
Matrix causal_mask(Index frames);

/// Multi-head causal self-attention with linear distance bias (no residual).
Matrix biased_self_attention(const nn::MultiHeadAttention& attn, const Matrix& x,
                             std::vector<Matrix>* weights_out = nullptr);

/// x + CrossAttention(LN(x), G(emotion_raw)) for decoder block `block`.
Matrix emotion_guided_attention(const FusionParams& params, std::size_t block, const Matrix& x,
                                const Matrix& emotion_raw, std::vector<Matrix>* weights_out = nullptr);

BlendshapeSequence decode_blendshapes(const FusionParams& params, const FeatureSequence& fused,
                                      const FeatureSequence& emotion_raw, AttentionTrace* trace = nullptr);

template <nn::SameOrConst<FusionParams> P, class F>
void visit(const std::string& prefix, P& p, F&& f) {
  nn::visit(prefix + ".emotion_projection", p.emotion_projection, f);
  nn::visit(prefix + ".content_projection", p.content_projection, f);
  f(prefix + ".style_table", p.style_table);
  f(prefix + ".level_table", p.level_table);
  nn::visit(prefix + ".guidance_projection", p.guidance_projection, f);
  for (std::size_t i = 0; i < p.blocks.size(); ++i) {
    const std::string b = prefix + ".blocks." + std::to_string(i);
    nn::visit(b + ".self_norm", p.blocks[i].self_norm, f);
    nn::visit(b + ".self_attn", p.blocks[i].self_attn, f);
    nn::visit(b + ".cross_norm", p.blocks[i].cross_norm, f);
    nn::visit(b + ".cross_attn", p.blocks[i].cross_attn, f);
    nn::visit(b + ".ff_norm", p.blocks[i].ff_norm, f);
    nn::visit(b + ".ff", p.blocks[i].ff, f);
  }
  nn::visit(prefix + ".final_norm", p.final_norm, f);
  nn::visit(prefix + ".head", p.head, f);
}

}  // namespace emotalk
