#include "emotalk/fusion_decoder.hpp"

#include <cmath>
#include <limits>

#include "emotalk/error.hpp"

namespace emotalk {

FusionConfig FusionConfig::full() { return FusionConfig{}; }

FusionConfig FusionConfig::desk() {
  FusionConfig c;
  c.d_emotion = 32;
  c.d_content = 64;
  c.d_style = 8;
  c.d_level = 8;
  c.d_ff = 2 * c.d_fused();
  return c;
}

void FusionConfig::validate() const {
  if (d_emotion < 1 || d_content < 1 || d_style < 1 || d_level < 1 || d_ff < 1) {
    throw ConfigError("fusion widths must be positive");
  }
  if (n_heads < 1 || d_fused() % n_heads != 0) throw ConfigError("fused width must be divisible by n_heads");
  if (d_fused() % 2 != 0) throw ConfigError("fused width must be even for the positional encoding");
  if (ppe_period < 1) throw ConfigError("positional encoding period must be positive");
  if (n_styles < 1 || n_levels < 1) throw ConfigError("style and level tables need at least one row");
  if (n_decoder_blocks < 1) throw ConfigError("decoder needs at least one block");
}

FusionParams init_fusion(const FusionConfig& config, Index d_model, std::mt19937_64& rng) {
  config.validate();
  const Index fused = config.d_fused();
  FusionParams p;
  p.emotion_projection = nn::make_linear(d_model, config.d_emotion, rng);
  p.content_projection = nn::make_linear(d_model, config.d_content, rng);
  // A one-hot input has a single active entry, so the fan-in is 1.
  p.style_table = ad::Parameter(nn::uniform_fan_in(config.n_styles, config.d_style, 1, 1.0, rng));
  p.level_table = ad::Parameter(nn::uniform_fan_in(config.n_levels, config.d_level, 1, 1.0, rng));
  p.guidance_projection = nn::make_linear(d_model, fused, rng);
  for (int b = 0; b < config.n_decoder_blocks; ++b) {
    DecoderBlock block;
    block.self_norm = nn::make_layer_norm(fused);
    block.self_attn = nn::make_attention(fused, config.n_heads, rng);
    block.cross_norm = nn::make_layer_norm(fused);
    block.cross_attn = nn::make_attention(fused, config.n_heads, rng);
    block.ff_norm = nn::make_layer_norm(fused);
    block.ff = nn::make_feed_forward(fused, config.d_ff, rng);
    p.blocks.push_back(std::move(block));
  }
  p.final_norm = nn::make_layer_norm(fused);
  p.head = nn::make_linear(fused, kNumBlendshapes, rng);
  p.ppe_period = config.ppe_period;
  return p;
}

Matrix periodic_positional_encoding(Index frames, Index dim, int period) {
  if (frames < 1 || dim < 1 || period < 1) throw ConfigError("positional encoding sizes must be positive");
  if (dim % 2 != 0) throw ConfigError("positional encoding width must be even");
  Matrix pe(frames, dim);
  for (Index t = 0; t < frames; ++t) {
    const auto phase = static_cast<double>(t % period);
    for (Index i = 0; i < dim / 2; ++i) {
      const double arg = phase / std::pow(10000.0, static_cast<double>(2 * i) / static_cast<double>(dim));
      pe(t, 2 * i) = std::sin(arg);
      pe(t, 2 * i + 1) = std::cos(arg);
    }
  }
  return pe;
}

std::vector<double> alibi_slopes(int heads) {
  std::vector<double> slopes;
  for (int h = 1; h <= heads; ++h) slopes.push_back(std::exp2(-8.0 * h / heads));
  return slopes;
}

std::vector<Matrix> alibi_bias(Index frames, int heads) {
  std::vector<Matrix> out;
  for (double slope : alibi_slopes(heads)) {
    Matrix b(frames, frames);
    for (Index i = 0; i < frames; ++i) {
      for (Index j = 0; j < frames; ++j) {
        b(i, j) = j <= i ? slope * static_cast<double>(j - i) : -std::numeric_limits<double>::infinity();
      }
    }
    out.push_back(std::move(b));
  }
  return out;
}

Matrix causal_mask(Index frames) {
  Matrix m = Matrix::Zero(frames, frames);
  for (Index i = 0; i < frames; ++i) {
    for (Index j = i + 1; j < frames; ++j) m(i, j) = -std::numeric_limits<double>::infinity();
  }
  return m;
}

ad::Var fuse(ad::Graph& g, const FusionParams& params, ad::Var emotion, ad::Var content, int style_id, int level_id) {
  if (emotion.rows() != content.rows()) throw AlignmentError("emotion and content features differ in frame count");
  if (emotion.cols() != params.emotion_projection.in_dim() || content.cols() != params.content_projection.in_dim()) {
    throw AlignmentError("feature width does not match the fusion projections");
  }
  if (style_id < 0 || style_id >= params.style_table.value.rows()) throw RangeError("style id out of range");
  if (level_id < 0 || level_id >= params.level_table.value.rows()) throw RangeError("level id out of range");
  const Index frames = emotion.rows();
  const ad::Var parts[] = {
      nn::linear(g, params.emotion_projection, emotion),
      nn::linear(g, params.content_projection, content),
      ad::repeat_row(ad::select_row(g.param(params.style_table), style_id), frames),
      ad::repeat_row(ad::select_row(g.param(params.level_table), level_id), frames),
  };
  return ad::concat_cols(parts);
}

ad::Var decode(ad::Graph& g, const FusionParams& params, ad::Var fused, ad::Var emotion_raw, AttentionTrace* trace) {
  const Index frames = fused.rows();
  if (emotion_raw.rows() != frames) throw AlignmentError("emotion features and fused features differ in frame count");
  if (fused.cols() != params.guidance_projection.out_dim()) throw AlignmentError("fused width mismatch");
  ad::Var x = ad::add_const(fused, periodic_positional_encoding(frames, fused.cols(), params.ppe_period));
  const ad::Var memory = nn::linear(g, params.guidance_projection, emotion_raw);
  const int heads = params.blocks.empty() ? 1 : params.blocks.front().self_attn.heads;
  const std::vector<Matrix> self_bias = alibi_bias(frames, heads);
  const Matrix cross_bias[] = {causal_mask(frames)};
  for (const DecoderBlock& block : params.blocks) {
    const ad::Var h = nn::layer_norm(g, block.self_norm, x);
    x = x + nn::attention(g, block.self_attn, h, h, self_bias, trace ? &trace->self_weights : nullptr);
    x = x + nn::attention(g, block.cross_attn, nn::layer_norm(g, block.cross_norm, x), memory, cross_bias,
                          trace ? &trace->cross_weights : nullptr);
    x = x + nn::feed_forward(g, block.ff, nn::layer_norm(g, block.ff_norm, x));
  }
  return nn::linear(g, params.head, nn::layer_norm(g, params.final_norm, x));
}

FeatureSequence fuse_features(const FusionParams& params, const FeatureSequence& emotion,
                              const FeatureSequence& content, int style_id, int level_id) {
  ad::Graph g(false);
  const ad::Var out = fuse(g, params, g.constant(emotion.values), g.constant(content.values), style_id, level_id);
  return FeatureSequence{out.value(), emotion.fps};
}

Matrix biased_self_attention(const nn::MultiHeadAttention& attn, const Matrix& x, std::vector<Matrix>* weights_out) {
  ad::Graph g(false);
  const ad::Var in = g.constant(x);
  return nn::attention(g, attn, in, in, alibi_bias(x.rows(), attn.heads), weights_out).value();
}

Matrix emotion_guided_attention(const FusionParams& params, std::size_t block, const Matrix& x,
                                const Matrix& emotion_raw, std::vector<Matrix>* weights_out) {
  if (block >= params.blocks.size()) throw RangeError("decoder block index out of range");
  if (x.rows() != emotion_raw.rows()) throw AlignmentError("emotion features and decoder input differ in frame count");
  ad::Graph g(false);
  const DecoderBlock& b = params.blocks[block];
  const ad::Var in = g.constant(x);
  const ad::Var memory = nn::linear(g, params.guidance_projection, g.constant(emotion_raw));
  const Matrix mask[] = {causal_mask(x.rows())};
  return (in + nn::attention(g, b.cross_attn, nn::layer_norm(g, b.cross_norm, in), memory, mask, weights_out))
      .value();
}

BlendshapeSequence decode_blendshapes(const FusionParams& params, const FeatureSequence& fused,
                                      const FeatureSequence& emotion_raw, AttentionTrace* trace) {
  ad::Graph g(false);
  const ad::Var out = decode(g, params, g.constant(fused.values), g.constant(emotion_raw.values), trace);
  BlendshapeSequence seq;
  seq.coeffs = out.value();
  seq.fps = kFps;
  return seq;
}

}  // namespace emotalk
