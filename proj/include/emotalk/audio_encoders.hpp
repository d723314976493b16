#pragma once

// Content and emotion feature extractors. Each is a strided convolutional
// front-end (frozen by default) followed by linear interpolation to the
// target frame count, a feature projection and pre-norm transformer blocks.
// The emotion extractor additionally owns the classification head.

#include <optional>
#include <random>
#include <string>
#include <vector>

#include "emotalk/autodiff.hpp"
#include "emotalk/data_model.hpp"
#include "emotalk/nn.hpp"

namespace emotalk {

struct ConvSpec {
  int channels = 16;
  int kernel = 10;
  int stride = 5;
};

struct EncoderConfig {
  int d_model = 64;
  int n_blocks = 2;
  int n_heads = 4;
  int d_inner = 256;
  bool conv_frontend_frozen = true;
  int n_emotions = 4;
  // Stride product 320: 16 kHz audio becomes 50 feature frames per second.
  std::vector<ConvSpec> frontend = {{16, 10, 5}, {32, 8, 8}, {32, 8, 8}};

  static EncoderConfig desk();
  /// Full-size extractor dimensions (1024-wide, 24 blocks, 16 heads).
  static EncoderConfig full();

  void validate() const;
  int stride_product() const;
};

struct ConvLayer {
  ad::Parameter weight;  // (kernel * in_channels) x out_channels
  ad::Parameter bias;    // 1 x out_channels
  int kernel = 1;
  int stride = 1;
};

struct TransformerBlock {
  nn::LayerNorm attn_norm;
  nn::MultiHeadAttention attn;
  nn::LayerNorm ff_norm;
  nn::FeedForward ff;
};

struct EncoderParams {
  std::vector<ConvLayer> frontend;
  nn::Linear feature_projection;
  std::vector<TransformerBlock> blocks;
  nn::LayerNorm final_norm;
  std::optional<nn::Linear> classifier;  // emotion extractor only
};

EncoderParams init_encoder(const EncoderConfig& config, bool with_classifier, std::mt19937_64& rng);

/// Linear interpolation weights mapping `from` frames onto `to` frames with
/// both end points aligned; `to == 1` samples the midpoint.
Matrix interpolation_matrix(Index from, Index to);

/// Encoder forward pass on a graph. Returns target_frames x d_model.
ad::Var encode(ad::Graph& g, const EncoderParams& params, const AudioClip& clip, Index target_frames);

/// Mean-pool over time, affine map, softmax. Returns 1 x M.
ad::Var classify(ad::Graph& g, const EncoderParams& params, ad::Var features);

FeatureSequence extract_content(const EncoderParams& params, const AudioClip& clip, Index target_frames);
FeatureSequence extract_emotion(const EncoderParams& params, const AudioClip& clip, Index target_frames);
RowVector classify_emotion(const EncoderParams& params, const FeatureSequence& emotion_features);
FeatureSequence interp_time(const FeatureSequence& seq, Index target_frames);

// Front-end arrays come first so that checkpoints list frozen weights together.
template <nn::SameOrConst<EncoderParams> E, class F>
void visit(const std::string& prefix, E& e, F&& f) {
  for (std::size_t i = 0; i < e.frontend.size(); ++i) {
    const std::string p = prefix + ".frontend." + std::to_string(i);
    f(p + ".weight", e.frontend[i].weight);
    f(p + ".bias", e.frontend[i].bias);
  }
  nn::visit(prefix + ".feature_projection", e.feature_projection, f);
  for (std::size_t i = 0; i < e.blocks.size(); ++i) {
    const std::string p = prefix + ".blocks." + std::to_string(i);
    nn::visit(p + ".attn_norm", e.blocks[i].attn_norm, f);
    nn::visit(p + ".attn", e.blocks[i].attn, f);
    nn::visit(p + ".ff_norm", e.blocks[i].ff_norm, f);
    nn::visit(p + ".ff", e.blocks[i].ff, f);
  }
  nn::visit(prefix + ".final_norm", e.final_norm, f);
  if (e.classifier) nn::visit(prefix + ".classifier", *e.classifier, f);
}

}  // namespace emotalk
