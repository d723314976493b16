#include "emotalk/audio_encoders.hpp"

#include <cmath>

#include "emotalk/error.hpp"

namespace emotalk {

EncoderConfig EncoderConfig::desk() { return EncoderConfig{}; }

EncoderConfig EncoderConfig::full() {
  EncoderConfig c;
  c.d_model = 1024;
  c.n_blocks = 24;
  c.n_heads = 16;
  c.d_inner = 4096;
  c.n_emotions = 8;
  c.frontend = {{512, 10, 5}, {512, 3, 2}, {512, 3, 2}, {512, 3, 2}, {512, 3, 2}, {512, 2, 2}, {512, 2, 2}};
  return c;
}

void EncoderConfig::validate() const {
  if (d_model < 1 || n_blocks < 0 || n_heads < 1 || d_inner < 1) {
    throw ConfigError("encoder dimensions must be positive");
  }
  if (d_model % n_heads != 0) throw ConfigError("encoder d_model must be divisible by n_heads");
  if (n_emotions < 2) throw ConfigError("emotion classifier needs at least two classes");
  if (frontend.empty()) throw ConfigError("encoder front-end needs at least one convolution");
  for (const ConvSpec& c : frontend) {
    if (c.channels < 1 || c.kernel < 1 || c.stride < 1) throw ConfigError("convolution sizes must be positive");
  }
}

int EncoderConfig::stride_product() const {
  int p = 1;
  for (const ConvSpec& c : frontend) p *= c.stride;
  return p;
}

EncoderParams init_encoder(const EncoderConfig& config, bool with_classifier, std::mt19937_64& rng) {
  config.validate();
  EncoderParams p;
  int in_channels = 1;
  for (const ConvSpec& spec : config.frontend) {
    const Index fan_in = static_cast<Index>(spec.kernel) * in_channels;
    // Gain 2 keeps front-end activations O(1) so the GELU stays non-linear.
    ConvLayer layer{ad::Parameter(nn::uniform_fan_in(fan_in, spec.channels, fan_in, 2.0 * std::sqrt(3.0), rng),
                                  config.conv_frontend_frozen),
                    ad::Parameter(Matrix::Zero(1, spec.channels), config.conv_frontend_frozen), spec.kernel,
                    spec.stride};
    p.frontend.push_back(std::move(layer));
    in_channels = spec.channels;
  }
  p.feature_projection = nn::make_linear(in_channels, config.d_model, rng);
  for (int b = 0; b < config.n_blocks; ++b) {
    TransformerBlock block;
    block.attn_norm = nn::make_layer_norm(config.d_model);
    block.attn = nn::make_attention(config.d_model, config.n_heads, rng);
    block.ff_norm = nn::make_layer_norm(config.d_model);
    block.ff = nn::make_feed_forward(config.d_model, config.d_inner, rng);
    p.blocks.push_back(std::move(block));
  }
  p.final_norm = nn::make_layer_norm(config.d_model);
  if (with_classifier) p.classifier = nn::make_linear(config.d_model, config.n_emotions, rng);
  return p;
}

Matrix interpolation_matrix(Index from, Index to) {
  if (from < 1 || to < 1) throw LengthError("interpolation needs at least one source and one target frame");
  Matrix w = Matrix::Zero(to, from);
  for (Index j = 0; j < to; ++j) {
    const double pos = to == 1 ? 0.5 * static_cast<double>(from - 1)
                               : static_cast<double>(j) * static_cast<double>(from - 1) / static_cast<double>(to - 1);
    const auto lo = static_cast<Index>(std::floor(pos));
    const double frac = pos - static_cast<double>(lo);
    if (lo >= from - 1) {
      w(j, from - 1) = 1.0;
    } else {
      w(j, lo) = 1.0 - frac;
      if (frac > 0.0) w(j, lo + 1) = frac;
    }
  }
  return w;
}

ad::Var encode(ad::Graph& g, const EncoderParams& params, const AudioClip& clip, Index target_frames) {
  if (clip.samples.empty()) throw LengthError("cannot encode empty audio");
  if (target_frames < 1) throw LengthError("target frame count must be at least 1");
  Matrix wave = Eigen::Map<const Matrix>(clip.samples.data(), static_cast<Index>(clip.samples.size()), 1);
  ad::Var x = g.constant(std::move(wave));
  for (const ConvLayer& layer : params.frontend) {
    if (x.rows() < layer.kernel) throw LengthError("audio too short for the convolutional front-end");
    x = ad::gelu(ad::conv1d(x, g.param(layer.weight), g.param(layer.bias), layer.kernel, layer.stride));
  }
  x = ad::lmul(interpolation_matrix(x.rows(), target_frames), x);
  x = nn::linear(g, params.feature_projection, x);
  for (const TransformerBlock& block : params.blocks) {
    const ad::Var h = nn::layer_norm(g, block.attn_norm, x);
    x = x + nn::attention(g, block.attn, h, h, {});
    x = x + nn::feed_forward(g, block.ff, nn::layer_norm(g, block.ff_norm, x));
  }
  return nn::layer_norm(g, params.final_norm, x);
}

ad::Var classify(ad::Graph& g, const EncoderParams& params, ad::Var features) {
  if (!params.classifier) throw ConfigError("this encoder has no emotion classification head");
  if (features.rows() < 1) throw LengthError("cannot classify an empty feature sequence");
  const Matrix pool = Matrix::Constant(1, features.rows(), 1.0 / static_cast<double>(features.rows()));
  return ad::softmax_rows(nn::linear(g, *params.classifier, ad::lmul(pool, features)));
}

namespace {

FeatureSequence run_encoder(const EncoderParams& params, const AudioClip& clip, Index target_frames) {
  clip.validate();
  ad::Graph g(false);
  const ad::Var out = encode(g, params, clip, target_frames);
  return FeatureSequence{out.value(), static_cast<double>(target_frames) / clip.duration()};
}

}  // namespace

FeatureSequence extract_content(const EncoderParams& params, const AudioClip& clip, Index target_frames) {
  return run_encoder(params, clip, target_frames);
}

FeatureSequence extract_emotion(const EncoderParams& params, const AudioClip& clip, Index target_frames) {
  return run_encoder(params, clip, target_frames);
}

RowVector classify_emotion(const EncoderParams& params, const FeatureSequence& emotion_features) {
  ad::Graph g(false);
  return classify(g, params, g.constant(emotion_features.values)).value();
}

FeatureSequence interp_time(const FeatureSequence& seq, Index target_frames) {
  if (seq.frames() < 1) throw LengthError("cannot interpolate an empty sequence");
  FeatureSequence out;
  out.values = interpolation_matrix(seq.frames(), target_frames) * seq.values;
  out.fps = seq.fps * static_cast<double>(target_frames) / static_cast<double>(seq.frames());
  return out;
}

}  // namespace emotalk
