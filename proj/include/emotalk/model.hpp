#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "emotalk/audio_encoders.hpp"
#include "emotalk/fusion_decoder.hpp"

namespace emotalk {

struct ModelConfig {
  EncoderConfig encoder = EncoderConfig::desk();
  FusionConfig fusion = FusionConfig::desk();
  std::uint64_t init_seed = 1;

  static ModelConfig desk();
  static ModelConfig full();
  void validate() const;
};

/// Content extractor, emotion extractor (with classification head) and the
/// fusion decoder.
struct ModelParams {
  EncoderParams content_encoder;
  EncoderParams emotion_encoder;
  FusionParams fusion;
};

ModelParams init_model(const ModelConfig& config);

template <nn::SameOrConst<ModelParams> M, class F>
void visit(M& m, F&& f) {
  visit("content_encoder", m.content_encoder, f);
  visit("emotion_encoder", m.emotion_encoder, f);
  visit("fusion", m.fusion, f);
}

/// Every parameter array in enumeration order.
std::vector<std::pair<std::string, ad::Parameter*>> all_parameters(ModelParams& params);
/// Non-frozen arrays only.
std::vector<std::pair<std::string, ad::Parameter*>> trainable_parameters(ModelParams& params);

void zero_grad(const ModelParams& params);

}  // namespace emotalk
