#include "emotalk/model.hpp"

#include <random>

#include "emotalk/error.hpp"

namespace emotalk {

ModelConfig ModelConfig::desk() { return ModelConfig{}; }

ModelConfig ModelConfig::full() {
  ModelConfig c;
  c.encoder = EncoderConfig::full();
  c.fusion = FusionConfig::full();
  return c;
}

void ModelConfig::validate() const {
  encoder.validate();
  fusion.validate();
}

ModelParams init_model(const ModelConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.init_seed);
  ModelParams m;
  m.content_encoder = init_encoder(config.encoder, false, rng);
  m.emotion_encoder = init_encoder(config.encoder, true, rng);
  m.fusion = init_fusion(config.fusion, config.encoder.d_model, rng);
  return m;
}

std::vector<std::pair<std::string, ad::Parameter*>> all_parameters(ModelParams& params) {
  std::vector<std::pair<std::string, ad::Parameter*>> out;
  visit(params, [&](const std::string& name, ad::Parameter& p) { out.emplace_back(name, &p); });
  return out;
}

std::vector<std::pair<std::string, ad::Parameter*>> trainable_parameters(ModelParams& params) {
  std::vector<std::pair<std::string, ad::Parameter*>> out;
  visit(params, [&](const std::string& name, ad::Parameter& p) {
    if (!p.frozen) out.emplace_back(name, &p);
  });
  return out;
}

void zero_grad(const ModelParams& params) {
  visit(params, [](const std::string&, const ad::Parameter& p) { p.zero_grad(); });
}

}  // namespace emotalk
