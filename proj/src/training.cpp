#include "emotalk/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <sstream>
#include <tuple>

#include "emotalk/error.hpp"

namespace emotalk {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning rate must be positive");
  if (batch_size < 1) throw ConfigError("batch size must be at least 1");
  if (epochs < 0 || steps_per_epoch < 0) throw ConfigError("epochs and steps per epoch must be non-negative");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(epsilon > 0.0)) {
    throw ConfigError("invalid Adam coefficients");
  }
  weights.validate();
}

long long TrainConfig::total_steps(const Dataset& dataset) const {
  long long per_epoch = steps_per_epoch;
  if (per_epoch == 0) {
    per_epoch = std::max<long long>(1, static_cast<long long>(dataset.count(Split::kTrain)) / (2LL * batch_size));
  }
  return per_epoch * epochs;
}

TrainState init_train_state(const ModelConfig& model_config, const TrainConfig& train_config) {
  train_config.validate();
  TrainState s;
  s.model_config = model_config;
  s.params = init_model(model_config);
  for (const auto& [name, p] : all_parameters(s.params)) {
    s.adam_m.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    s.adam_v.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
  }
  s.rng.seed(train_config.seed);
  return s;
}

namespace {

// Encoder outputs of one pair, computed once per (clip, extractor, length).
class PairFeatures {
 public:
  PairFeatures(ad::Graph& g, const ModelParams& params, const CrossPair& pair) : g_(g), params_(params), pair_(pair) {}

  ad::Var content(int clip, Index frames) { return get(clip, false, frames); }
  ad::Var emotion(int clip, Index frames) { return get(clip, true, frames); }

 private:
  ad::Var get(int clip, bool emotion, Index frames) {
    const auto key = std::make_tuple(clip, emotion, frames);
    if (auto it = cache_.find(key); it != cache_.end()) return it->second;
    const AudioClip& audio = clip == 0 ? pair_.audio_a : pair_.audio_b;
    const EncoderParams& enc = emotion ? params_.emotion_encoder : params_.content_encoder;
    const ad::Var v = encode(g_, enc, audio, frames);
    cache_.emplace(key, v);
    return v;
  }

  ad::Graph& g_;
  const ModelParams& params_;
  const CrossPair& pair_;
  std::map<std::tuple<int, bool, Index>, ad::Var> cache_;
};

ad::Var predict(ad::Graph& g, const ModelParams& params, ad::Var content, ad::Var emotion, int style, int level) {
  return decode(g, params.fusion, fuse(g, params.fusion, emotion, content, style, level), emotion);
}

ad::Var velocity_or_zero(ad::Graph& g, ad::Var pred, const Matrix& target) {
  if (target.rows() < 2) return g.constant(Matrix::Zero(1, 1));
  return velocity_error(pred, target);
}

}  // namespace

LossReport batch_loss(const ModelParams& params, std::span<const CrossPair> pairs, const LossWeights& weights,
                      bool backprop) {
  if (pairs.empty()) throw LengthError("a batch needs at least one cross pair");
  weights.validate();
  ad::Graph g(backprop);
  ad::Var cross = g.constant(Matrix::Zero(1, 1));
  ad::Var self_rec = cross, velocity = cross, classification = cross;
  constexpr int kClipA = 0, kClipB = 1;

  for (const CrossPair& pair : pairs) {
    pair.validate();
    PairFeatures feats(g, params, pair);
    const int style = pair.audio_a.speaker_id;
    const int level = pair.audio_a.level;
    const Index t11 = pair.gt_c1e1.frames(), t22 = pair.gt_c2e2.frames(), t12 = pair.gt_c1e2.frames();

    // c1 from A with e1 from B, c2 from B with e2 from A, and A with itself.
    const ad::Var p11 = predict(g, params, feats.content(kClipA, t11), feats.emotion(kClipB, t11), style, level);
    const ad::Var p22 = predict(g, params, feats.content(kClipB, t22), feats.emotion(kClipA, t22), style, level);
    const ad::Var p12 = predict(g, params, feats.content(kClipA, t12), feats.emotion(kClipA, t12), style, level);

    cross = cross + mean_square_error(p11, pair.gt_c1e1.coeffs) + mean_square_error(p22, pair.gt_c2e2.coeffs);
    self_rec = self_rec + mean_square_error(p12, pair.gt_c1e2.coeffs);
    velocity = velocity + velocity_or_zero(g, p11, pair.gt_c1e1.coeffs) +
               velocity_or_zero(g, p22, pair.gt_c2e2.coeffs) + velocity_or_zero(g, p12, pair.gt_c1e2.coeffs);

    const ad::Var prob_a = classify(g, params.emotion_encoder, feats.emotion(kClipA, t22));
    const ad::Var prob_b = classify(g, params.emotion_encoder, feats.emotion(kClipB, t11));
    classification = classification + ad::scale(negative_log_likelihood(prob_a, pair.audio_a.emotion_id) +
                                                    negative_log_likelihood(prob_b, pair.audio_b.emotion_id),
                                                0.5);
  }

  const double inv = 1.0 / static_cast<double>(pairs.size());
  cross = ad::scale(cross, inv);
  self_rec = ad::scale(self_rec, inv);
  velocity = ad::scale(velocity, inv);
  classification = ad::scale(classification, inv);

  const LossReport report = total_loss(
      LossComponents{cross.scalar(), self_rec.scalar(), velocity.scalar(), classification.scalar()}, weights);
  if (backprop) {
    const ad::Var total = ad::scale(cross, weights.cross) + ad::scale(self_rec, weights.self_rec) +
                          ad::scale(velocity, weights.velocity) + ad::scale(classification, weights.classification);
    g.backward(total);
  }
  return report;
}

LossReport train_step(TrainState& state, std::span<const CrossPair> pairs, const TrainConfig& config) {
  zero_grad(state.params);
  const LossReport report = batch_loss(state.params, pairs, config.weights, true);

  const long long t = state.step + 1;
  const double correction1 = 1.0 - std::pow(config.beta1, static_cast<double>(t));
  const double correction2 = 1.0 - std::pow(config.beta2, static_cast<double>(t));
  const auto params = all_parameters(state.params);
  for (std::size_t i = 0; i < params.size(); ++i) {
    ad::Parameter& p = *params[i].second;
    if (p.frozen) continue;
    Matrix& m = state.adam_m[i];
    Matrix& v = state.adam_v[i];
    m = config.beta1 * m + (1.0 - config.beta1) * p.grad;
    v = config.beta2 * v + (1.0 - config.beta2) * p.grad.cwiseAbs2();
    p.value.array() -= config.learning_rate * (m.array() / correction1) /
                       ((v.array() / correction2).sqrt() + config.epsilon);
  }
  state.step = t;
  return report;
}

LossReport train_step(TrainState& state, const CrossPair& pair, const TrainConfig& config) {
  return train_step(state, std::span<const CrossPair>(&pair, 1), config);
}

void fit(TrainState& state, const Dataset& dataset, const TrainConfig& config, const StepCallback& on_step) {
  config.validate();
  const long long total = config.total_steps(dataset);
  std::vector<CrossPair> batch;
  while (state.step < total) {
    batch.clear();
    for (int i = 0; i < config.batch_size; ++i) batch.push_back(sample_cross_pair(dataset, state.rng, Split::kTrain));
    const LossReport report = train_step(state, batch, config);
    if (on_step) on_step(state.step, report);
  }
}

BlendshapeSequence infer(const ModelParams& params, const AudioClip& clip, int level_id, int style_id,
                         bool clamp_output) {
  clip.validate();
  const Index frames = frames_for_audio(static_cast<std::int64_t>(clip.samples.size()), clip.sample_rate);
  ad::Graph g(false);
  const ad::Var content = encode(g, params.content_encoder, clip, frames);
  const ad::Var emotion = encode(g, params.emotion_encoder, clip, frames);
  BlendshapeSequence out;
  out.coeffs = predict(g, params, content, emotion, style_id, level_id).value();
  out.fps = kFps;
  out.tag = FactorTag{clip.content_id, clip.emotion_id, level_id, style_id};
  if (clamp_output) out.coeffs = out.coeffs.cwiseMax(0.0).cwiseMin(1.0);
  return out;
}

EvalReport score_predictions(std::span<const BlendshapeSequence> predictions, std::span<const Sample* const> samples,
                             const RigTemplateSet& rig) {
  if (samples.empty()) throw LengthError("evaluation split is empty");
  if (predictions.size() != samples.size()) throw AlignmentError("one prediction per sample is required");
  const std::vector<int> lip = rig.lip_vertices;
  const std::vector<int> eye = rig.eye_forehead_vertices;
  EvalReport r;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const VertexSequence pred = blend_sequence(rig, predictions[i]);
    const VertexSequence gt = blend_sequence(rig, samples[i]->truth);
    r.lve_mm += lve(pred, gt, lip);
    r.eve_mm += eve(pred, gt, eye);
    r.lip_avg_mm += lip_avg_error(pred, gt, lip);
  }
  const double n = static_cast<double>(samples.size());
  r.lve_mm /= n;
  r.eve_mm /= n;
  r.lip_avg_mm /= n;
  r.clips = samples.size();
  return r;
}

EvalReport evaluate(const ModelParams& params, const Dataset& dataset, const RigTemplateSet& rig, Split split) {
  std::vector<std::size_t> indices;
  for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
    if (dataset.samples[i].split == split) indices.push_back(i);
  }
  if (indices.empty()) throw LengthError("evaluation split is empty");

  // Features per (sample, frame count); inference graphs hold no gradients.
  std::map<std::pair<std::size_t, Index>, std::pair<Matrix, Matrix>> features;
  const auto features_of = [&](std::size_t idx, Index frames) -> const std::pair<Matrix, Matrix>& {
    const auto key = std::make_pair(idx, frames);
    if (auto it = features.find(key); it != features.end()) return it->second;
    const AudioClip& clip = dataset.samples[idx].audio;
    return features
        .emplace(key, std::make_pair(extract_content(params.content_encoder, clip, frames).values,
                                     extract_emotion(params.emotion_encoder, clip, frames).values))
        .first->second;
  };
  const auto decode_pair = [&](const Matrix& content, const Matrix& emotion, int style, int level) {
    ad::Graph g(false);
    const ad::Var e = g.constant(emotion);
    return predict(g, params, g.constant(content), e, style, level).value();
  };

  std::vector<BlendshapeSequence> predictions;
  std::vector<const Sample*> samples;
  std::size_t correct = 0;
  for (std::size_t idx : indices) {
    const Sample& s = dataset.samples[idx];
    const auto& [content, emotion] = features_of(idx, s.truth.frames());
    BlendshapeSequence pred;
    pred.coeffs = decode_pair(content, emotion, s.audio.speaker_id, s.audio.level);
    predictions.push_back(std::move(pred));
    samples.push_back(&s);
    const RowVector probs = classify_emotion(params.emotion_encoder, FeatureSequence{emotion, kFps});
    Index best = 0;
    probs.maxCoeff(&best);
    if (best == s.audio.emotion_id) ++correct;
  }
  EvalReport report = score_predictions(predictions, samples, rig);
  report.emotion_accuracy = static_cast<double>(correct) / static_cast<double>(indices.size());

  // Cross-combination probe: content of (c1, e2) with emotion of (c2, e1),
  // scored against (c1, e1) and against (c1, e') for every e' != e1.
  double cross_sum = 0.0, shuffled_sum = 0.0;
  std::size_t count = 0;
  for (std::size_t ia : indices) {
    const Sample& a = dataset.samples[ia];
    for (std::size_t ib : indices) {
      const Sample& b = dataset.samples[ib];
      if (a.audio.speaker_id != b.audio.speaker_id || a.audio.level != b.audio.level || a.take != b.take ||
          a.audio.content_id == b.audio.content_id || a.audio.emotion_id == b.audio.emotion_id) {
        continue;
      }
      const int c1 = a.audio.content_id, e1 = b.audio.emotion_id;
      const auto target = dataset.find(c1, e1, a.audio.level, a.audio.speaker_id, a.take);
      if (!target) continue;
      const Sample& gt = dataset.samples[*target];
      const Index frames = gt.truth.frames();
      const Matrix pred = decode_pair(features_of(ia, frames).first, features_of(ib, frames).second,
                                      a.audio.speaker_id, a.audio.level);
      double wrong = 0.0;
      int wrong_count = 0;
      for (int e = 0; e < dataset.grid.emotions; ++e) {
        if (e == e1) continue;
        const auto other = dataset.find(c1, e, a.audio.level, a.audio.speaker_id, a.take);
        if (!other || dataset.samples[*other].truth.frames() != frames) continue;
        wrong += (pred - dataset.samples[*other].truth.coeffs).squaredNorm() / static_cast<double>(pred.size());
        ++wrong_count;
      }
      if (wrong_count == 0) continue;
      cross_sum += (pred - gt.truth.coeffs).squaredNorm() / static_cast<double>(pred.size());
      shuffled_sum += wrong / wrong_count;
      ++count;
    }
  }
  if (count > 0) {
    report.cross_error = cross_sum / static_cast<double>(count);
    report.shuffled_emotion_error = shuffled_sum / static_cast<double>(count);
  }
  report.cross_predictions = count;
  return report;
}

std::uint64_t frozen_checksum(const ModelParams& params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  visit(params, [&](const std::string&, const ad::Parameter& p) {
    if (!p.frozen) return;
    const auto* bytes = reinterpret_cast<const unsigned char*>(p.value.data());
    for (std::size_t i = 0; i < static_cast<std::size_t>(p.value.size()) * sizeof(double); ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  });
  return h;
}

}  // namespace emotalk
