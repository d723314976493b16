#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "emotalk/data_model.hpp"
#include "emotalk/losses.hpp"
#include "emotalk/model.hpp"
#include "emotalk/rig_metrics.hpp"

namespace emotalk {

struct TrainConfig {
  double learning_rate = 1e-4;
  int batch_size = 8;
  int epochs = 10;
  /// Optimizer steps per epoch; 0 means one pass over the training clips
  /// (two clips per pair).
  int steps_per_epoch = 0;
  std::uint64_t seed = 1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  LossWeights weights;

  void validate() const;
  long long total_steps(const Dataset& dataset) const;
};

/// Everything needed to resume training bit-exactly.
struct TrainState {
  ModelConfig model_config;
  ModelParams params;
  std::vector<Matrix> adam_m;  // parallel to all_parameters()
  std::vector<Matrix> adam_v;
  long long step = 0;
  std::mt19937_64 rng;
};

TrainState init_train_state(const ModelConfig& model_config, const TrainConfig& train_config);

/// Forward pass of the full objective over `pairs`, averaged per pair. With
/// `backprop` the gradients of the weighted total are added to the
/// parameters' grad buffers.
LossReport batch_loss(const ModelParams& params, std::span<const CrossPair> pairs, const LossWeights& weights,
                      bool backprop);

/// One Adam update from the gradient of the batch objective.
LossReport train_step(TrainState& state, std::span<const CrossPair> pairs, const TrainConfig& config);
LossReport train_step(TrainState& state, const CrossPair& pair, const TrainConfig& config);

using StepCallback = std::function<void(long long step, const LossReport& report)>;

/// Runs optimizer steps until `config.total_steps(dataset)` have been taken,
/// sampling `batch_size` training pairs per step from state.rng.
void fit(TrainState& state, const Dataset& dataset, const TrainConfig& config, const StepCallback& on_step = {});

/// Both extractors on the same clip, decoded with the given level and style.
BlendshapeSequence infer(const ModelParams& params, const AudioClip& clip, int level_id, int style_id,
                         bool clamp_output = false);

struct EvalReport {
  double lve_mm = 0.0;
  double eve_mm = 0.0;
  double lip_avg_mm = 0.0;
  double emotion_accuracy = 0.0;
  /// Mean squared error of cross-combined predictions against their targets.
  double cross_error = 0.0;
  /// Same predictions scored against targets with a wrong emotion.
  double shuffled_emotion_error = 0.0;
  std::size_t clips = 0;
  std::size_t cross_predictions = 0;
};

/// Vertex metrics of `predictions` against the samples' ground truth.
EvalReport score_predictions(std::span<const BlendshapeSequence> predictions, std::span<const Sample* const> samples,
                             const RigTemplateSet& rig);

EvalReport evaluate(const ModelParams& params, const Dataset& dataset, const RigTemplateSet& rig,
                    Split split = Split::kTest);

/// FNV-1a over the raw bytes of every frozen parameter.
std::uint64_t frozen_checksum(const ModelParams& params);

}  // namespace emotalk
