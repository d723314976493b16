#pragma once

// JSON (de)serialization of every configuration struct, and the run
// configuration read by the command-line tool. Missing keys keep their
// defaults; unknown keys are rejected.

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "emotalk/model.hpp"
#include "emotalk/training.hpp"

namespace emotalk {

struct RigSpec {
  /// Directory written by gen-data or supplied by the user; empty means
  /// generate a synthetic rig in memory.
  std::string directory;
  int vertices = 400;
  std::uint64_t seed = 3;
};

struct RunConfig {
  DatasetSpec dataset;
  ModelConfig model = default_model();
  TrainConfig train;
  RigSpec rig;
  std::string output_dir = "emotalk-run";

  /// Desk model with one classifier output per default-grid emotion.
  static ModelConfig default_model();
  /// Sets every seed from a single value.
  void reseed(std::uint64_t seed);
  /// Dimension checks of the member configs, plus dataset/model agreement.
  void validate() const;
};

void to_json(nlohmann::json& j, const ConvSpec& c);
void from_json(const nlohmann::json& j, ConvSpec& c);
void to_json(nlohmann::json& j, const EncoderConfig& c);
void from_json(const nlohmann::json& j, EncoderConfig& c);
void to_json(nlohmann::json& j, const FusionConfig& c);
void from_json(const nlohmann::json& j, FusionConfig& c);
void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);
void to_json(nlohmann::json& j, const LossWeights& w);
void from_json(const nlohmann::json& j, LossWeights& w);
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);
void to_json(nlohmann::json& j, const FactorGrid& g);
void from_json(const nlohmann::json& j, FactorGrid& g);
void to_json(nlohmann::json& j, const DatasetSpec& s);
void from_json(const nlohmann::json& j, DatasetSpec& s);
void to_json(nlohmann::json& j, const RigSpec& s);
void from_json(const nlohmann::json& j, RigSpec& s);
void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);

/// Throws IoError if unreadable, ConfigError on bad content.
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace emotalk
