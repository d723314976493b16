#include "emotalk/config.hpp"

#include <fstream>
#include <initializer_list>
#include <string_view>

#include "emotalk/error.hpp"

namespace emotalk {

namespace {

using nlohmann::json;

void check_keys(const json& j, std::string_view what, std::initializer_list<std::string_view> keys) {
  if (!j.is_object()) throw ConfigError(std::string(what) + " must be a JSON object");
  for (const auto& item : j.items()) {
    bool known = false;
    for (std::string_view k : keys) known = known || item.key() == k;
    if (!known) throw ConfigError("unknown key '" + item.key() + "' in " + std::string(what));
  }
}

template <class T>
void read(const json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end()) {
    try {
      out = it->get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
    }
  }
}

Trajectory parse_trajectory(const std::string& s) {
  if (s == "sinusoid") return Trajectory::kSinusoid;
  if (s == "quadratic") return Trajectory::kQuadratic;
  throw ConfigError("unknown trajectory '" + s + "'");
}

}  // namespace

ModelConfig RunConfig::default_model() {
  ModelConfig m = ModelConfig::desk();
  m.encoder.n_emotions = FactorGrid{}.emotions;
  return m;
}

void RunConfig::reseed(std::uint64_t seed) {
  dataset.seed = seed;
  model.init_seed = seed;
  train.seed = seed;
  rig.seed = seed;
}

void RunConfig::validate() const {
  model.validate();
  train.validate();
  if (dataset.grid.contents < 1 || dataset.grid.emotions < 1 || dataset.grid.levels < 1 || dataset.grid.speakers < 1) {
    throw ConfigError("dataset grid sizes must be positive");
  }
  if (dataset.takes < 1 || dataset.test_takes < 0 || dataset.test_takes >= dataset.takes) {
    throw ConfigError("need 1 <= takes and 0 <= test_takes < takes");
  }
  if (!(dataset.duration_s > 0.0)) throw ConfigError("clip duration must be positive");
  if (dataset.grid.emotions > model.encoder.n_emotions) {
    throw ConfigError("dataset has more emotions than the classifier has outputs");
  }
  if (dataset.grid.speakers > model.fusion.n_styles) throw ConfigError("dataset has more speakers than style rows");
  if (dataset.grid.levels > model.fusion.n_levels) throw ConfigError("dataset has more levels than level rows");
  if (rig.directory.empty() && rig.vertices < 25) throw ConfigError("synthetic rig needs at least 25 vertices");
  if (output_dir.empty()) throw ConfigError("output directory must be set");
}

void to_json(json& j, const ConvSpec& c) { j = json{{"channels", c.channels}, {"kernel", c.kernel}, {"stride", c.stride}}; }

void from_json(const json& j, ConvSpec& c) {
  check_keys(j, "conv layer", {"channels", "kernel", "stride"});
  read(j, "channels", c.channels);
  read(j, "kernel", c.kernel);
  read(j, "stride", c.stride);
}

void to_json(json& j, const EncoderConfig& c) {
  j = json{{"d_model", c.d_model},
           {"n_blocks", c.n_blocks},
           {"n_heads", c.n_heads},
           {"d_inner", c.d_inner},
           {"conv_frontend_frozen", c.conv_frontend_frozen},
           {"n_emotions", c.n_emotions},
           {"frontend", c.frontend}};
}

void from_json(const json& j, EncoderConfig& c) {
  check_keys(j, "encoder", {"d_model", "n_blocks", "n_heads", "d_inner", "conv_frontend_frozen", "n_emotions", "frontend"});
  read(j, "d_model", c.d_model);
  read(j, "n_blocks", c.n_blocks);
  read(j, "n_heads", c.n_heads);
  read(j, "d_inner", c.d_inner);
  read(j, "conv_frontend_frozen", c.conv_frontend_frozen);
  read(j, "n_emotions", c.n_emotions);
  read(j, "frontend", c.frontend);
}

void to_json(json& j, const FusionConfig& c) {
  j = json{{"d_emotion", c.d_emotion}, {"d_content", c.d_content}, {"d_style", c.d_style},
           {"d_level", c.d_level},     {"n_heads", c.n_heads},     {"ppe_period", c.ppe_period},
           {"n_styles", c.n_styles},   {"n_levels", c.n_levels},   {"n_decoder_blocks", c.n_decoder_blocks},
           {"d_ff", c.d_ff}};
}

void from_json(const json& j, FusionConfig& c) {
  check_keys(j, "fusion", {"d_emotion", "d_content", "d_style", "d_level", "n_heads", "ppe_period", "n_styles",
                           "n_levels", "n_decoder_blocks", "d_ff"});
  read(j, "d_emotion", c.d_emotion);
  read(j, "d_content", c.d_content);
  read(j, "d_style", c.d_style);
  read(j, "d_level", c.d_level);
  read(j, "n_heads", c.n_heads);
  read(j, "ppe_period", c.ppe_period);
  read(j, "n_styles", c.n_styles);
  read(j, "n_levels", c.n_levels);
  read(j, "n_decoder_blocks", c.n_decoder_blocks);
  read(j, "d_ff", c.d_ff);
}

void to_json(json& j, const ModelConfig& c) {
  j = json{{"encoder", c.encoder}, {"fusion", c.fusion}, {"init_seed", c.init_seed}};
}

void from_json(const json& j, ModelConfig& c) {
  check_keys(j, "model", {"encoder", "fusion", "init_seed"});
  read(j, "encoder", c.encoder);
  read(j, "fusion", c.fusion);
  read(j, "init_seed", c.init_seed);
}

void to_json(json& j, const LossWeights& w) {
  j = json{{"cross", w.cross}, {"self", w.self_rec}, {"velocity", w.velocity}, {"classification", w.classification}};
}

void from_json(const json& j, LossWeights& w) {
  check_keys(j, "loss weights", {"cross", "self", "velocity", "classification"});
  read(j, "cross", w.cross);
  read(j, "self", w.self_rec);
  read(j, "velocity", w.velocity);
  read(j, "classification", w.classification);
}

void to_json(json& j, const TrainConfig& c) {
  j = json{{"learning_rate", c.learning_rate},
           {"batch_size", c.batch_size},
           {"epochs", c.epochs},
           {"steps_per_epoch", c.steps_per_epoch},
           {"seed", c.seed},
           {"beta1", c.beta1},
           {"beta2", c.beta2},
           {"epsilon", c.epsilon},
           {"weights", c.weights}};
}

void from_json(const json& j, TrainConfig& c) {
  check_keys(j, "train",
             {"learning_rate", "batch_size", "epochs", "steps_per_epoch", "seed", "beta1", "beta2", "epsilon", "weights"});
  read(j, "learning_rate", c.learning_rate);
  read(j, "batch_size", c.batch_size);
  read(j, "epochs", c.epochs);
  read(j, "steps_per_epoch", c.steps_per_epoch);
  read(j, "seed", c.seed);
  read(j, "beta1", c.beta1);
  read(j, "beta2", c.beta2);
  read(j, "epsilon", c.epsilon);
  read(j, "weights", c.weights);
}

void to_json(json& j, const FactorGrid& g) {
  j = json{{"contents", g.contents}, {"emotions", g.emotions}, {"levels", g.levels}, {"speakers", g.speakers}};
}

void from_json(const json& j, FactorGrid& g) {
  check_keys(j, "grid", {"contents", "emotions", "levels", "speakers"});
  read(j, "contents", g.contents);
  read(j, "emotions", g.emotions);
  read(j, "levels", g.levels);
  read(j, "speakers", g.speakers);
}

void to_json(json& j, const DatasetSpec& s) {
  j = json{{"grid", s.grid},
           {"takes", s.takes},
           {"test_takes", s.test_takes},
           {"duration_s", s.duration_s},
           {"seed", s.seed},
           {"smooth", s.smooth},
           {"trajectory", s.trajectory == Trajectory::kQuadratic ? "quadratic" : "sinusoid"}};
}

void from_json(const json& j, DatasetSpec& s) {
  check_keys(j, "dataset", {"grid", "takes", "test_takes", "duration_s", "seed", "smooth", "trajectory"});
  read(j, "grid", s.grid);
  read(j, "takes", s.takes);
  read(j, "test_takes", s.test_takes);
  read(j, "duration_s", s.duration_s);
  read(j, "seed", s.seed);
  read(j, "smooth", s.smooth);
  std::string trajectory;
  read(j, "trajectory", trajectory);
  if (!trajectory.empty()) s.trajectory = parse_trajectory(trajectory);
}

void to_json(json& j, const RigSpec& s) {
  j = json{{"directory", s.directory}, {"vertices", s.vertices}, {"seed", s.seed}};
}

void from_json(const json& j, RigSpec& s) {
  check_keys(j, "rig", {"directory", "vertices", "seed"});
  read(j, "directory", s.directory);
  read(j, "vertices", s.vertices);
  read(j, "seed", s.seed);
}

void to_json(json& j, const RunConfig& c) {
  j = json{{"dataset", c.dataset}, {"model", c.model}, {"train", c.train}, {"rig", c.rig}, {"output_dir", c.output_dir}};
}

void from_json(const json& j, RunConfig& c) {
  check_keys(j, "config", {"dataset", "model", "train", "rig", "output_dir"});
  read(j, "dataset", c.dataset);
  read(j, "model", c.model);
  read(j, "train", c.train);
  read(j, "rig", c.rig);
  read(j, "output_dir", c.output_dir);
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  RunConfig c = j.get<RunConfig>();
  return c;
}

}  // namespace emotalk
