// emotalk: synthetic data generation, training, inference, evaluation,
// rig conversion and plotting.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "emotalk/checkpoint.hpp"
#include "emotalk/config.hpp"
#include "emotalk/error.hpp"
#include "emotalk/io.hpp"
#include "emotalk/plot.hpp"
#include "emotalk/training.hpp"

namespace fs = std::filesystem;
using namespace emotalk;

namespace {

fs::path output_root() {
  const char* env = std::getenv("EMOTALK_OUTPUT_ROOT");
  return env && *env ? fs::path(env) : fs::current_path();
}

// Options shared by commands that read a run configuration.
struct ConfigOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;

  void attach(CLI::App* app) {
    app->add_option("--config", config_path, "JSON run configuration; flags override it")->check(CLI::ExistingFile);
    app->add_option("--seed", seed, "Seed for every random choice");
  }

  RunConfig load() const {
    RunConfig c = config_path.empty() ? RunConfig{} : load_run_config(config_path);
    if (seed) c.reseed(*seed);
    return c;
  }
};

fs::path resolve_out(const std::string& flag, const std::string& fallback) {
  const fs::path p = flag.empty() ? fs::path(fallback) : fs::path(flag);
  return p.is_absolute() ? p : output_root() / p;
}

void write_json(const fs::path& path, const nlohmann::ordered_json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

nlohmann::ordered_json report_json(const EvalReport& r) {
  return {{"lve_mm", r.lve_mm},
          {"eve_mm", r.eve_mm},
          {"lip_avg_mm", r.lip_avg_mm},
          {"emotion_accuracy", r.emotion_accuracy},
          {"cross_error", r.cross_error},
          {"shuffled_emotion_error", r.shuffled_emotion_error},
          {"clips", r.clips},
          {"cross_predictions", r.cross_predictions}};
}

RigTemplateSet load_rig(const std::string& dir, const RigSpec& spec, const std::string& lip_mask,
                        const std::string& eye_mask) {
  RigTemplateSet rig;
  if (!dir.empty()) {
    rig = io::read_rig(dir);
  } else if (!spec.directory.empty()) {
    rig = io::read_rig(spec.directory);
  } else {
    rig = make_synthetic_rig(spec.vertices, spec.seed);
  }
  if (!lip_mask.empty()) rig.lip_vertices = io::read_mask(lip_mask);
  if (!eye_mask.empty()) rig.eye_forehead_vertices = io::read_mask(eye_mask);
  rig.validate();
  return rig;
}

// Keeps the records with step <= last_step so a resumed run continues the
// same log.
void truncate_log(const fs::path& path, long long last_step) {
  std::ifstream in(path);
  if (!in) return;
  std::ostringstream kept;
  for (std::string line; std::getline(in, line);) {
    if (line.empty()) continue;
    if (nlohmann::json::parse(line).at("step").get<long long>() <= last_step) kept << line << '\n';
  }
  in.close();
  std::ofstream out(path, std::ios::trunc);
  out << kept.str();
}

int cmd_gen_data(const ConfigOptions& opts, const std::string& out_flag, const std::optional<int> (&grid)[4],
                 std::optional<int> takes, std::optional<int> test_takes, std::optional<double> duration, bool smooth,
                 const std::string& trajectory, std::optional<int> rig_vertices) {
  RunConfig c = opts.load();
  DatasetSpec& spec = c.dataset;
  if (grid[0]) spec.grid.contents = *grid[0];
  if (grid[1]) spec.grid.emotions = *grid[1];
  if (grid[2]) spec.grid.levels = *grid[2];
  if (grid[3]) spec.grid.speakers = *grid[3];
  if (takes) spec.takes = *takes;
  if (test_takes) spec.test_takes = *test_takes;
  if (duration) spec.duration_s = *duration;
  if (smooth) spec.smooth = true;
  if (!trajectory.empty()) spec.trajectory = trajectory == "quadratic" ? Trajectory::kQuadratic : Trajectory::kSinusoid;
  if (rig_vertices) c.rig.vertices = *rig_vertices;
  c.validate();

  const fs::path out = resolve_out(out_flag, c.output_dir + "/data");
  const Dataset ds = generate_dataset(spec);
  const fs::path manifest = io::write_dataset(out, ds, spec);
  io::write_rig(out / "rig", make_synthetic_rig(c.rig.vertices, c.rig.seed));
  std::cout << "wrote " << ds.samples.size() << " clips to " << out.string() << " (manifest "
            << io::file_fnv1a_hex(manifest) << ")\n";
  return 0;
}

struct TrainFlags {
  std::string data, rig, out, resume;
  std::optional<double> lr;
  std::optional<int> batch, epochs, steps_per_epoch;
  long long save_every = 0;
};

int cmd_train(const ConfigOptions& opts, const TrainFlags& f) {
  RunConfig c = opts.load();
  if (f.lr) c.train.learning_rate = *f.lr;
  if (f.batch) c.train.batch_size = *f.batch;
  if (f.epochs) c.train.epochs = *f.epochs;
  if (f.steps_per_epoch) c.train.steps_per_epoch = *f.steps_per_epoch;

  const Dataset ds = io::read_dataset(f.data);
  c.dataset.grid = ds.grid;
  c.validate();
  const RigTemplateSet rig = load_rig(f.rig, c.rig, "", "");
  const fs::path out = resolve_out(f.out, c.output_dir);
  fs::create_directories(out);

  TrainState state;
  if (!f.resume.empty()) {
    state = load_train_state(f.resume);
    truncate_log(out / "metrics.jsonl", state.step);
  } else {
    state = init_train_state(c.model, c.train);
    std::ofstream(out / "metrics.jsonl", std::ios::trunc);
  }
  write_json(out / "config.json", nlohmann::ordered_json(nlohmann::json(c)));

  std::ofstream log(out / "metrics.jsonl", std::ios::app);
  if (!log) throw IoError("cannot write " + (out / "metrics.jsonl").string());
  const long long total = c.train.total_steps(ds);
  fit(state, ds, c.train, [&](long long step, const LossReport& r) {
    log << to_json_line(r, step) << '\n';
    log.flush();
    if (f.save_every > 0 && step % f.save_every == 0 && step < total) {
      save_checkpoint(out / ("checkpoint_step" + std::to_string(step) + ".bin"), state);
    }
  });
  save_checkpoint(out / "checkpoint.bin", state);

  nlohmann::ordered_json report = report_json(evaluate(state.params, ds, rig, Split::kTest));
  report["step"] = state.step;
  write_json(out / "eval.json", report);
  std::cout << "trained " << state.step << " steps; " << report.dump() << '\n';
  return 0;
}

int cmd_infer(const std::string& checkpoint, const std::string& wav, int level, int style, const std::string& out,
              const std::string& rig_dir, bool clamp) {
  const LoadedModel m = load_model(checkpoint);
  AudioClip clip = io::read_wav(wav);
  const BlendshapeSequence seq = infer(m.params, clip, level, style, clamp);
  const fs::path out_path = resolve_out(out, "prediction.csv");
  io::write_csv(out_path, seq);
  if (!rig_dir.empty()) {
    const RigTemplateSet rig = io::read_rig(rig_dir);
    const VertexSequence frames = blend_sequence(rig, seq);
    const fs::path obj_dir = out_path.parent_path() / (out_path.stem().string() + "_obj");
    for (Index t = 0; t < frames.frame_count(); ++t) {
      std::ostringstream name;
      name << "frame_" << std::setw(5) << std::setfill('0') << t << ".obj";
      io::write_obj(obj_dir / name.str(), frames.frames[t], rig.faces);
    }
  }
  std::cout << "wrote " << seq.frames() << " frames to " << out_path.string() << '\n';
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& data, const std::string& rig_dir,
             const std::string& lip_mask, const std::string& eye_mask, const std::string& split, const std::string& out) {
  const LoadedModel m = load_model(checkpoint);
  const Dataset ds = io::read_dataset(data);
  const RigTemplateSet rig = load_rig(rig_dir, RigSpec{}, lip_mask, eye_mask);
  nlohmann::ordered_json report = report_json(evaluate(m.params, ds, rig, parse_split(split)));
  report["step"] = m.step;
  if (!out.empty()) write_json(resolve_out(out, ""), report);
  std::cout << report.dump(2) << '\n';
  return 0;
}

int cmd_convert(const std::string& csv, const std::string& rig_dir, const std::string& mode, const std::string& out) {
  const BlendshapeSequence seq = io::read_csv(csv);
  const RigTemplateSet rig = io::read_rig(rig_dir);
  const VertexSequence frames = blend_sequence(rig, seq, mode == "literal" ? BlendMode::kLiteral : BlendMode::kDelta);
  const fs::path dir = resolve_out(out, "meshes");
  for (Index t = 0; t < frames.frame_count(); ++t) {
    std::ostringstream name;
    name << "frame_" << std::setw(5) << std::setfill('0') << t << ".obj";
    io::write_obj(dir / name.str(), frames.frames[t], rig.faces);
  }
  std::cout << "wrote " << frames.frame_count() << " meshes to " << dir.string() << '\n';
  return 0;
}

int cmd_plot(const std::string& csv, const std::string& log, const std::string& out) {
  const fs::path dir = resolve_out(out, "plots");
  if (!csv.empty()) {
    for (const auto& p : plot::plot_coefficients(io::read_csv(csv), dir, fs::path(csv).stem().string())) {
      std::cout << p.string() << '\n';
    }
  }
  if (!log.empty()) std::cout << plot::plot_losses(log, dir, fs::path(log).stem().string()).string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Speech-driven emotional facial animation: data, training, inference and evaluation"};
  app.require_subcommand(1);

  ConfigOptions gen_opts;
  std::string gen_out, gen_traj;
  std::optional<int> grid[4], takes, test_takes, rig_vertices;
  std::optional<double> duration;
  bool smooth = false;
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset and rig");
  gen_opts.attach(gen);
  gen->add_option("--out", gen_out, "Dataset directory");
  gen->add_option("--contents", grid[0]);
  gen->add_option("--emotions", grid[1]);
  gen->add_option("--levels", grid[2]);
  gen->add_option("--speakers", grid[3]);
  gen->add_option("--takes", takes, "Clips per factor cell");
  gen->add_option("--test-takes", test_takes, "Takes held out for evaluation");
  gen->add_option("--duration", duration, "Clip length in seconds");
  gen->add_flag("--smooth", smooth, "Savitzky-Golay smoothing of the ground truth");
  gen->add_option("--trajectory", gen_traj)->check(CLI::IsMember({"sinusoid", "quadratic"}));
  gen->add_option("--rig-vertices", rig_vertices);

  ConfigOptions train_opts;
  TrainFlags tf;
  auto* train = app.add_subcommand("train", "Train on a generated dataset");
  train_opts.attach(train);
  train->add_option("--data", tf.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  train->add_option("--rig", tf.rig, "Rig directory for evaluation")->check(CLI::ExistingDirectory);
  train->add_option("--out", tf.out, "Run directory");
  train->add_option("--resume", tf.resume, "Checkpoint to continue from")->check(CLI::ExistingFile);
  train->add_option("--lr", tf.lr);
  train->add_option("--batch", tf.batch);
  train->add_option("--epochs", tf.epochs);
  train->add_option("--steps-per-epoch", tf.steps_per_epoch);
  train->add_option("--save-every", tf.save_every, "Also checkpoint every N steps");

  std::string ckpt, wav, out, rig_dir, csv, log, lip_mask, eye_mask, split = "test", mode = "delta";
  int level = 0, style = 0;
  bool clamp = false;
  auto* inf = app.add_subcommand("infer", "Predict blendshape coefficients for a WAV file");
  inf->add_option("--checkpoint", ckpt)->required()->check(CLI::ExistingFile);
  inf->add_option("--wav", wav)->required()->check(CLI::ExistingFile);
  inf->add_option("--level", level);
  inf->add_option("--style", style);
  inf->add_option("--out", out, "Output CSV");
  inf->add_option("--rig", rig_dir, "Also write one OBJ per frame")->check(CLI::ExistingDirectory);
  inf->add_flag("--clamp", clamp, "Clamp coefficients to [0, 1]");

  auto* ev = app.add_subcommand("eval", "Vertex metrics and emotion accuracy of a checkpoint");
  ev->add_option("--checkpoint", ckpt)->required()->check(CLI::ExistingFile);
  ev->add_option("--data", csv, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  ev->add_option("--rig", rig_dir)->required()->check(CLI::ExistingDirectory);
  ev->add_option("--lip-mask", lip_mask)->check(CLI::ExistingFile);
  ev->add_option("--eye-mask", eye_mask)->check(CLI::ExistingFile);
  ev->add_option("--split", split)->check(CLI::IsMember({"train", "test"}));
  ev->add_option("--out", out, "Report JSON");

  auto* conv = app.add_subcommand("convert", "Blend a coefficient CSV into an OBJ sequence");
  conv->add_option("--csv", csv)->required()->check(CLI::ExistingFile);
  conv->add_option("--rig", rig_dir)->required()->check(CLI::ExistingDirectory);
  conv->add_option("--mode", mode)->check(CLI::IsMember({"delta", "literal"}));
  conv->add_option("--out", out, "Output directory");

  auto* pl = app.add_subcommand("plot", "SVG plots of a coefficient CSV or a loss log");
  pl->add_option("--csv", csv)->check(CLI::ExistingFile);
  pl->add_option("--log", log)->check(CLI::ExistingFile);
  pl->add_option("--out", out, "Output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) return cmd_gen_data(gen_opts, gen_out, grid, takes, test_takes, duration, smooth, gen_traj, rig_vertices);
    if (*train) return cmd_train(train_opts, tf);
    if (*inf) return cmd_infer(ckpt, wav, level, style, out, rig_dir, clamp);
    if (*ev) return cmd_eval(ckpt, csv, rig_dir, lip_mask, eye_mask, split, out);
    if (*conv) return cmd_convert(csv, rig_dir, mode, out);
    if (*pl) {
      if (csv.empty() && log.empty()) throw ConfigError("plot needs --csv or --log");
      return cmd_plot(csv, log, out);
    }
  } catch (const std::exception& e) {
    std::cerr << "emotalk: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
