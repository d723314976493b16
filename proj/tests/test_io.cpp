#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "emotalk/config.hpp"
#include "emotalk/error.hpp"
#include "emotalk/io.hpp"

using namespace emotalk;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "emotalk_io_test";
  fs::create_directories(dir);
  return dir / name;
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << s;
}

}  // namespace

TEST(Wav, RoundTripWithinQuantization) {
  const AudioClip clip = synth_clip(FactorGrid{}, 1, 2, 1, 0, 0.5, 4).audio;
  io::write_wav(scratch("a.wav"), clip);
  EXPECT_EQ(fs::file_size(scratch("a.wav")), 44u + 2 * clip.samples.size());
  const AudioClip back = io::read_wav(scratch("a.wav"));
  ASSERT_EQ(back.samples.size(), clip.samples.size());
  for (std::size_t i = 0; i < clip.samples.size(); ++i) EXPECT_NEAR(back.samples[i], clip.samples[i], 1.0 / 32767);
  EXPECT_EQ(back.sample_rate, kSampleRate);
}

TEST(Wav, RejectsOtherFormats) {
  write_text(scratch("bad.wav"), "RIFF\x04\x00\x00\x00WAVE");
  EXPECT_THROW(io::read_wav(scratch("bad.wav")), FormatError);
  write_text(scratch("text.wav"), "hello");
  EXPECT_THROW(io::read_wav(scratch("text.wav")), FormatError);
  // A stereo header.
  AudioClip clip;
  clip.samples.assign(1000, 0.0);
  io::write_wav(scratch("stereo.wav"), clip);
  {
    std::fstream f(scratch("stereo.wav"), std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(22);
    f.put(2);
  }
  EXPECT_THROW(io::read_wav(scratch("stereo.wav")), FormatError);
  EXPECT_THROW(io::read_wav(scratch("absent.wav")), IoError);
}

TEST(Csv, ExactRoundTrip) {
  const BlendshapeSequence seq = synth_clip(FactorGrid{}, 0, 1, 0, 1, 0.4, 6).truth;
  io::write_csv(scratch("a.csv"), seq);
  std::ifstream in(scratch("a.csv"));
  std::string first, header;
  std::getline(in, first);
  std::getline(in, header);
  EXPECT_EQ(first, "# fps=30");
  EXPECT_EQ(header.substr(0, header.find(',')), std::string(channel_names()[0]));
  const BlendshapeSequence back = io::read_csv(scratch("a.csv"));
  EXPECT_EQ(back.coeffs, seq.coeffs);
  EXPECT_EQ(back.fps, 30.0);
}

TEST(Csv, RejectsMalformedFiles) {
  write_text(scratch("short.csv"), "# fps=30\na,b,c\n");
  EXPECT_THROW(io::read_csv(scratch("short.csv")), FormatError);
  std::string header;
  for (int c = 0; c < kNumBlendshapes; ++c) header += (c ? "," : "") + std::string(channel_names()[c]);
  std::string row;
  for (int c = 0; c < kNumBlendshapes; ++c) row += (c ? "," : "") + std::string(c == 3 ? "x" : "0.5");
  write_text(scratch("nan.csv"), "# fps=30\n" + header + "\n" + row + "\n");
  EXPECT_THROW(io::read_csv(scratch("nan.csv")), FormatError);
}

TEST(Mask, RoundTripIgnoringComments) {
  io::write_mask(scratch("m.txt"), {3, 1, 4});
  EXPECT_EQ(io::read_mask(scratch("m.txt")), (std::vector<int>{3, 1, 4}));
  write_text(scratch("c.txt"), "# lips\n5\n\n  7  # corner\n");
  EXPECT_EQ(io::read_mask(scratch("c.txt")), (std::vector<int>{5, 7}));
  write_text(scratch("neg.txt"), "-1\n");
  EXPECT_THROW(io::read_mask(scratch("neg.txt")), FormatError);
}

TEST(Obj, RoundTripAndQuads) {
  Matrix v(4, 3);
  v << 0, 0, 0, 1, 0, 0, 1, 1, 0.5, 0, 1, 1e-7;
  io::write_obj(scratch("a.obj"), v, {{0, 1, 2}, {0, 2, 3}});
  const io::ObjMesh m = io::read_obj(scratch("a.obj"));
  EXPECT_EQ(m.vertices, v);
  ASSERT_EQ(m.faces.size(), 2u);
  EXPECT_EQ(m.faces[1], (std::array<int, 3>{0, 2, 3}));
  write_text(scratch("quad.obj"), "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1/1 2/2 3/3 4/4\n");
  EXPECT_EQ(io::read_obj(scratch("quad.obj")).faces.size(), 2u);
  write_text(scratch("oob.obj"), "v 0 0 0\nf 1 2 3\n");
  EXPECT_THROW(io::read_obj(scratch("oob.obj")), FormatError);
}

TEST(Hash, Fnv1aReferenceValues) {
  EXPECT_EQ(io::fnv1a_hex(""), "cbf29ce484222325");
  EXPECT_EQ(io::fnv1a_hex("a"), "af63dc4c8601ec8c");
}

TEST(DatasetDirectory, RoundTrip) {
  DatasetSpec spec;
  spec.grid = {2, 2, 1, 1};
  spec.takes = 2;
  spec.duration_s = 0.3;
  const Dataset ds = generate_dataset(spec);
  const fs::path dir = scratch("dataset");
  fs::remove_all(dir);
  const fs::path manifest = io::write_dataset(dir, ds, spec);
  const std::string hash = io::file_fnv1a_hex(manifest);
  const Dataset back = io::read_dataset(dir);
  ASSERT_EQ(back.samples.size(), ds.samples.size());
  EXPECT_EQ(back.grid.contents, 2);
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    EXPECT_EQ(back.samples[i].truth.coeffs, ds.samples[i].truth.coeffs);
    EXPECT_EQ(back.samples[i].split, ds.samples[i].split);
    EXPECT_EQ(back.samples[i].audio.emotion_id, ds.samples[i].audio.emotion_id);
  }
  EXPECT_EQ(io::read_mask(dir / "lip_channels.txt"), channels_in_region(ChannelRegion::kLip));
  io::write_dataset(dir, ds, spec);
  EXPECT_EQ(io::file_fnv1a_hex(manifest), hash);
}

TEST(RigDirectory, RoundTrip) {
  const RigTemplateSet rig = make_synthetic_rig(64, 2);
  const fs::path dir = scratch("rig");
  fs::remove_all(dir);
  io::write_rig(dir, rig);
  const RigTemplateSet back = io::read_rig(dir);
  EXPECT_EQ(back.neutral, rig.neutral);
  EXPECT_EQ(back.templates[51], rig.templates[51]);
  EXPECT_EQ(back.lip_vertices, rig.lip_vertices);
  EXPECT_EQ(back.faces, rig.faces);
}

TEST(RunConfig, JsonRoundTripAndUnknownKeys) {
  RunConfig c;
  c.reseed(21);
  c.train.learning_rate = 3e-4;
  c.dataset.trajectory = Trajectory::kQuadratic;
  c.model.fusion.d_style = 16;
  const nlohmann::json j = c;
  const RunConfig back = j.get<RunConfig>();
  EXPECT_EQ(nlohmann::json(back), j);
  EXPECT_EQ(back.train.seed, 21u);
  EXPECT_EQ(back.model.init_seed, 21u);
  EXPECT_EQ(back.dataset.trajectory, Trajectory::kQuadratic);

  write_text(scratch("cfg.json"), R"({"train": {"learning_rate": 0.01}, "dataset": {"grid": {"contents": 4}}})");
  const RunConfig loaded = load_run_config(scratch("cfg.json"));
  EXPECT_EQ(loaded.train.learning_rate, 0.01);
  EXPECT_EQ(loaded.dataset.grid.contents, 4);
  EXPECT_EQ(loaded.train.batch_size, 8);
  EXPECT_EQ(loaded.model.encoder.n_emotions, 3);

  write_text(scratch("typo.json"), R"({"train": {"learnig_rate": 0.01}})");
  EXPECT_THROW(load_run_config(scratch("typo.json")), ConfigError);
  write_text(scratch("broken.json"), "{");
  EXPECT_THROW(load_run_config(scratch("broken.json")), ConfigError);
  write_text(scratch("type.json"), R"({"train": {"batch_size": "eight"}})");
  EXPECT_THROW(load_run_config(scratch("type.json")), ConfigError);
}

TEST(RunConfig, Validation) {
  RunConfig c;
  EXPECT_NO_THROW(c.validate());
  c.dataset.grid.emotions = 5;
  EXPECT_THROW(c.validate(), ConfigError);
  c = RunConfig{};
  c.dataset.test_takes = c.dataset.takes;
  EXPECT_THROW(c.validate(), ConfigError);
}
