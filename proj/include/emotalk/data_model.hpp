#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "emotalk/tensor.hpp"

namespace emotalk {

inline constexpr int kSampleRate = 16000;
inline constexpr int kFps = 30;
inline constexpr int kNumBlendshapes = 52;

// ---- channel layout ---------------------------------------------------------
// Channels 0-27 drive the lips, 28-43 brows and eyes, 44-51 everything else.

enum class ChannelRegion { kLip, kBrowEye, kOther };

inline constexpr int kLipChannelBegin = 0;
inline constexpr int kBrowEyeChannelBegin = 28;
inline constexpr int kOtherChannelBegin = 44;

ChannelRegion region_of_channel(int channel);
std::vector<int> channels_in_region(ChannelRegion region);
std::string_view region_name(ChannelRegion region);
const std::array<std::string_view, kNumBlendshapes>& channel_names();

// ---- domain types -------------------------------------------------------------

struct AudioClip {
  std::vector<double> samples;
  int sample_rate = kSampleRate;
  int content_id = 0;
  int emotion_id = 0;
  int level = 0;
  int speaker_id = 0;

  /// Throws if the sample rate is not 16 kHz, a sample is non-finite or the
  /// clip is shorter than one video frame.
  void validate() const;
  double duration() const { return static_cast<double>(samples.size()) / sample_rate; }
};

/// Factor labels attached to a ground-truth sequence; -1 means unknown.
struct FactorTag {
  int content = -1;
  int emotion = -1;
  int level = -1;
  int speaker = -1;
};

struct BlendshapeSequence {
  Matrix coeffs;  // T x 52
  double fps = kFps;
  FactorTag tag;

  Index frames() const { return coeffs.rows(); }
};

struct FeatureSequence {
  Matrix values;  // T x D
  double fps = kFps;

  Index frames() const { return values.rows(); }
  Index dim() const { return values.cols(); }
};

/// Sizes of the factor ranges the generator accepts.
struct FactorGrid {
  int contents = 3;
  int emotions = 3;
  int levels = 2;
  int speakers = 2;
};

/// Shape of the per-factor trajectories. kQuadratic makes every channel a
/// degree-2 polynomial in time, which smoothing must leave untouched.
enum class Trajectory { kSinusoid, kQuadratic };

struct SynthClip {
  AudioClip audio;
  BlendshapeSequence truth;
};

/// Deterministic synthetic clip. Lip channels depend only on (content, seed,
/// t), brow/eye channels only on (emotion, level, seed, t), the remaining
/// channels only on the speaker.
SynthClip synth_clip(const FactorGrid& grid, int content_id, int emotion_id, int level, int speaker_id,
                     double duration_s, std::uint64_t seed, Trajectory trajectory = Trajectory::kSinusoid);

/// Savitzky-Golay smoothing per channel. Frames closer than window/2 to an
/// end are evaluated on the polynomial fitted to the first/last full window.
BlendshapeSequence savgol_smooth(const BlendshapeSequence& seq, int window = 5, int order = 2);

/// Least-squares weights that evaluate the fitted polynomial at `position`
/// (0-based inside the window). Row `window/2` is the classic centre kernel.
RowVector savgol_weights(int window, int order, int position);

/// round(n_samples * fps / sample_rate), never below 1.
Index frames_for_audio(std::int64_t n_samples, int sample_rate = kSampleRate, int fps = kFps);

// ---- datasets ----------------------------------------------------------------

enum class Split { kTrain, kTest };

std::string_view split_name(Split s);
Split parse_split(std::string_view name);

struct Sample {
  AudioClip audio;
  BlendshapeSequence truth;
  int take = 0;
  Split split = Split::kTrain;
};

struct DatasetSpec {
  FactorGrid grid;
  int takes = 3;       // clips per (content, emotion, level, speaker) cell
  int test_takes = 1;  // the last `test_takes` takes form the held-out split
  double duration_s = 1.0;
  std::uint64_t seed = 7;
  bool smooth = false;
  Trajectory trajectory = Trajectory::kSinusoid;
};

struct Dataset {
  FactorGrid grid;
  std::vector<Sample> samples;

  /// Index of the sample with these labels, if present.
  std::optional<std::size_t> find(int content, int emotion, int level, int speaker, int take) const;
  std::size_t count(Split split) const;
};

/// Seed used for every cell of take `take`; sharing it across the grid is
/// what makes the cross-reconstruction targets exact.
std::uint64_t take_seed(std::uint64_t base_seed, int take);

Dataset generate_dataset(const DatasetSpec& spec);

struct CrossPair {
  AudioClip audio_a;  // content c1, emotion e2
  AudioClip audio_b;  // content c2, emotion e1
  BlendshapeSequence gt_c1e1;
  BlendshapeSequence gt_c2e2;
  BlendshapeSequence gt_c1e2;
  BlendshapeSequence gt_c2e1;

  void validate() const;
};

/// Draws c1 != c2 and e1 != e2 from one (speaker, level, take) group of
/// `split`. Throws ExhaustedError when no group has a full 2x2 block.
CrossPair sample_cross_pair(const Dataset& dataset, std::mt19937_64& rng, Split split = Split::kTrain);

}  // namespace emotalk
