#include "emotalk/data_model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <tuple>

#include "emotalk/error.hpp"

namespace emotalk {

namespace {

constexpr std::array<std::string_view, kNumBlendshapes> kChannelNames = {
    // lip region
    "jawOpen", "jawForward", "jawLeft", "jawRight", "mouthClose", "mouthFunnel", "mouthPucker", "mouthLeft",
    "mouthRight", "mouthSmileLeft", "mouthSmileRight", "mouthFrownLeft", "mouthFrownRight", "mouthDimpleLeft",
    "mouthDimpleRight", "mouthStretchLeft", "mouthStretchRight", "mouthRollLower", "mouthRollUpper",
    "mouthShrugLower", "mouthShrugUpper", "mouthPressLeft", "mouthPressRight", "mouthLowerDownLeft",
    "mouthLowerDownRight", "mouthUpperUpLeft", "mouthUpperUpRight", "tongueOut",
    // brow / eye region
    "browDownLeft", "browDownRight", "browInnerUp", "browOuterUpLeft", "browOuterUpRight", "eyeBlinkLeft",
    "eyeBlinkRight", "eyeSquintLeft", "eyeSquintRight", "eyeWideLeft", "eyeWideRight", "eyeLookDownLeft",
    "eyeLookDownRight", "eyeLookUpLeft", "eyeLookUpRight", "eyeLookInLeft",
    // other
    "eyeLookInRight", "eyeLookOutLeft", "eyeLookOutRight", "cheekPuff", "cheekSquintLeft", "cheekSquintRight",
    "noseSneerLeft", "noseSneerRight"};

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

template <class... Ts>
std::uint64_t hash_of(Ts... parts) {
  std::uint64_t h = 0x243f6a8885a308d3ULL;
  ((h = splitmix64(h ^ static_cast<std::uint64_t>(parts))), ...);
  return h;
}

double unit(std::uint64_t h) { return static_cast<double>(h >> 11) * 0x1.0p-53; }

// Low-discrepancy spread so that neighbouring ids get well separated values.
double spread(double offset, int id) {
  const double v = offset + id * 0.6180339887498949;
  return v - std::floor(v);
}

constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct ContentTrack {
  double rate1, rate2, phase1, phase2, freq1, freq2, shape1, shape2;
};

struct EmotionTrack {
  double rate, phase, magnitude, offset, intensity;
};

ContentTrack content_track(int content, std::uint64_t seed) {
  return ContentTrack{2.0 + 3.0 * spread(0.37, content),
                      0.6 + 1.2 * spread(0.81, content),
                      kTwoPi * unit(hash_of(5, content, seed)),
                      kTwoPi * unit(hash_of(6, content, seed)),
                      220.0 + 260.0 * spread(0.13, content),
                      900.0 + 900.0 * spread(0.59, content),
                      unit(hash_of(7, content, seed)),
                      unit(hash_of(8, content, seed))};
}

EmotionTrack emotion_track(int emotion, int level, std::uint64_t seed) {
  return EmotionTrack{0.5 + 1.5 * spread(0.11, emotion), kTwoPi * unit(hash_of(14, emotion, seed)),
                      0.12 + 0.2 * spread(0.23, emotion), 0.04 * (spread(0.71, emotion) - 0.5),
                      level == 0 ? 0.6 : 1.0};
}

// Mouth opening and rounding trajectories, both in [0, 1].
std::pair<double, double> mouth(const ContentTrack& c, Trajectory kind, double t, double duration) {
  if (kind == Trajectory::kQuadratic) {
    const double u = t / duration;
    return {0.2 + 0.6 * (c.shape1 * u + (1.0 - c.shape1) * u * u),
            0.2 + 0.6 * (c.shape2 * u * u + (1.0 - c.shape2) * (1.0 - u) * (1.0 - u))};
  }
  return {0.5 + 0.5 * std::sin(kTwoPi * c.rate1 * t + c.phase1), 0.5 + 0.5 * std::sin(kTwoPi * c.rate2 * t + c.phase2)};
}

// Emotion modulation in [-1, 1].
double emotion_wave(const EmotionTrack& e, Trajectory kind, double t, double duration) {
  if (kind == Trajectory::kQuadratic) {
    const double u = t / duration;
    return 2.0 * (1.0 - 2.0 * u) * (1.0 - 2.0 * u) - 1.0;
  }
  return std::sin(kTwoPi * e.rate * t + e.phase);
}

}  // namespace

ChannelRegion region_of_channel(int channel) {
  if (channel < 0 || channel >= kNumBlendshapes) throw RangeError("blendshape channel out of range");
  if (channel < kBrowEyeChannelBegin) return ChannelRegion::kLip;
  if (channel < kOtherChannelBegin) return ChannelRegion::kBrowEye;
  return ChannelRegion::kOther;
}

std::vector<int> channels_in_region(ChannelRegion region) {
  std::vector<int> out;
  for (int c = 0; c < kNumBlendshapes; ++c) {
    if (region_of_channel(c) == region) out.push_back(c);
  }
  return out;
}

std::string_view region_name(ChannelRegion region) {
  switch (region) {
    case ChannelRegion::kLip:
      return "lip";
    case ChannelRegion::kBrowEye:
      return "brow_eye";
    case ChannelRegion::kOther:
      return "other";
  }
  return "other";
}

const std::array<std::string_view, kNumBlendshapes>& channel_names() { return kChannelNames; }

void AudioClip::validate() const {
  if (sample_rate != kSampleRate) throw FormatError("audio must be sampled at 16 kHz");
  if (samples.size() * kFps < static_cast<std::size_t>(sample_rate)) {
    throw LengthError("audio clip shorter than one video frame");
  }
  for (double s : samples) {
    if (!std::isfinite(s)) throw NumericError("audio clip contains a non-finite sample");
  }
}

SynthClip synth_clip(const FactorGrid& grid, int content_id, int emotion_id, int level, int speaker_id,
                     double duration_s, std::uint64_t seed, Trajectory trajectory) {
  if (content_id < 0 || content_id >= grid.contents) throw RangeError("content id out of range");
  if (emotion_id < 0 || emotion_id >= grid.emotions) throw RangeError("emotion id out of range");
  if (level < 0 || level >= std::min(grid.levels, 2)) throw RangeError("emotion level out of range");
  if (speaker_id < 0 || speaker_id >= grid.speakers) throw RangeError("speaker id out of range");
  if (!(duration_s > 0.0) || !std::isfinite(duration_s)) throw LengthError("duration must be positive");

  const auto n_samples = static_cast<std::size_t>(std::llround(duration_s * kSampleRate));
  const auto n_frames = std::max<Index>(1, std::llround(duration_s * kFps));
  const ContentTrack ct = content_track(content_id, seed);
  const EmotionTrack et = emotion_track(emotion_id, level, seed);
  const double pitch = 1.0 + 0.1 * (spread(0.5, speaker_id) - 0.5);

  SynthClip out;
  AudioClip& audio = out.audio;
  audio.content_id = content_id;
  audio.emotion_id = emotion_id;
  audio.level = level;
  audio.speaker_id = speaker_id;
  audio.samples.resize(n_samples);
  std::mt19937_64 noise_rng(hash_of(99, seed, content_id, emotion_id, level, speaker_id));
  std::normal_distribution<double> noise(0.0, 0.003);
  for (std::size_t n = 0; n < n_samples; ++n) {
    const double t = static_cast<double>(n) / kSampleRate;
    const auto [m1, m2] = mouth(ct, trajectory, t, duration_s);
    const double carrier = (m1 * std::sin(kTwoPi * ct.freq1 * pitch * t) +
                            0.5 * m1 * std::sin(2.0 * kTwoPi * ct.freq1 * pitch * t) +
                            m2 * std::sin(kTwoPi * ct.freq2 * pitch * t)) /
                           2.5;
    const double envelope =
        et.magnitude * (0.6 + 0.4 * et.intensity) * (1.0 + 0.5 * emotion_wave(et, trajectory, t, duration_s));
    audio.samples[n] = std::clamp(envelope * carrier + et.offset + noise(noise_rng), -1.0, 1.0);
  }

  BlendshapeSequence& truth = out.truth;
  truth.tag = FactorTag{content_id, emotion_id, level, speaker_id};
  truth.coeffs.resize(n_frames, kNumBlendshapes);
  for (Index k = 0; k < n_frames; ++k) {
    const double t = static_cast<double>(k) / kFps;
    const auto [m1, m2] = mouth(ct, trajectory, t, duration_s);
    const double wave = emotion_wave(et, trajectory, t, duration_s);
    for (int j = 0; j < kNumBlendshapes; ++j) {
      double v = 0.0;
      switch (region_of_channel(j)) {
        case ChannelRegion::kLip: {
          const double w = unit(hash_of(10, j));
          const double gain = 0.4 + 0.6 * unit(hash_of(11, j));
          v = 0.05 + 0.9 * gain * (w * m1 + (1.0 - w) * m2);
          break;
        }
        case ChannelRegion::kBrowEye: {
          const double base = 0.25 + 0.45 * unit(hash_of(12, emotion_id, j));
          const double amp = 0.2 * (2.0 * unit(hash_of(13, j)) - 1.0);
          v = et.intensity * (base + amp * wave);
          break;
        }
        case ChannelRegion::kOther:
          v = 0.2 + 0.6 * unit(hash_of(15, speaker_id, j));
          break;
      }
      truth.coeffs(k, j) = v;
    }
  }
  audio.validate();
  return out;
}

RowVector savgol_weights(int window, int order, int position) {
  if (window < 1 || window % 2 == 0) throw ConfigError("Savitzky-Golay window must be odd and positive");
  if (order < 0 || order >= window) throw ConfigError("Savitzky-Golay order must be below the window length");
  if (position < 0 || position >= window) throw RangeError("Savitzky-Golay evaluation position outside the window");
  const int half = window / 2;
  Matrix vander(window, order + 1);
  for (int i = 0; i < window; ++i) {
    double x = 1.0;
    for (int p = 0; p <= order; ++p) {
      vander(i, p) = x;
      x *= static_cast<double>(i - half);
    }
  }
  // Projection rows: (A^T A)^-1 A^T, evaluated at the requested position.
  const Matrix pinv = vander.colPivHouseholderQr().solve(Matrix::Identity(window, window));
  RowVector at(order + 1);
  double x = 1.0;
  for (int p = 0; p <= order; ++p) {
    at(p) = x;
    x *= static_cast<double>(position - half);
  }
  return at * pinv;
}

BlendshapeSequence savgol_smooth(const BlendshapeSequence& seq, int window, int order) {
  if (window < 1 || window % 2 == 0) throw ConfigError("Savitzky-Golay window must be odd and positive");
  if (order < 0 || order >= window) throw ConfigError("Savitzky-Golay order must be below the window length");
  const Index frames = seq.frames();
  if (frames < window) throw LengthError("sequence shorter than the smoothing window");
  std::vector<RowVector> weights;
  for (int p = 0; p < window; ++p) weights.push_back(savgol_weights(window, order, p));

  const int half = window / 2;
  BlendshapeSequence out = seq;
  for (Index t = 0; t < frames; ++t) {
    const Index start = std::clamp<Index>(t - half, 0, frames - window);
    out.coeffs.row(t) = weights[t - start] * seq.coeffs.middleRows(start, window);
  }
  return out;
}

Index frames_for_audio(std::int64_t n_samples, int sample_rate, int fps) {
  const double exact = static_cast<double>(n_samples) * fps / sample_rate;
  return std::max<Index>(1, std::llround(exact));
}

std::string_view split_name(Split s) { return s == Split::kTrain ? "train" : "test"; }

Split parse_split(std::string_view name) {
  if (name == "train") return Split::kTrain;
  if (name == "test") return Split::kTest;
  throw FormatError("unknown split '" + std::string(name) + "'");
}

std::optional<std::size_t> Dataset::find(int content, int emotion, int level, int speaker, int take) const {
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Sample& s = samples[i];
    if (s.audio.content_id == content && s.audio.emotion_id == emotion && s.audio.level == level &&
        s.audio.speaker_id == speaker && s.take == take) {
      return i;
    }
  }
  return std::nullopt;
}

std::size_t Dataset::count(Split split) const {
  return static_cast<std::size_t>(
      std::count_if(samples.begin(), samples.end(), [split](const Sample& s) { return s.split == split; }));
}

std::uint64_t take_seed(std::uint64_t base_seed, int take) { return hash_of(31, base_seed, take); }

Dataset generate_dataset(const DatasetSpec& spec) {
  if (spec.takes < 1 || spec.test_takes < 0 || spec.test_takes > spec.takes) {
    throw ConfigError("dataset needs takes >= 1 and 0 <= test_takes <= takes");
  }
  Dataset ds;
  ds.grid = spec.grid;
  for (int s = 0; s < spec.grid.speakers; ++s) {
    for (int l = 0; l < spec.grid.levels; ++l) {
      for (int k = 0; k < spec.takes; ++k) {
        for (int c = 0; c < spec.grid.contents; ++c) {
          for (int e = 0; e < spec.grid.emotions; ++e) {
            SynthClip clip = synth_clip(spec.grid, c, e, l, s, spec.duration_s, take_seed(spec.seed, k), spec.trajectory);
            if (spec.smooth && clip.truth.frames() >= 5) {
              clip.truth = savgol_smooth(clip.truth);
              clip.truth.coeffs = clip.truth.coeffs.cwiseMax(0.0).cwiseMin(1.0);
            }
            ds.samples.push_back(Sample{std::move(clip.audio), std::move(clip.truth), k,
                                        k >= spec.takes - spec.test_takes ? Split::kTest : Split::kTrain});
          }
        }
      }
    }
  }
  return ds;
}

void CrossPair::validate() const {
  audio_a.validate();
  audio_b.validate();
  if (audio_a.speaker_id != audio_b.speaker_id) throw ConfigError("cross pair mixes speakers");
  if (audio_a.content_id == audio_b.content_id || audio_a.emotion_id == audio_b.emotion_id) {
    throw ConfigError("cross pair needs distinct contents and distinct emotions");
  }
  const auto check = [](const BlendshapeSequence& gt, int content, int emotion, const char* name) {
    if (gt.coeffs.cols() != kNumBlendshapes || gt.frames() < 1) {
      throw AlignmentError(std::string("cross pair target ") + name + " is missing or malformed");
    }
    if ((gt.tag.content >= 0 && gt.tag.content != content) || (gt.tag.emotion >= 0 && gt.tag.emotion != emotion)) {
      throw ConfigError(std::string("cross pair target ") + name + " carries the wrong labels");
    }
  };
  const int c1 = audio_a.content_id, e2 = audio_a.emotion_id;
  const int c2 = audio_b.content_id, e1 = audio_b.emotion_id;
  check(gt_c1e1, c1, e1, "c1e1");
  check(gt_c2e2, c2, e2, "c2e2");
  check(gt_c1e2, c1, e2, "c1e2");
  check(gt_c2e1, c2, e1, "c2e1");
}

CrossPair sample_cross_pair(const Dataset& dataset, std::mt19937_64& rng, Split split) {
  struct Candidate {
    int speaker, level, take, c1, c2, e1, e2;
  };
  std::vector<std::tuple<int, int, int>> groups;
  for (const Sample& s : dataset.samples) {
    if (s.split != split) continue;
    const auto key = std::make_tuple(s.audio.speaker_id, s.audio.level, s.take);
    if (std::find(groups.begin(), groups.end(), key) == groups.end()) groups.push_back(key);
  }
  std::sort(groups.begin(), groups.end());

  std::vector<Candidate> candidates;
  for (const auto& [speaker, level, take] : groups) {
    const auto has = [&](int c, int e) {
      const auto idx = dataset.find(c, e, level, speaker, take);
      return idx && dataset.samples[*idx].split == split;
    };
    for (int c1 = 0; c1 < dataset.grid.contents; ++c1) {
      for (int c2 = 0; c2 < dataset.grid.contents; ++c2) {
        if (c1 == c2) continue;
        for (int e1 = 0; e1 < dataset.grid.emotions; ++e1) {
          for (int e2 = 0; e2 < dataset.grid.emotions; ++e2) {
            if (e1 == e2) continue;
            if (has(c1, e1) && has(c2, e2) && has(c1, e2) && has(c2, e1)) {
              candidates.push_back(Candidate{speaker, level, take, c1, c2, e1, e2});
            }
          }
        }
      }
    }
  }
  if (candidates.empty()) {
    throw ExhaustedError("no speaker/level/take group offers two contents and two emotions");
  }
  std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
  const Candidate& c = candidates[pick(rng)];
  const auto at = [&](int content, int emotion) -> const Sample& {
    return dataset.samples[*dataset.find(content, emotion, c.level, c.speaker, c.take)];
  };
  CrossPair pair{at(c.c1, c.e2).audio,  at(c.c2, c.e1).audio,  at(c.c1, c.e1).truth,
                 at(c.c2, c.e2).truth, at(c.c1, c.e2).truth, at(c.c2, c.e1).truth};
  return pair;
}

}  // namespace emotalk
