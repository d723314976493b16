#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "emotalk/data_model.hpp"
#include "emotalk/error.hpp"

using namespace emotalk;

namespace {

Matrix region_block(const BlendshapeSequence& seq, ChannelRegion region) {
  const std::vector<int> ch = channels_in_region(region);
  return seq.coeffs.middleCols(ch.front(), static_cast<Index>(ch.size()));
}

BlendshapeSequence polynomial_track(Index frames, double a, double b, double c) {
  BlendshapeSequence seq;
  seq.coeffs.resize(frames, kNumBlendshapes);
  for (Index t = 0; t < frames; ++t) {
    for (int j = 0; j < kNumBlendshapes; ++j) {
      const double x = static_cast<double>(t) + 0.1 * j;
      seq.coeffs(t, j) = a + b * x + c * x * x;
    }
  }
  return seq;
}

}  // namespace

TEST(ChannelLayout, RegionsPartitionTheChannels) {
  EXPECT_EQ(channels_in_region(ChannelRegion::kLip).size(), 28u);
  EXPECT_EQ(channels_in_region(ChannelRegion::kBrowEye).size(), 16u);
  EXPECT_EQ(channels_in_region(ChannelRegion::kOther).size(), 8u);
  EXPECT_EQ(region_of_channel(27), ChannelRegion::kLip);
  EXPECT_EQ(region_of_channel(28), ChannelRegion::kBrowEye);
  EXPECT_EQ(region_of_channel(44), ChannelRegion::kOther);
  std::set<std::string_view> names(channel_names().begin(), channel_names().end());
  EXPECT_EQ(names.size(), 52u);
  EXPECT_THROW(region_of_channel(52), RangeError);
}

TEST(SynthClip, OneSecondShapes) {
  const SynthClip clip = synth_clip(FactorGrid{}, 0, 1, 1, 0, 1.0, 42);
  EXPECT_EQ(clip.audio.samples.size(), 16000u);
  EXPECT_EQ(clip.truth.frames(), 30);
  EXPECT_EQ(clip.truth.coeffs.cols(), 52);
  EXPECT_GE(clip.truth.coeffs.minCoeff(), 0.0);
  EXPECT_LE(clip.truth.coeffs.maxCoeff(), 1.0);
  EXPECT_EQ(clip.audio.emotion_id, 1);
  EXPECT_EQ(clip.truth.tag.level, 1);
}

TEST(SynthClip, Factorization) {
  const FactorGrid grid{3, 3, 2, 2};
  for (int c = 0; c < 3; ++c) {
    const Matrix lip = region_block(synth_clip(grid, c, 0, 0, 0, 1.0, 5).truth, ChannelRegion::kLip);
    for (int e = 1; e < 3; ++e) {
      for (int l = 0; l < 2; ++l) {
        EXPECT_EQ(region_block(synth_clip(grid, c, e, l, 1, 1.0, 5).truth, ChannelRegion::kLip), lip);
      }
    }
  }
  for (int e = 0; e < 3; ++e) {
    const Matrix brow = region_block(synth_clip(grid, 0, e, 1, 0, 1.0, 5).truth, ChannelRegion::kBrowEye);
    for (int c = 1; c < 3; ++c) {
      EXPECT_EQ(region_block(synth_clip(grid, c, e, 1, 1, 1.0, 5).truth, ChannelRegion::kBrowEye), brow);
    }
  }
  const Matrix other = region_block(synth_clip(grid, 0, 0, 0, 1, 1.0, 5).truth, ChannelRegion::kOther);
  EXPECT_EQ(region_block(synth_clip(grid, 2, 1, 1, 1, 1.0, 9).truth, ChannelRegion::kOther), other);
}

TEST(SynthClip, FactorsChangeTheirOwnRegion) {
  const FactorGrid grid{3, 3, 2, 2};
  const SynthClip base = synth_clip(grid, 0, 0, 0, 0, 1.0, 5);
  EXPECT_GT((region_block(synth_clip(grid, 1, 0, 0, 0, 1.0, 5).truth, ChannelRegion::kLip) -
             region_block(base.truth, ChannelRegion::kLip)).norm(), 0.1);
  EXPECT_GT((region_block(synth_clip(grid, 0, 1, 0, 0, 1.0, 5).truth, ChannelRegion::kBrowEye) -
             region_block(base.truth, ChannelRegion::kBrowEye)).norm(), 0.1);
  EXPECT_GT((region_block(synth_clip(grid, 0, 0, 1, 0, 1.0, 5).truth, ChannelRegion::kBrowEye) -
             region_block(base.truth, ChannelRegion::kBrowEye)).norm(), 0.1);
}

TEST(SynthClip, PureFunctionOfArguments) {
  const SynthClip a = synth_clip(FactorGrid{}, 2, 1, 0, 1, 0.5, 77);
  const SynthClip b = synth_clip(FactorGrid{}, 2, 1, 0, 1, 0.5, 77);
  EXPECT_EQ(a.audio.samples, b.audio.samples);
  EXPECT_EQ(a.truth.coeffs, b.truth.coeffs);
  EXPECT_NE(synth_clip(FactorGrid{}, 2, 1, 0, 1, 0.5, 78).audio.samples, a.audio.samples);
}

TEST(SynthClip, RejectsOutOfRangeFactors) {
  const FactorGrid grid{2, 2, 1, 1};
  EXPECT_THROW(synth_clip(grid, 2, 0, 0, 0, 1.0, 1), RangeError);
  EXPECT_THROW(synth_clip(grid, 0, -1, 0, 0, 1.0, 1), RangeError);
  EXPECT_THROW(synth_clip(grid, 0, 0, 1, 0, 1.0, 1), RangeError);
  EXPECT_THROW(synth_clip(grid, 0, 0, 0, 1, 1.0, 1), RangeError);
  EXPECT_THROW(synth_clip(grid, 0, 0, 0, 0, 0.0, 1), LengthError);
}

TEST(AudioClip, Validation) {
  AudioClip clip;
  clip.samples.assign(16000, 0.0);
  EXPECT_NO_THROW(clip.validate());
  clip.sample_rate = 44100;
  EXPECT_THROW(clip.validate(), FormatError);
  clip.sample_rate = kSampleRate;
  clip.samples[10] = std::nan("");
  EXPECT_THROW(clip.validate(), NumericError);
  clip.samples.assign(500, 0.0);  // under 1/30 s
  EXPECT_THROW(clip.validate(), LengthError);
}

TEST(FramesForAudio, RoundsWithFloorOfOne) {
  EXPECT_EQ(frames_for_audio(16000), 30);
  EXPECT_EQ(frames_for_audio(0), 1);
  EXPECT_EQ(frames_for_audio(800), 2);   // 1.5 rounds away from zero
  EXPECT_EQ(frames_for_audio(2133), 4);  // 3.999
  EXPECT_EQ(frames_for_audio(48000), 90);
}

TEST(SavitzkyGolay, WeightsMatchReferenceTable) {
  // Reference SG(5,2) coefficients, times 35, for each evaluation position.
  const double table[5][5] = {{31, 9, -3, -5, 3},
                              {9, 13, 12, 6, -5},
                              {-3, 12, 17, 12, -3},
                              {-5, 6, 12, 13, 9},
                              {3, -5, -3, 9, 31}};
  for (int p = 0; p < 5; ++p) {
    const RowVector w = savgol_weights(5, 2, p);
    for (int i = 0; i < 5; ++i) EXPECT_NEAR(w(i) * 35.0, table[p][i], 1e-10) << "position " << p;
  }
}

TEST(SavitzkyGolay, MatchesBruteForceLeastSquares) {
  // Normal equations solved by Cramer's rule on the 3x3 moment matrix.
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  BlendshapeSequence seq;
  seq.coeffs.resize(12, kNumBlendshapes);
  for (Index i = 0; i < seq.coeffs.size(); ++i) seq.coeffs.data()[i] = u(rng);
  const BlendshapeSequence out = savgol_smooth(seq);
  for (Index t = 0; t < 12; ++t) {
    const Index start = std::clamp<Index>(t - 2, 0, 7);
    for (int j = 0; j < kNumBlendshapes; j += 7) {
      double s[5] = {0, 0, 0, 0, 0}, r[3] = {0, 0, 0};
      for (Index k = 0; k < 5; ++k) {
        const double x = static_cast<double>(k - 2), y = seq.coeffs(start + k, j);
        double xp = 1.0;
        for (int p = 0; p < 5; ++p, xp *= x) s[p] += xp;
        r[0] += y;
        r[1] += x * y;
        r[2] += x * x * y;
      }
      const auto det3 = [](double a, double b, double c, double d, double e, double f, double g, double h, double i) {
        return a * (e * i - f * h) - b * (d * i - f * g) + c * (d * h - e * g);
      };
      const double d = det3(s[0], s[1], s[2], s[1], s[2], s[3], s[2], s[3], s[4]);
      const double a0 = det3(r[0], s[1], s[2], r[1], s[2], s[3], r[2], s[3], s[4]) / d;
      const double a1 = det3(s[0], r[0], s[2], s[1], r[1], s[3], s[2], r[2], s[4]) / d;
      const double a2 = det3(s[0], s[1], r[0], s[1], s[2], r[1], s[2], s[3], r[2]) / d;
      const double x = static_cast<double>(t - start - 2);
      EXPECT_NEAR(out.coeffs(t, j), a0 + a1 * x + a2 * x * x, 1e-12);
    }
  }
}

TEST(SavitzkyGolay, ReproducesQuadraticsIncludingEdges) {
  const BlendshapeSequence seq = polynomial_track(9, 0.3, -0.02, 0.004);
  EXPECT_LT((savgol_smooth(seq).coeffs - seq.coeffs).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(SavitzkyGolay, RejectsBadArguments) {
  const BlendshapeSequence seq = polynomial_track(4, 0, 0, 0);
  EXPECT_THROW(savgol_smooth(seq), LengthError);
  EXPECT_THROW(savgol_smooth(polynomial_track(10, 0, 0, 0), 4, 2), ConfigError);
  EXPECT_THROW(savgol_smooth(polynomial_track(10, 0, 0, 0), 5, 5), ConfigError);
}

TEST(Split, NamesRoundTrip) {
  EXPECT_EQ(parse_split(split_name(Split::kTrain)), Split::kTrain);
  EXPECT_EQ(parse_split("test"), Split::kTest);
  EXPECT_THROW(parse_split("valid"), FormatError);
}

TEST(Dataset, GridCountsAndSplits) {
  DatasetSpec spec;
  spec.grid = {3, 3, 2, 2};
  spec.duration_s = 0.25;
  const Dataset ds = generate_dataset(spec);
  EXPECT_EQ(ds.samples.size(), 3u * 3 * 2 * 2 * 3);
  EXPECT_EQ(ds.count(Split::kTest), 36u);
  for (const Sample& s : ds.samples) EXPECT_EQ(s.split == Split::kTest, s.take == 2);
  ASSERT_TRUE(ds.find(2, 1, 1, 0, 2).has_value());
  EXPECT_FALSE(ds.find(3, 0, 0, 0, 0).has_value());
}

TEST(Dataset, SmoothingKeepsCoefficientsInRange) {
  DatasetSpec spec;
  spec.grid = {2, 2, 1, 1};
  spec.takes = 1;
  spec.test_takes = 0;
  spec.smooth = true;
  for (const Sample& s : generate_dataset(spec).samples) {
    EXPECT_GE(s.truth.coeffs.minCoeff(), 0.0);
    EXPECT_LE(s.truth.coeffs.maxCoeff(), 1.0);
  }
}

TEST(CrossPairSampler, LabelsAreConsistent) {
  DatasetSpec spec;
  spec.grid = {3, 3, 2, 2};
  spec.duration_s = 0.2;
  const Dataset ds = generate_dataset(spec);
  std::mt19937_64 rng(4);
  for (int i = 0; i < 50; ++i) {
    const CrossPair p = sample_cross_pair(ds, rng);
    EXPECT_NO_THROW(p.validate());
    EXPECT_EQ(p.audio_a.speaker_id, p.audio_b.speaker_id);
    EXPECT_EQ(p.audio_a.level, p.audio_b.level);
    EXPECT_NE(p.audio_a.content_id, p.audio_b.content_id);
    EXPECT_NE(p.audio_a.emotion_id, p.audio_b.emotion_id);
    EXPECT_EQ(p.gt_c1e1.tag.content, p.audio_a.content_id);
    EXPECT_EQ(p.gt_c1e1.tag.emotion, p.audio_b.emotion_id);
    EXPECT_EQ(p.gt_c2e2.tag.content, p.audio_b.content_id);
    EXPECT_EQ(p.gt_c2e2.tag.emotion, p.audio_a.emotion_id);
  }
}

TEST(CrossPairSampler, TwoByTwoGridUsesBothContentsAndEmotions) {
  DatasetSpec spec;
  spec.grid = {2, 2, 1, 1};
  spec.takes = 1;
  spec.test_takes = 0;
  spec.duration_s = 0.2;
  const Dataset ds = generate_dataset(spec);
  std::mt19937_64 rng(8);
  for (int i = 0; i < 10; ++i) {
    const CrossPair p = sample_cross_pair(ds, rng);
    EXPECT_EQ(std::set<int>({p.audio_a.content_id, p.audio_b.content_id}), std::set<int>({0, 1}));
    EXPECT_EQ(std::set<int>({p.audio_a.emotion_id, p.audio_b.emotion_id}), std::set<int>({0, 1}));
  }
}

TEST(CrossPairSampler, DeterministicGivenGeneratorState) {
  DatasetSpec spec;
  spec.duration_s = 0.2;
  const Dataset ds = generate_dataset(spec);
  std::mt19937_64 a(3), b(3);
  for (int i = 0; i < 5; ++i) {
    EXPECT_EQ(sample_cross_pair(ds, a).audio_a.samples, sample_cross_pair(ds, b).audio_a.samples);
  }
}

TEST(CrossPairSampler, ExhaustedWithoutTwoContents) {
  DatasetSpec spec;
  spec.grid = {1, 3, 1, 1};
  spec.takes = 1;
  spec.test_takes = 0;
  spec.duration_s = 0.2;
  std::mt19937_64 rng(1);
  EXPECT_THROW(sample_cross_pair(generate_dataset(spec), rng), ExhaustedError);
}

TEST(CrossPair, ValidateRejectsMislabelledTargets) {
  DatasetSpec spec;
  spec.grid = {2, 2, 1, 1};
  spec.takes = 1;
  spec.test_takes = 0;
  spec.duration_s = 0.2;
  std::mt19937_64 rng(1);
  CrossPair p = sample_cross_pair(generate_dataset(spec), rng);
  std::swap(p.gt_c1e1, p.gt_c2e2);
  EXPECT_THROW(p.validate(), ConfigError);
}

TEST(CrossPair, TargetsAreExactRecombinations) {
  DatasetSpec spec;
  spec.grid = {3, 3, 1, 1};
  spec.takes = 1;
  spec.test_takes = 0;
  spec.duration_s = 0.5;
  std::mt19937_64 rng(6);
  const CrossPair p = sample_cross_pair(generate_dataset(spec), rng);
  // c1e1 shares lips with c1e2 and brows with c2e1.
  EXPECT_EQ(region_block(p.gt_c1e1, ChannelRegion::kLip), region_block(p.gt_c1e2, ChannelRegion::kLip));
  EXPECT_EQ(region_block(p.gt_c1e1, ChannelRegion::kBrowEye), region_block(p.gt_c2e1, ChannelRegion::kBrowEye));
}
