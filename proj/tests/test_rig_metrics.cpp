#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "emotalk/error.hpp"
#include "emotalk/rig_metrics.hpp"

using namespace emotalk;

namespace {

VertexSequence random_vertices(Index frames, Index vertices, std::mt19937_64& rng, double scale = 0.01) {
  std::normal_distribution<double> n(0.0, scale);
  VertexSequence s;
  for (Index t = 0; t < frames; ++t) {
    Matrix m(vertices, 3);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
    s.frames.push_back(std::move(m));
  }
  return s;
}

// Reference implementations: explicit loops over frames, vertices and axes.
double brute_max_error(const VertexSequence& p, const VertexSequence& g, const std::vector<int>& mask) {
  double total = 0.0;
  for (std::size_t t = 0; t < p.frames.size(); ++t) {
    double worst = 0.0;
    for (int v : mask) {
      double sq = 0.0;
      for (int k = 0; k < 3; ++k) sq += (p.frames[t](v, k) - g.frames[t](v, k)) * (p.frames[t](v, k) - g.frames[t](v, k));
      if (std::sqrt(sq) > worst) worst = std::sqrt(sq);
    }
    total += worst;
  }
  return 1000.0 * total / static_cast<double>(p.frames.size());
}

double brute_mean_error(const VertexSequence& p, const VertexSequence& g, const std::vector<int>& mask) {
  double total = 0.0;
  for (std::size_t t = 0; t < p.frames.size(); ++t) {
    for (int v : mask) {
      double sq = 0.0;
      for (int k = 0; k < 3; ++k) sq += (p.frames[t](v, k) - g.frames[t](v, k)) * (p.frames[t](v, k) - g.frames[t](v, k));
      total += std::sqrt(sq);
    }
  }
  return 1000.0 * total / static_cast<double>(p.frames.size() * mask.size());
}

std::vector<int> random_mask(Index vertices, std::mt19937_64& rng) {
  std::vector<int> mask;
  std::bernoulli_distribution keep(0.3);
  for (int v = 0; v < vertices; ++v) {
    if (keep(rng)) mask.push_back(v);
  }
  if (mask.empty()) mask.push_back(0);
  return mask;
}

}  // namespace

TEST(Metrics, MatchBruteForce) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const VertexSequence p = random_vertices(10, 200, rng), g = random_vertices(10, 200, rng);
    const std::vector<int> lip = random_mask(200, rng), eye = random_mask(200, rng);
    EXPECT_NEAR(lve(p, g, lip), brute_max_error(p, g, lip), 1e-9);
    EXPECT_NEAR(eve(p, g, eye), brute_max_error(p, g, eye), 1e-9);
    EXPECT_NEAR(lip_avg_error(p, g, lip), brute_mean_error(p, g, lip), 1e-9);
    EXPECT_LE(lip_avg_error(p, g, lip), lve(p, g, lip));
  }
}

TEST(Metrics, TranslationInvariant) {
  std::mt19937_64 rng(13);
  VertexSequence p = random_vertices(10, 200, rng), g = random_vertices(10, 200, rng);
  const std::vector<int> mask = random_mask(200, rng);
  const double before = lve(p, g, mask), before_avg = lip_avg_error(p, g, mask);
  const Eigen::RowVector3d shift(0.3, -1.2, 0.05);
  for (auto* s : {&p, &g}) {
    for (Matrix& f : s->frames) f.rowwise() += shift;
  }
  EXPECT_NEAR(lve(p, g, mask), before, 1e-9);
  EXPECT_NEAR(lip_avg_error(p, g, mask), before_avg, 1e-9);
}

TEST(Metrics, KnownValueInMillimetres) {
  VertexSequence p, g;
  p.frames = {Matrix::Zero(2, 3), Matrix::Zero(2, 3)};
  g.frames = {Matrix::Zero(2, 3), Matrix::Zero(2, 3)};
  g.frames[0](1, 0) = 0.003;  // 3 mm
  g.frames[1](0, 2) = 0.001;  // 1 mm
  const std::vector<int> both{0, 1};
  EXPECT_NEAR(lve(p, g, both), 2.0, 1e-12);
  EXPECT_NEAR(lip_avg_error(p, g, both), 1.0, 1e-12);
}

TEST(Metrics, RejectMismatchedInputs) {
  std::mt19937_64 rng(1);
  const VertexSequence a = random_vertices(3, 10, rng), b = random_vertices(4, 10, rng), c = random_vertices(3, 9, rng);
  const std::vector<int> mask{1, 2};
  EXPECT_THROW(lve(a, b, mask), AlignmentError);
  EXPECT_THROW(lve(a, c, mask), AlignmentError);
  EXPECT_THROW(lve(a, a, std::vector<int>{10}), ConfigError);
  EXPECT_THROW(lve(a, a, std::vector<int>{}), ConfigError);
  EXPECT_THROW(lve(VertexSequence{}, VertexSequence{}, mask), LengthError);
}

class RigTest : public ::testing::Test {
 protected:
  RigTemplateSet rig = make_synthetic_rig(400, 3);
};

TEST_F(RigTest, SyntheticRigIsValid) {
  EXPECT_NO_THROW(rig.validate());
  EXPECT_EQ(rig.templates.size(), 52u);
  EXPECT_FALSE(rig.faces.empty());
  EXPECT_FALSE(other_region_vertices(rig).empty());
  for (int i = 0; i < kNumBlendshapes; ++i) EXPECT_GT((rig.templates[i] - rig.neutral).norm(), 0.0) << i;
}

TEST_F(RigTest, TemplatesStayInTheirRegion) {
  const auto displaced_only_in = [&](int channel, const std::vector<int>& region) {
    std::vector<bool> allowed(static_cast<std::size_t>(rig.vertex_count()), false);
    for (int v : region) allowed[v] = true;
    for (Index v = 0; v < rig.vertex_count(); ++v) {
      if (!allowed[v] && (rig.templates[channel].row(v) - rig.neutral.row(v)).norm() != 0.0) return false;
    }
    return true;
  };
  for (int c : channels_in_region(ChannelRegion::kLip)) EXPECT_TRUE(displaced_only_in(c, rig.lip_vertices));
  for (int c : channels_in_region(ChannelRegion::kBrowEye)) {
    EXPECT_TRUE(displaced_only_in(c, rig.eye_forehead_vertices));
  }
}

TEST_F(RigTest, LiteralOneHotGivesTemplate) {
  for (int i = 0; i < kNumBlendshapes; ++i) {
    std::vector<double> beta(kNumBlendshapes, 0.0);
    beta[i] = 1.0;
    EXPECT_LE((blend(rig, beta, BlendMode::kLiteral) - rig.templates[i]).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST_F(RigTest, DeltaZeroGivesNeutral) {
  const std::vector<double> zero(kNumBlendshapes, 0.0);
  EXPECT_EQ(blend(rig, zero, BlendMode::kDelta), rig.neutral);
}

TEST_F(RigTest, AffineCombination) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> a(kNumBlendshapes), b(kNumBlendshapes), mix(kNumBlendshapes);
    const double lambda = u(rng);
    for (int i = 0; i < kNumBlendshapes; ++i) {
      a[i] = u(rng);
      b[i] = u(rng);
      mix[i] = lambda * a[i] + (1.0 - lambda) * b[i];
    }
    for (BlendMode mode : {BlendMode::kDelta, BlendMode::kLiteral}) {
      const Matrix expected = lambda * blend(rig, a, mode) + (1.0 - lambda) * blend(rig, b, mode);
      EXPECT_LE((blend(rig, mix, mode) - expected).cwiseAbs().maxCoeff(), 1e-9);
    }
  }
}

TEST_F(RigTest, BlendSequenceAndErrors) {
  BlendshapeSequence seq;
  seq.coeffs = Matrix::Zero(3, kNumBlendshapes);
  seq.coeffs(1, 4) = 1.0;
  const VertexSequence v = blend_sequence(rig, seq);
  ASSERT_EQ(v.frame_count(), 3);
  EXPECT_EQ(v.frames[0], rig.neutral);
  EXPECT_LE((v.frames[1] - rig.templates[4]).cwiseAbs().maxCoeff(), 1e-15);
  std::vector<double> short_beta(10, 0.0);
  EXPECT_THROW(blend(rig, short_beta), AlignmentError);
  std::vector<double> nan_beta(kNumBlendshapes, 0.0);
  nan_beta[3] = std::nan("");
  EXPECT_THROW(blend(rig, nan_beta), NumericError);
  EXPECT_THROW(make_synthetic_rig(10, 1), ConfigError);
}
