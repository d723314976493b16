#include <gtest/gtest.h>

#include <cmath>
#include <nlohmann/json.hpp>
#include <random>

#include "emotalk/error.hpp"
#include "emotalk/losses.hpp"

using namespace emotalk;

namespace {

BlendshapeSequence random_sequence(Index frames, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  BlendshapeSequence s;
  s.coeffs.resize(frames, kNumBlendshapes);
  for (Index i = 0; i < s.coeffs.size(); ++i) s.coeffs.data()[i] = u(rng);
  return s;
}

}  // namespace

TEST(Reconstruction, MeanSquareOverAllElements) {
  const BlendshapeSequence a = random_sequence(7, 1), b = random_sequence(7, 2);
  double sum = 0.0;
  for (Index t = 0; t < 7; ++t) {
    for (int j = 0; j < kNumBlendshapes; ++j) sum += (a.coeffs(t, j) - b.coeffs(t, j)) * (a.coeffs(t, j) - b.coeffs(t, j));
  }
  EXPECT_NEAR(self_reconstruction_loss(a, b), sum / (7 * 52), 1e-14);
  EXPECT_NEAR(cross_reconstruction_loss(a, b, b, a), 2.0 * sum / (7 * 52), 1e-14);
  EXPECT_EQ(self_reconstruction_loss(a, a), 0.0);
}

TEST(Velocity, BruteForce) {
  const BlendshapeSequence a = random_sequence(6, 3), b = random_sequence(6, 4);
  double sum = 0.0;
  for (Index t = 1; t < 6; ++t) {
    for (int j = 0; j < kNumBlendshapes; ++j) {
      const double d = (a.coeffs(t, j) - a.coeffs(t - 1, j)) - (b.coeffs(t, j) - b.coeffs(t - 1, j));
      sum += d * d;
    }
  }
  EXPECT_NEAR(velocity_loss(a, b), sum / (5 * 52), 1e-14);
}

TEST(Velocity, ZeroUnderConstantOffset) {
  // Dyadic values keep gt + offset exact in floating point.
  BlendshapeSequence gt;
  gt.coeffs.resize(10, kNumBlendshapes);
  for (Index i = 0; i < gt.coeffs.size(); ++i) gt.coeffs.data()[i] = static_cast<double>((i * 37) % 1024) / 1024.0;
  BlendshapeSequence pred = gt;
  pred.coeffs.array() += 0.375;
  EXPECT_EQ(velocity_loss(pred, gt), 0.0);
  const BlendshapeSequence r = random_sequence(10, 5);
  BlendshapeSequence shifted = r;
  shifted.coeffs.array() += 0.3;
  EXPECT_LT(velocity_loss(shifted, r), 1e-30);
}

TEST(Velocity, NeedsTwoFrames) {
  EXPECT_THROW(velocity_loss(random_sequence(1, 1), random_sequence(1, 2)), LengthError);
  EXPECT_THROW(difference_operator(1), LengthError);
}

TEST(Classification, UniformIsLogM) {
  for (int m : {2, 3, 4, 9}) {
    const Matrix probs = Matrix::Constant(5, m, 1.0 / m);
    const int labels[] = {0, 1, m - 1, 0, 1};
    EXPECT_NEAR(classification_loss(probs, labels), std::log(static_cast<double>(m)), 1e-9);
  }
}

TEST(Classification, ProbabilityFloor) {
  Matrix probs(1, 3);
  probs << 1.0, 0.0, 0.0;
  const int wrong[] = {2};
  EXPECT_NEAR(classification_loss(probs, wrong), -std::log(1e-12), 1e-9);
  const int right[] = {0};
  EXPECT_EQ(classification_loss(probs, right), 0.0);
}

TEST(Classification, RejectsBadLabels) {
  const Matrix probs = Matrix::Constant(2, 3, 1.0 / 3);
  const int out_of_range[] = {0, 3};
  EXPECT_THROW(classification_loss(probs, out_of_range), RangeError);
  const int too_few[] = {0};
  EXPECT_THROW(classification_loss(probs, too_few), AlignmentError);
}

TEST(TotalLoss, WeightedSum) {
  const LossComponents c{0.3, 0.2, 0.05, 1.1};
  const LossWeights w{1.0, 1.0, 0.5, 0.1};
  const LossReport r = total_loss(c, w);
  EXPECT_NEAR(r.total, 0.3 + 0.2 + 0.5 * 0.05 + 0.1 * 1.1, 1e-12);
  EXPECT_EQ(r.classification, 1.1);
  const LossReport only_cross = total_loss(c, LossWeights{2.0, 0.0, 0.0, 0.0});
  EXPECT_NEAR(only_cross.total, 0.6, 1e-15);
}

TEST(TotalLoss, NamesTheNonFiniteTerm) {
  try {
    total_loss(LossComponents{0.1, 0.1, std::nan(""), 0.1}, LossWeights{});
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("velocity"), std::string::npos);
  }
  EXPECT_THROW(total_loss(LossComponents{}, LossWeights{-1.0, 1.0, 1.0, 1.0}), ConfigError);
}

TEST(GraphLosses, MatchValueLevelForms) {
  const BlendshapeSequence a = random_sequence(5, 8), b = random_sequence(5, 9);
  ad::Graph g(false);
  const ad::Var pa = g.constant(a.coeffs);
  EXPECT_NEAR(mean_square_error(pa, b.coeffs).scalar(), self_reconstruction_loss(a, b), 1e-15);
  EXPECT_NEAR(velocity_error(pa, b.coeffs).scalar(), velocity_loss(a, b), 1e-15);
  Matrix probs(1, 4);
  probs << 0.1, 0.2, 0.3, 0.4;
  const int label[] = {2};
  EXPECT_NEAR(negative_log_likelihood(g.constant(probs), 2).scalar(), classification_loss(probs, label), 1e-15);
  EXPECT_THROW(mean_square_error(pa, Matrix::Zero(4, 52)), AlignmentError);
}

TEST(LossLog, JsonLineFields) {
  const LossReport r = total_loss(LossComponents{0.5, 0.25, 0.125, 2.0}, LossWeights{});
  const std::string line = to_json_line(r, 12);
  EXPECT_EQ(line.find('\n'), std::string::npos);
  EXPECT_EQ(line.rfind("{\"step\":12,\"cross\":", 0), 0u);
  const auto j = nlohmann::json::parse(line);
  EXPECT_EQ(j.at("step").get<long long>(), 12);
  EXPECT_EQ(j.at("self").get<double>(), 0.25);
  EXPECT_EQ(j.at("total").get<double>(), r.total);
}
