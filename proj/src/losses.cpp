#include "emotalk/losses.hpp"

#include <cmath>
#include <nlohmann/json.hpp>

#include "emotalk/error.hpp"

namespace emotalk {

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw AlignmentError(std::string(what) + ": prediction and target shapes differ");
  }
}

}  // namespace

void LossWeights::validate() const {
  for (double w : {cross, self_rec, velocity, classification}) {
    if (!std::isfinite(w) || w < 0.0) throw ConfigError("loss weights must be finite and non-negative");
  }
}

Matrix difference_operator(Index frames) {
  if (frames < 2) throw LengthError("velocity needs at least two frames");
  Matrix d = Matrix::Zero(frames - 1, frames);
  for (Index t = 0; t + 1 < frames; ++t) {
    d(t, t) = -1.0;
    d(t, t + 1) = 1.0;
  }
  return d;
}

ad::Var mean_square_error(ad::Var pred, const Matrix& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
    throw AlignmentError("reconstruction: prediction and target shapes differ");
  }
  return ad::mean_square(ad::add_const(pred, -target));
}

ad::Var velocity_error(ad::Var pred, const Matrix& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
    throw AlignmentError("velocity: prediction and target shapes differ");
  }
  const Matrix d = difference_operator(pred.rows());
  return ad::mean_square(ad::add_const(ad::lmul(d, pred), -(d * target)));
}

ad::Var negative_log_likelihood(ad::Var probs, int label) {
  if (label < 0 || label >= probs.cols()) throw RangeError("emotion label out of range");
  return ad::scale(ad::log_floor(ad::pick(probs, 0, label), kProbabilityFloor), -1.0);
}

double cross_reconstruction_loss(const BlendshapeSequence& pred_c1e1, const BlendshapeSequence& pred_c2e2,
                                 const BlendshapeSequence& gt_c1e1, const BlendshapeSequence& gt_c2e2) {
  return self_reconstruction_loss(pred_c1e1, gt_c1e1) + self_reconstruction_loss(pred_c2e2, gt_c2e2);
}

double self_reconstruction_loss(const BlendshapeSequence& pred_c1e2, const BlendshapeSequence& gt_c1e2) {
  require_same_shape(pred_c1e2.coeffs, gt_c1e2.coeffs, "reconstruction");
  return (pred_c1e2.coeffs - gt_c1e2.coeffs).squaredNorm() / static_cast<double>(gt_c1e2.coeffs.size());
}

double velocity_loss(const BlendshapeSequence& pred, const BlendshapeSequence& gt) {
  require_same_shape(pred.coeffs, gt.coeffs, "velocity");
  const Matrix d = difference_operator(pred.frames());
  const Matrix gap = d * (pred.coeffs - gt.coeffs);
  return gap.squaredNorm() / static_cast<double>(gap.size());
}

double classification_loss(const Matrix& probs, std::span<const int> labels) {
  if (static_cast<std::size_t>(probs.rows()) != labels.size()) {
    throw AlignmentError("classification: one label per probability row is required");
  }
  if (labels.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    if (y < 0 || y >= probs.cols()) throw RangeError("emotion label out of range");
    sum -= std::log(std::max(probs(static_cast<Index>(i), y), kProbabilityFloor));
  }
  return sum / static_cast<double>(labels.size());
}

LossReport total_loss(const LossComponents& c, const LossWeights& w) {
  w.validate();
  const std::pair<const char*, double> terms[] = {
      {"cross", c.cross}, {"self", c.self_rec}, {"velocity", c.velocity}, {"classification", c.classification}};
  for (const auto& [name, value] : terms) {
    if (!std::isfinite(value)) throw NumericError(std::string("non-finite ") + name + " loss");
  }
  LossReport r{c.cross, c.self_rec, c.velocity, c.classification, 0.0};
  r.total = w.cross * c.cross + w.self_rec * c.self_rec + w.velocity * c.velocity + w.classification * c.classification;
  return r;
}

std::string to_json_line(const LossReport& report, long long step) {
  nlohmann::ordered_json j;
  j["step"] = step;
  j["cross"] = report.cross;
  j["self"] = report.self_rec;
  j["velocity"] = report.velocity;
  j["classification"] = report.classification;
  j["total"] = report.total;
  return j.dump();
}

}  // namespace emotalk
