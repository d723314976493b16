#pragma once

// Training objective: weighted sum of cross-reconstruction, self-
// reconstruction, velocity and emotion-classification terms. Squared-error
// terms are mean squares over all elements; classification is the mean
// negative log-likelihood with probabilities floored at 1e-12.

#include <span>
#include <string>

#include "emotalk/autodiff.hpp"
#include "emotalk/data_model.hpp"

namespace emotalk {

inline constexpr double kProbabilityFloor = 1e-12;

struct LossWeights {
  double cross = 1.0;
  double self_rec = 1.0;
  double velocity = 0.5;
  double classification = 0.1;

  void validate() const;
};

/// Unweighted loss terms.
struct LossComponents {
  double cross = 0.0;
  double self_rec = 0.0;
  double velocity = 0.0;
  double classification = 0.0;
};

struct LossReport {
  double cross = 0.0;
  double self_rec = 0.0;
  double velocity = 0.0;
  double classification = 0.0;
  double total = 0.0;
};

double cross_reconstruction_loss(const BlendshapeSequence& pred_c1e1, const BlendshapeSequence& pred_c2e2,
                                 const BlendshapeSequence& gt_c1e1, const BlendshapeSequence& gt_c2e2);
double self_reconstruction_loss(const BlendshapeSequence& pred_c1e2, const BlendshapeSequence& gt_c1e2);
/// Mean over frames 2..T of the squared frame-difference mismatch.
double velocity_loss(const BlendshapeSequence& pred, const BlendshapeSequence& gt);
/// `probs` is batch x M, one distribution per row.
double classification_loss(const Matrix& probs, std::span<const int> labels);

/// Throws NumericError naming the first non-finite component.
LossReport total_loss(const LossComponents& components, const LossWeights& weights);

/// {"step":..,"cross":..,"self":..,"velocity":..,"classification":..,"total":..}
std::string to_json_line(const LossReport& report, long long step);

// ---- graph-level terms ----------------------------------------------------------

/// Mean square of (pred - target).
ad::Var mean_square_error(ad::Var pred, const Matrix& target);
ad::Var velocity_error(ad::Var pred, const Matrix& target);
/// -log(max(p[label], floor)) for a 1 x M distribution.
ad::Var negative_log_likelihood(ad::Var probs, int label);
/// (T-1) x T forward-difference operator.
Matrix difference_operator(Index frames);

}  // namespace emotalk
