#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "uds/toy_lm.hpp"

namespace uds {

struct LossDeltaRecord {
  std::int64_t sample_id = 0;
  double loss_before = 0;
  double loss_after = 0;
  double predicted_delta = 0;  // first-order estimate
  double actual_delta = 0;     // loss_after - loss_before
  double nuclear = 0;
};

enum class UtilityClass { TooHard, Informative, Overfitted, TooEasy };

inline std::string to_string(UtilityClass c) {
  switch (c) {
    case UtilityClass::TooHard: return "too-hard";
    case UtilityClass::Informative: return "informative";
    case UtilityClass::Overfitted: return "overfitted";
    case UtilityClass::TooEasy: return "too-easy";
  }
  return "unknown";
}

// First-order loss change under a logits perturbation: the Frobenius inner
// product of (P - Y) with dL, accumulated over labeled rows. Rows whose
// label row is all zero are outside the target span and are skipped.
inline double predicted_loss_delta(const MatrixXd& delta_logits,
                                   const MatrixXd& probs,
                                   const MatrixXd& labels) {
  if (delta_logits.rows() != probs.rows() || delta_logits.cols() != probs.cols() ||
      labels.rows() != probs.rows() || labels.cols() != probs.cols())
    throw std::invalid_argument("predicted_loss_delta: shape mismatch");
  double acc = 0;
  for (Index r = 0; r < labels.rows(); ++r) {
    const double row_sum = labels.row(r).sum();
    if (row_sum == 0.0) continue;
    if (std::abs(row_sum - 1.0) > 1e-9 || labels.row(r).maxCoeff() != 1.0)
      throw std::invalid_argument("predicted_loss_delta: labeled rows must be one-hot");
    acc += (probs.row(r) - labels.row(r)).dot(delta_logits.row(r));
  }
  return acc;
}

// Logits perturbation induced by one SGD step on a batch:
//   dL = -(lr / B) * J_theta(L) * sum_j grad_j.
inline MatrixXd delta_logits_sgd(const ToyModel& model,
                                 const std::vector<int>& tokens,
                                 std::span<const VectorXd> batch_grads,
                                 double lr) {
  if (batch_grads.empty())
    throw std::invalid_argument("delta_logits_sgd: empty gradient batch");
  VectorXd sum = VectorXd::Zero(model.param_count());
  for (const auto& g : batch_grads) {
    if (g.size() != model.param_count())
      throw std::invalid_argument("delta_logits_sgd: gradient length mismatch");
    if (!g.allFinite())
      throw std::invalid_argument("delta_logits_sgd: non-finite gradient");
    sum += g;
  }
  const VectorXd direction = -(lr / static_cast<double>(batch_grads.size())) * sum;
  return model.logits_jvp(tokens, direction);
}

// Adam analogue: dL = -lr * J_theta(L) * mhat / (sqrt(vhat) + eps), with the
// moments the state would hold after absorbing the batch-mean gradient.
inline MatrixXd delta_logits_adam(const ToyModel& model,
                                  const std::vector<int>& tokens,
                                  const OptimizerState& state,
                                  const VectorXd& batch_mean_grad, double lr) {
  if (state.kind != OptimizerState::Kind::Adam)
    throw std::invalid_argument("delta_logits_adam: state is not Adam");
  if (!batch_mean_grad.allFinite())
    throw std::invalid_argument("delta_logits_adam: non-finite gradient");
  const VectorXd direction = state.preview_delta(batch_mean_grad, lr);
  return model.logits_jvp(tokens, direction);
}

inline std::optional<double> pearson(std::span<const double> x,
                                     std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 3) return std::nullopt;
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return sxy / std::sqrt(sxx * syy);
}

// Pearson coefficient between the observed loss reduction (-actual_delta)
// and the nuclear norm over one batch of records. Undefined (nullopt) below
// 3 records or at zero variance.
inline std::optional<double> correlation_probe(
    std::span<const LossDeltaRecord> records) {
  std::vector<double> reduction, nuclear;
  reduction.reserve(records.size());
  nuclear.reserve(records.size());
  for (const auto& r : records) {
    reduction.push_back(-r.actual_delta);
    nuclear.push_back(r.nuclear);
  }
  return pearson(reduction, nuclear);
}

// 2x2 loss-transition table: High -> High is too hard, High -> Low is
// informative, Low -> High is overfitted, Low -> Low is too easy. "High"
// means strictly above the cutoff.
inline UtilityClass classify_utility(double loss_before, double loss_after,
                                     double cutoff) {
  if (!(cutoff > 0)) throw std::invalid_argument("classify_utility: cutoff must be > 0");
  const bool high_before = loss_before > cutoff;
  const bool high_after = loss_after > cutoff;
  if (high_before) return high_after ? UtilityClass::TooHard : UtilityClass::Informative;
  return high_after ? UtilityClass::Overfitted : UtilityClass::TooEasy;
}

}  // namespace uds
