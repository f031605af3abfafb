#include "cdv/loss.hpp"

#include <cmath>

#include "cdv/error.hpp"

namespace cdv::nn {

namespace {

// Adds scale * (pred - target) / |pred - target| into grad; returns the norm.
double distance_with_grad(const Vector& pred, const Vector& target, Vector* grad, double scale) {
  check_dims(target.size(), pred.size(), "cdv loss prediction");
  double sq = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    sq += d * d;
  }
  const double norm = std::sqrt(sq);
  if (grad != nullptr && norm > 0.0) {
    for (std::size_t i = 0; i < pred.size(); ++i) {
      (*grad)[i] += scale * (pred[i] - target[i]) / norm;
    }
  }
  return norm;
}

}  // namespace

double robust_penalty(double distance) {
  const double r = distance / 4.0;
  return std::sqrt(1.0 + r * r) - 1.0;
}

CdvLossResult cdv_loss(CdvLossKind kind, const std::vector<Vector>& pred_entity,
                       const std::vector<Vector>& pred_aspect,
                       const std::vector<Vector>& target_entity,
                       const std::vector<Vector>& target_aspect,
                       const std::vector<bool>& include) {
  const std::size_t steps = pred_entity.size();
  check_dims(steps, pred_aspect.size(), "cdv loss aspect predictions");
  check_dims(steps, target_entity.size(), "cdv loss entity targets");
  check_dims(steps, target_aspect.size(), "cdv loss aspect targets");
  if (!include.empty()) check_dims(steps, include.size(), "cdv loss mask");

  CdvLossResult result;
  for (std::size_t t = 0; t < steps; ++t) {
    if (include.empty() || include[t]) ++result.counted_steps;
  }
  if (result.counted_steps == 0) throw EmptyInputError("cdv loss over zero steps");
  const double inv_t = 1.0 / static_cast<double>(result.counted_steps);

  result.d_entity.resize(steps);
  result.d_aspect.resize(steps);
  double total = 0.0;
  for (std::size_t t = 0; t < steps; ++t) {
    result.d_entity[t].assign(pred_entity[t].size(), 0.0);
    result.d_aspect[t].assign(pred_aspect[t].size(), 0.0);
    if (!include.empty() && !include[t]) continue;
    // Distances first, then the slope of the penalty at d.
    const double de = distance_with_grad(pred_entity[t], target_entity[t], nullptr, 0.0);
    const double da = distance_with_grad(pred_aspect[t], target_aspect[t], nullptr, 0.0);
    const double d = de + da;
    double slope = 1.0;
    if (kind == CdvLossKind::kRobust) {
      total += robust_penalty(d);
      slope = (d / 16.0) / std::sqrt(1.0 + (d / 4.0) * (d / 4.0));
    } else {
      total += d;
    }
    distance_with_grad(pred_entity[t], target_entity[t], &result.d_entity[t], slope * inv_t);
    distance_with_grad(pred_aspect[t], target_aspect[t], &result.d_aspect[t], slope * inv_t);
  }
  result.value = total * inv_t;
  return result;
}

double plain_cdv_loss(const std::vector<Vector>& pred_entity,
                      const std::vector<Vector>& pred_aspect,
                      const std::vector<Vector>& target_entity,
                      const std::vector<Vector>& target_aspect) {
  return cdv_loss(CdvLossKind::kPlain, pred_entity, pred_aspect, target_entity, target_aspect)
      .value;
}

double robust_cdv_loss(const std::vector<Vector>& pred_entity,
                       const std::vector<Vector>& pred_aspect,
                       const std::vector<Vector>& target_entity,
                       const std::vector<Vector>& target_aspect) {
  return cdv_loss(CdvLossKind::kRobust, pred_entity, pred_aspect, target_entity, target_aspect)
      .value;
}

BpmllResult bpmll_loss(std::span<const double> scores, const std::vector<bool>& positives) {
  check_dims(scores.size(), positives.size(), "bpmll labels");
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    (positives[i] ? pos : neg).push_back(i);
  }
  if (pos.empty() || neg.empty()) {
    throw DegenerateLabelError("bpmll needs at least one positive and one negative label (got " +
                               std::to_string(pos.size()) + " positives of " +
                               std::to_string(scores.size()) + ")");
  }
  const double norm = 1.0 / (static_cast<double>(pos.size()) * static_cast<double>(neg.size()));

  // exp(-(c_p - c_q)) = exp(-c_p) * exp(c_q)
  std::vector<double> exp_neg_pos(pos.size()), exp_neg(neg.size());
  double sum_pos = 0.0, sum_neg = 0.0;
  for (std::size_t a = 0; a < pos.size(); ++a) {
    exp_neg_pos[a] = std::exp(-scores[pos[a]]);
    sum_pos += exp_neg_pos[a];
  }
  for (std::size_t b = 0; b < neg.size(); ++b) {
    exp_neg[b] = std::exp(scores[neg[b]]);
    sum_neg += exp_neg[b];
  }

  BpmllResult result;
  result.value = norm * sum_pos * sum_neg;
  result.d_scores.assign(scores.size(), 0.0);
  for (std::size_t a = 0; a < pos.size(); ++a) {
    result.d_scores[pos[a]] = -norm * exp_neg_pos[a] * sum_neg;
  }
  for (std::size_t b = 0; b < neg.size(); ++b) {
    result.d_scores[neg[b]] = norm * exp_neg[b] * sum_pos;
  }
  return result;
}

}  // namespace cdv::nn
