#pragma once

#include <span>
#include <vector>

#include "cdv/tensor.hpp"

namespace cdv::nn {

enum class CdvLossKind { kPlain, kRobust };

struct CdvLossResult {
  double value = 0.0;
  // Gradients w.r.t. the predictions, one per step (zero for masked steps).
  std::vector<Vector> d_entity;
  std::vector<Vector> d_aspect;
  std::size_t counted_steps = 0;
};

/// Multi-task distance loss averaged over steps. With kPlain each step costs
/// d_t = |e_hat - e| + |a_hat - a|; kRobust uses sqrt(1 + (d_t/4)^2) - 1.
/// Steps whose include flag is false are skipped and do not count toward T.
CdvLossResult cdv_loss(CdvLossKind kind, const std::vector<Vector>& pred_entity,
                       const std::vector<Vector>& pred_aspect,
                       const std::vector<Vector>& target_entity,
                       const std::vector<Vector>& target_aspect,
                       const std::vector<bool>& include = {});

double plain_cdv_loss(const std::vector<Vector>& pred_entity,
                      const std::vector<Vector>& pred_aspect,
                      const std::vector<Vector>& target_entity,
                      const std::vector<Vector>& target_aspect);

double robust_cdv_loss(const std::vector<Vector>& pred_entity,
                       const std::vector<Vector>& pred_aspect,
                       const std::vector<Vector>& target_entity,
                       const std::vector<Vector>& target_aspect);

// Per-step robust penalty sqrt(1 + (d/4)^2) - 1.
double robust_penalty(double distance);

struct BpmllResult {
  double value = 0.0;
  Vector d_scores;
};

/// Pairwise exponential ranking loss over positive/negative label pairs,
/// normalised by |Y| |Y-bar|. Throws DegenerateLabelError when either side is
/// empty.
BpmllResult bpmll_loss(std::span<const double> scores, const std::vector<bool>& positives);

}  // namespace cdv::nn
