#pragma once

#include <span>
#include <utility>
#include <vector>

#include "rankdistill/core.hpp"
#include "rankdistill/models.hpp"

namespace rankdistill {

/// Loss value plus dLoss/dscore per item. Each item appears at most once in grads.
struct LossGrad {
  double value = 0.0;
  std::vector<ItemGrad> grads;

  /// Adds g to item's gradient, inserting it if absent.
  void accumulate(ItemId item, double g);
  [[nodiscard]] double grad(ItemId item) const;  // 0 when absent
};

struct ItemScore {
  ItemId item = 0;
  double score = 0.0;
};

/// (winner, loser) pairs; winner should outrank loser.
using PairSet = std::vector<std::pair<ItemId, ItemId>>;

double sigmoid(double x);
/// log(1 + e^x) without overflow.
double softplus(double x);

/// -sum_pos log s(y) - sum_neg log(1 - s(y)).
LossGrad pointwise_loss(std::span<const ItemScore> positives, std::span<const ItemScore> negatives);

/// -sum log s(y_w - y_l) over pairs.
LossGrad pairwise_loss(std::span<const ItemScore> scores, const PairSet& pairs);

/// Weighted point-wise loss over the teacher's top-K; all K entries are positives.
/// grads are never positive.
LossGrad distillation_loss(std::span<const ItemId> topk, std::span<const double> student_scores,
                           std::span<const double> weights);

/// (1 - alpha) * ranking + alpha * distill, gradients merged by item.
LossGrad combined_loss(const LossGrad& ranking, const LossGrad& distill, double alpha);

}  // namespace rankdistill
