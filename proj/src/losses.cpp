#include "rankdistill/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "rankdistill/error.hpp"

namespace rankdistill {

void LossGrad::accumulate(ItemId item, double g) {
  auto it = std::find_if(grads.begin(), grads.end(), [&](const ItemGrad& e) { return e.first == item; });
  if (it == grads.end()) {
    grads.emplace_back(item, g);
  } else {
    it->second += g;
  }
}

double LossGrad::grad(ItemId item) const {
  auto it = std::find_if(grads.begin(), grads.end(), [&](const ItemGrad& e) { return e.first == item; });
  return it == grads.end() ? 0.0 : it->second;
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

LossGrad pointwise_loss(std::span<const ItemScore> positives, std::span<const ItemScore> negatives) {
  if (positives.empty() && negatives.empty()) {
    throw DegenerateInputError("pointwise loss needs at least one score");
  }
  LossGrad out;
  // -log s(y) = softplus(-y);  -log(1 - s(y)) = softplus(y)
  for (const auto& p : positives) {
    out.value += softplus(-p.score);
    out.accumulate(p.item, sigmoid(p.score) - 1.0);
  }
  for (const auto& n : negatives) {
    out.value += softplus(n.score);
    out.accumulate(n.item, sigmoid(n.score));
  }
  return out;
}

LossGrad pairwise_loss(std::span<const ItemScore> scores, const PairSet& pairs) {
  auto lookup = [&](ItemId item) {
    auto it = std::find_if(scores.begin(), scores.end(),
                           [&](const ItemScore& s) { return s.item == item; });
    if (it == scores.end()) throw LookupError("no score for item " + std::to_string(item));
    return it->score;
  };
  LossGrad out;
  for (const auto& [winner, loser] : pairs) {
    if (winner == loser) throw ConfigError("pair winner equals loser");
    const double margin = lookup(winner) - lookup(loser);
    out.value += softplus(-margin);
    const double g = sigmoid(margin) - 1.0;
    out.accumulate(winner, g);
    out.accumulate(loser, -g);
  }
  return out;
}

LossGrad distillation_loss(std::span<const ItemId> topk, std::span<const double> student_scores,
                           std::span<const double> weights) {
  if (student_scores.size() != topk.size() || weights.size() != topk.size()) {
    throw ConfigError("distillation loss: top-K, scores and weights must align");
  }
  LossGrad out;
  for (std::size_t r = 0; r < topk.size(); ++r) {
    const double w = weights[r];
    if (!(w >= 0.0)) throw ConfigError("distillation weights must be non-negative");
    out.value += w * softplus(-student_scores[r]);
    out.accumulate(topk[r], w * (sigmoid(student_scores[r]) - 1.0));
  }
  return out;
}

LossGrad combined_loss(const LossGrad& ranking, const LossGrad& distill, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
  if (alpha == 0.0) return ranking;
  if (alpha == 1.0) return distill;
  LossGrad out;
  out.value = (1.0 - alpha) * ranking.value + alpha * distill.value;
  for (const auto& [item, g] : ranking.grads) out.accumulate(item, (1.0 - alpha) * g);
  for (const auto& [item, g] : distill.grads) out.accumulate(item, alpha * g);
  return out;
}

}  // namespace rankdistill
