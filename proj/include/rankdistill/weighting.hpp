#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "rankdistill/core.hpp"
#include "rankdistill/models.hpp"

namespace rankdistill {

enum class WeightMode {
  kUniform,
  kReciprocal,
  kGeometricRho,
  kGeometricLambda,
  kDiscrepancy,
  kHybrid,
};

std::string to_string(WeightMode mode);
WeightMode parse_weight_mode(const std::string& name);

/// Per-rank weights for the distillation term over the teacher's top-K.
struct WeightConfig {
  WeightMode mode = WeightMode::kHybrid;
  /// Static scheme used as w^a by hybrid mode (and during its warm-up).
  WeightMode position_mode = WeightMode::kGeometricLambda;
  double lambda = 1.0;  // w_r ~ exp(-r / lambda)
  double rho = 0.1;     // w_r ~ rho (1 - rho)^r
  double mu = 0.1;      // tanh sharpness for the discrepancy gate
  std::size_t epsilon = 20;
  std::size_t warmup = 0;  // epochs using w^a only

  void validate() const;
  [[nodiscard]] bool needs_rank_estimates(std::size_t epoch) const;
};

/// Normalized static position weights, length K, strictly positive, summing to 1.
/// Discrepancy mode has no static scheme and yields uniform; hybrid yields its w^a.
std::vector<double> position_weights(std::size_t K, const WeightConfig& config);

struct RankEstimate {
  std::size_t rank = 1;     // r-hat >= 1
  std::size_t hits = 0;     // sampled items scoring strictly above the target
  std::size_t samples = 1;  // draws actually used
};

/// Sampled rank estimator over a pool of scores.
///
/// `target` indexes the pool entry being ranked. min(epsilon, N-1) other entries are
/// drawn without replacement; r-hat = floor(hits * (N-1) / samples) + 1. A single-item
/// pool gives rank 1.
RankEstimate estimate_rank_from_scores(std::span<const double> pool_scores, std::size_t target,
                                       std::size_t epsilon, std::mt19937_64& rng);

/// Same estimator scoring pool items with `student`. `pool` must contain `target_item`.
RankEstimate estimate_rank(const ScoringModel& student, const QueryContext& q,
                           ItemId target_item, std::span<const ItemId> pool,
                           std::size_t epsilon, std::mt19937_64& rng);

/// w^b_r = tanh*(max(mu (r-hat_r - r), 0)) with tanh*(x) = 2 s(2x) - 1, teacher rank r = 1..K.
std::vector<double> discrepancy_weights(std::span<const std::size_t> student_ranks, double mu);

struct HybridWeights {
  std::vector<double> weights;
  bool zero_pressure = false;  // every product was zero; weights are all zero
};

HybridWeights hybrid_weights(std::span<const double> wa, std::span<const double> wb);

/// Weights in force at `epoch`. `student_ranks` is only invoked when the mode needs
/// fresh rank estimates.
std::vector<double> effective_weights(std::size_t epoch, std::size_t K, const WeightConfig& config,
                                      const std::function<std::vector<std::size_t>()>& student_ranks);

}  // namespace rankdistill
