#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "rankdistill/core.hpp"
#include "rankdistill/error.hpp"
#include "rankdistill/models.hpp"
#include "rankdistill/weighting.hpp"

namespace rankdistill {

/// Teacher's top-K unlabeled items for one training query, best first.
struct TopKRanking {
  std::size_t query = 0;  // index into Dataset::train
  std::vector<ItemId> items;
  std::vector<double> teacher_scores;

  friend bool operator==(const TopKRanking&, const TopKRanking&) = default;
};

enum class RankingLossKind { kPointwise, kPairwise };

std::string to_string(RankingLossKind kind);
RankingLossKind parse_ranking_loss(const std::string& name);

struct TrainConfig {
  std::size_t epochs = 30;
  double lr = 0.05;
  double l2 = 1e-4;
  std::size_t negatives = 3;  // per positive
  double alpha = 0.5;
  std::size_t K = 10;
  WeightConfig weights;
  std::uint64_t seed = 1;
  RankingLossKind loss = RankingLossKind::kPointwise;
  double init_scale = 0.01;

  void validate() const;
};

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;  // mean combined loss per training query
  double validation_map = 0.0;
  double wall_seconds = 0.0;
  std::size_t zero_pressure_queries = 0;
};

struct TrainResult {
  ScoringModel model;        // best-validation-MAP epoch
  ScoringModel final_model;  // after the last epoch
  std::size_t best_epoch = 0;
  double best_validation_map = 0.0;
  std::vector<EpochLog> log;

  [[nodiscard]] std::string log_jsonl() const;
};

/// Training diverged. Carries the last finite (best-so-far) model.
class DivergenceError : public NumericError {
 public:
  DivergenceError(const std::string& what, std::shared_ptr<const ScoringModel> last_finite)
      : NumericError(what), last_finite_(std::move(last_finite)) {}
  [[nodiscard]] const std::shared_ptr<const ScoringModel>& last_finite() const {
    return last_finite_;
  }

 private:
  std::shared_ptr<const ScoringModel> last_finite_;
};

/// Draws `count` distinct items uniformly from [0, num_items) minus `excluded` (sorted).
/// Returns every allowed item when fewer than `count` remain.
std::vector<ItemId> sample_negatives(std::size_t num_items, std::span<const ItemId> excluded,
                                     std::size_t count, std::mt19937_64& rng);

/// Ranking-loss-only SGD. Alpha, K and the weighting config are ignored.
TrainResult train_teacher(const Dataset& dataset, std::size_t dim, const TrainConfig& config);

/// Top-K unlabeled items per training query by (score desc, id asc).
/// `threads` > 1 splits queries across workers; output is identical to the serial run.
std::vector<TopKRanking> generate_topk(const ScoringModel& teacher, const Dataset& dataset,
                                       std::size_t K, std::size_t threads = 1);

/// Student training on (1 - alpha) * ranking + alpha * weighted distillation.
/// At alpha = 0 this is exactly train_teacher at the student dimension.
TrainResult distill_train(const Dataset& dataset, std::span<const TopKRanking> teacher_topk,
                          std::size_t dim, const TrainConfig& config);

/// topk.tsv: `query \t K \t item:score,...` with shortest round-trip scores.
void save_topk(std::span<const TopKRanking> topk, const std::filesystem::path& path);
std::vector<TopKRanking> load_topk(const std::filesystem::path& path);

/// Shortest decimal that parses back to the same double.
std::string format_double(double x);

}  // namespace rankdistill
