#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rankdistill/core.hpp"

namespace rankdistill {

/// Anything that can score candidate items for a query. Higher is better.
class Ranker {
 public:
  virtual ~Ranker() = default;
  virtual void score_into(const QueryContext& q, std::span<const ItemId> candidates,
                          std::span<double> out) const = 0;
  [[nodiscard]] virtual std::size_t parameter_count() const = 0;
  /// Embedding-table parameters only; equals parameter_count() when there are none.
  [[nodiscard]] virtual std::size_t embedding_parameter_count() const {
    return parameter_count();
  }
};

/// Orders candidates by descending score, ties by ascending item id.
std::vector<ItemId> rank_candidates(std::span<const ItemId> candidates,
                                    std::span<const double> scores);

using ItemGrad = std::pair<ItemId, double>;

/// Sparse parameter gradient for one query: dense rows for the query user and the
/// touched history / target items.
struct ParamGradient {
  UserId user = 0;
  std::vector<double> user_row;
  std::vector<std::pair<ItemId, std::vector<double>>> item_in_rows;
  std::vector<std::pair<ItemId, std::vector<double>>> item_out_rows;
  std::vector<std::pair<ItemId, double>> bias;
};

/// Mean-pooled sequential latent-factor model:
///   score(q, i) = (u_q + mean_l p_l) . v_i + b_i
/// with separate history-side (p) and target-side (v) item tables.
class ScoringModel final : public Ranker {
 public:
  ScoringModel() = default;
  /// Zero-initialized model. Throws ConfigError when dim == 0.
  ScoringModel(std::size_t num_users, std::size_t num_items, std::size_t dim);

  /// Uniform(-scale, scale) initialization from a seeded generator.
  static ScoringModel random(std::size_t num_users, std::size_t num_items, std::size_t dim,
                             std::uint64_t seed, double scale = 0.01);

  [[nodiscard]] std::size_t num_users() const { return num_users_; }
  [[nodiscard]] std::size_t num_items() const { return num_items_; }
  [[nodiscard]] std::size_t dim() const { return dim_; }

  [[nodiscard]] double score(const QueryContext& q, ItemId item) const;
  [[nodiscard]] std::vector<double> score_all(const QueryContext& q,
                                              std::span<const ItemId> candidates) const;
  void score_into(const QueryContext& q, std::span<const ItemId> candidates,
                  std::span<double> out) const override;

  /// h = u_q + mean of history embeddings.
  [[nodiscard]] std::vector<double> query_vector(const QueryContext& q) const;

  /// Chain rule from dLoss/dscore to the touched parameters.
  [[nodiscard]] ParamGradient backward(const QueryContext& q,
                                       std::span<const ItemGrad> grads) const;

  /// One SGD step: theta <- theta - lr * (grad + l2 * theta) on every touched row.
  /// Throws NumericError and leaves the model unchanged if any update is non-finite.
  void gradient_step(const QueryContext& q, std::span<const ItemGrad> grads, double lr,
                     double l2);

  [[nodiscard]] std::size_t parameter_count() const override;
  [[nodiscard]] std::size_t embedding_parameter_count() const override;

  std::span<double> user_row(UserId u) { return row(user_, u); }
  std::span<double> item_in_row(ItemId i) { return row(item_in_, i); }
  std::span<double> item_out_row(ItemId i) { return row(item_out_, i); }
  double& bias(ItemId i) { return bias_.at(i); }
  [[nodiscard]] std::span<const double> user_row(UserId u) const { return row(user_, u); }
  [[nodiscard]] std::span<const double> item_in_row(ItemId i) const { return row(item_in_, i); }
  [[nodiscard]] std::span<const double> item_out_row(ItemId i) const {
    return row(item_out_, i);
  }
  [[nodiscard]] double bias(ItemId i) const { return bias_.at(i); }

  /// All parameters in checkpoint order: user, item_in, item_out, bias.
  [[nodiscard]] std::vector<double> flat_parameters() const;
  void set_flat_parameters(std::span<const double> flat);

  [[nodiscard]] bool all_finite() const;

  /// Exact (bitwise for finite values) parameter equality.
  friend bool operator==(const ScoringModel& a, const ScoringModel& b) {
    return a.num_users_ == b.num_users_ && a.num_items_ == b.num_items_ && a.dim_ == b.dim_ &&
           a.user_ == b.user_ && a.item_in_ == b.item_in_ && a.item_out_ == b.item_out_ &&
           a.bias_ == b.bias_;
  }

 private:
  std::span<double> row(std::vector<double>& table, std::size_t r);
  [[nodiscard]] std::span<const double> row(const std::vector<double>& table,
                                            std::size_t r) const;
  void check_query(const QueryContext& q) const;

  std::size_t num_users_ = 0;
  std::size_t num_items_ = 0;
  std::size_t dim_ = 0;
  std::vector<double> user_;
  std::vector<double> item_in_;
  std::vector<double> item_out_;
  std::vector<double> bias_;
};

std::size_t parameter_count(std::size_t num_users, std::size_t num_items, std::size_t dim);

/// Checkpoint directory: model.json (dims, seed, free-form hyper-parameters) plus
/// params.bin (little-endian float64, tables in the order user, item_in, item_out, bias).
void save_checkpoint(const ScoringModel& model, const std::filesystem::path& dir,
                     std::uint64_t seed, const std::string& hyper_json = "{}");
ScoringModel load_checkpoint(const std::filesystem::path& dir);

// ---------------------------------------------------------------------------
// Non-sequential baselines

enum class BaselineKind { kPop, kItemCF, kBpr };

struct BprConfig {
  std::size_t dim = 16;
  std::size_t epochs = 30;
  double lr = 0.05;
  double l2 = 1e-4;
  double init_scale = 0.01;
  std::uint64_t seed = 1;
};

class BaselineModel final : public Ranker {
 public:
  explicit BaselineModel(BaselineKind kind, std::size_t neighbors = 20, BprConfig bpr = {});

  /// Fits on training actions only.
  void fit(const Dataset& dataset);

  /// POP from explicit per-item frequencies.
  void fit_popularity(std::vector<double> frequencies);
  /// ItemCF from per-user item sets (sorted, unique).
  void fit_item_cf(std::span<const std::vector<ItemId>> user_items, std::size_t num_items);

  [[nodiscard]] BaselineKind kind() const { return kind_; }
  [[nodiscard]] bool fitted() const { return fitted_; }

  void score_into(const QueryContext& q, std::span<const ItemId> candidates,
                  std::span<double> out) const override;
  [[nodiscard]] std::size_t parameter_count() const override;

  /// Neighbor list of an item: (neighbor, Jaccard), descending similarity, ties by id.
  [[nodiscard]] const std::vector<std::pair<ItemId, double>>& neighbors(ItemId item) const;

  /// BPR parameters; exposed for tests.
  ScoringModel& bpr_model() { return bpr_; }

 private:
  BaselineKind kind_;
  std::size_t k_;
  BprConfig bpr_config_;
  bool fitted_ = false;
  std::vector<double> popularity_;
  std::vector<std::vector<std::pair<ItemId, double>>> neighbors_;
  ScoringModel bpr_;  // history tables unused; score = u . v + b
};

std::vector<ItemId> baseline_rank(const BaselineModel& model, const QueryContext& q,
                                  std::span<const ItemId> candidates);

}  // namespace rankdistill
