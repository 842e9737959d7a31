#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "rankdistill/core.hpp"
#include "rankdistill/models.hpp"

namespace rankdistill {

/// |top-n ∩ relevant| / n. `relevant` must be sorted.
double precision_at(std::span<const ItemId> ranked, std::span<const ItemId> relevant, std::size_t n);

/// Binary-relevance nDCG@n; 0 when nothing is relevant.
double ndcg_at(std::span<const ItemId> ranked, std::span<const ItemId> relevant, std::size_t n);

/// AP over the whole ranked list, normalized by |relevant|.
double average_precision(std::span<const ItemId> ranked, std::span<const ItemId> relevant);

/// Mean AP over queries with a nonempty relevant set. Throws EvalError if there are none.
double mean_average_precision(std::span<const std::vector<ItemId>> ranked,
                              std::span<const std::vector<ItemId>> relevant);

/// Neumaier-compensated running sum.
class CompensatedSum {
 public:
  void add(double x);
  [[nodiscard]] double value() const { return sum_ + compensation_; }

 private:
  double sum_ = 0.0;
  double compensation_ = 0.0;
};

enum class EvalSplit { kValidation, kTest };

struct EvalReport {
  std::string name;
  std::map<std::string, double> metrics;  // prec@{3,5,10}, ndcg@{3,5,10}, map
  std::size_t parameter_count = 0;
  std::size_t embedding_parameter_count = 0;
  double inference_seconds = 0.0;
  std::size_t queries = 0;
  std::string hardware;

  [[nodiscard]] std::string to_json() const;
  static EvalReport from_json(const std::string& text);
};

struct EvalOptions {
  EvalSplit split = EvalSplit::kTest;
  /// The timed pass is repeated this many times and the fastest is reported.
  std::size_t timing_repeats = 1;
};

/// Ranks every item except the user's known positives (training for validation;
/// training + validation for test) and scores the held-out items of the split.
EvalReport evaluate_model(const Ranker& model, const Dataset& dataset, const EvalOptions& options = {},
                          const std::string& name = "model");

/// Validation MAP used for best-epoch selection.
double validation_map(const Ranker& model, const Dataset& dataset);

struct ComparisonTable {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
  std::vector<EvalReport> reports;
  std::size_t reference = 0;

  [[nodiscard]] std::string to_text() const;
  [[nodiscard]] std::string to_csv() const;
};

/// Metric table plus parameter and wall-time ratios against the `reference` row.
ComparisonTable compare(const std::vector<EvalReport>& reports, const std::string& reference);

std::string hardware_string();

}  // namespace rankdistill
