#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace rankdistill {

using UserId = std::uint32_t;
using ItemId = std::uint32_t;

/// One implicit-feedback event after dense id remapping.
struct Interaction {
  UserId user = 0;
  ItemId item = 0;
  std::int64_t timestamp = 0;

  friend bool operator==(const Interaction&, const Interaction&) = default;
};

/// Dense index -> raw id, for users and items.
struct IdMap {
  std::vector<std::int64_t> users;
  std::vector<std::int64_t> items;
};

struct InteractionLog {
  std::vector<Interaction> interactions;
  IdMap ids;

  [[nodiscard]] std::size_t num_users() const { return ids.users.size(); }
  [[nodiscard]] std::size_t num_items() const { return ids.items.size(); }
};

struct UserSequence {
  UserId user = 0;
  std::vector<ItemId> items;  // ascending timestamp
};

/// The query of the ranking problem: a user plus the last L items, most recent last.
struct QueryContext {
  UserId user = 0;
  std::vector<ItemId> history;

  friend bool operator==(const QueryContext&, const QueryContext&) = default;
};

struct LabeledQuery {
  QueryContext context;
  ItemId target = 0;
};

struct SplitFractions {
  double train = 0.7;
  double validation = 0.1;
  double test = 0.2;
};

/// Per-user chronological split boundaries into the user's sequence.
struct UserSplit {
  std::size_t train_end = 0;       // [0, train_end) training actions
  std::size_t validation_end = 0;  // [train_end, validation_end) validation actions
  std::size_t size = 0;            // [validation_end, size) test actions
};

/// Immutable windowed dataset.
///
/// Training pairs only use targets inside the training range. Validation and test
/// contexts may reach back across the split boundary; only the targets are split-pure.
struct Dataset {
  std::size_t num_users = 0;
  std::size_t num_items = 0;
  std::size_t window = 0;
  SplitFractions splits;

  std::vector<UserSequence> sequences;  // indexed by user id
  std::vector<UserSplit> user_splits;   // indexed by user id

  std::vector<LabeledQuery> train;
  std::vector<LabeledQuery> validation;

  // Indexed by user id. Item sets are sorted and unique.
  std::vector<std::vector<ItemId>> train_positives;
  std::vector<std::vector<ItemId>> validation_items;
  std::vector<std::vector<ItemId>> test_items;

  [[nodiscard]] std::size_t num_interactions() const;

  /// Context for evaluating a user against validation targets (last L training actions).
  /// Returns false when the user has fewer than L training actions.
  bool validation_context(UserId user, QueryContext& out) const;

  /// Context for evaluating a user against test targets: the window slides through
  /// validation actions so it ends right before the first test action.
  bool test_context(UserId user, QueryContext& out) const;

  /// Training positives plus validation items, sorted and unique.
  [[nodiscard]] std::vector<ItemId> train_and_validation_items(UserId user) const;
};

/// Reads `user \t item \t timestamp` rows, remapping raw ids to dense indices in
/// ascending raw-id order. Throws ParseError or EmptyDatasetError.
InteractionLog load_interactions(const std::filesystem::path& path);
InteractionLog parse_interactions(const std::string& text);

/// Builds a log directly from dense ids (synthetic data); the id map is the identity.
InteractionLog make_log(std::vector<Interaction> interactions, std::size_t num_users,
                        std::size_t num_items);

/// Groups by user, stably ordered by timestamp (file order breaks timestamp ties).
std::vector<UserSequence> group_sequences(std::span<const Interaction> interactions,
                                          std::size_t num_users);

/// Ceil-rounded per-user split sizes; train gets ceil(f_train * n), validation gets
/// ceil(f_valid * n) capped to what remains, test the rest.
UserSplit split_user(std::size_t n, const SplitFractions& splits);

Dataset build_dataset(std::span<const Interaction> interactions, std::size_t num_users,
                      std::size_t num_items, std::size_t window,
                      const SplitFractions& splits = {});

struct SyntheticSpec {
  std::size_t num_users = 500;
  std::size_t num_items = 200;
  std::size_t seq_len = 50;
  double sharpness = 5.0;
  std::uint64_t seed = 1;
};

/// Walks a seeded first-order Markov chain whose rows are softmax(sharpness * N(0,1)).
/// All users share the chain; each starts at a uniformly drawn item.
std::vector<Interaction> generate_synthetic(const SyntheticSpec& spec);

/// Row-stochastic transition matrix used by generate_synthetic (row-major).
std::vector<double> synthetic_transitions(const SyntheticSpec& spec);

struct DatasetStats {
  std::size_t users = 0;
  std::size_t items = 0;
  std::size_t interactions = 0;
  double avg_actions_per_user = 0.0;
  std::size_t train_pairs = 0;
  double sparsity = 0.0;
};

DatasetStats dataset_stats(const Dataset& dataset);

/// Writes meta.json, train.tsv, valid.tsv, test.tsv, idmap.tsv and interactions.tsv.
void save_dataset(const Dataset& dataset, const InteractionLog& log, std::uint64_t seed,
                  const std::filesystem::path& dir);

/// Rebuilds the dataset from interactions.tsv and the window/split settings in meta.json.
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace rankdistill
