#include <algorithm>
#include <numeric>
#include <random>
#include <unordered_map>

#include "rankdistill/error.hpp"
#include "rankdistill/losses.hpp"
#include "rankdistill/models.hpp"

namespace rankdistill {

BaselineModel::BaselineModel(BaselineKind kind, std::size_t neighbors, BprConfig bpr)
    : kind_(kind), k_(neighbors), bpr_config_(bpr) {
  if (kind == BaselineKind::kItemCF && neighbors == 0) {
    throw ConfigError("ItemCF needs at least one neighbor");
  }
}

void BaselineModel::fit_popularity(std::vector<double> frequencies) {
  popularity_ = std::move(frequencies);
  fitted_ = true;
}

void BaselineModel::fit_item_cf(std::span<const std::vector<ItemId>> user_items,
                                std::size_t num_items) {
  // Inverted index: item -> users who interacted with it.
  std::vector<std::vector<std::size_t>> item_users(num_items);
  for (std::size_t u = 0; u < user_items.size(); ++u) {
    for (auto i : user_items[u]) {
      if (i >= num_items) throw IndexError("item id out of range");
      item_users[i].push_back(u);
    }
  }
  neighbors_.assign(num_items, {});
  std::vector<double> co(num_items, 0.0);
  std::vector<ItemId> touched;
  for (ItemId i = 0; i < num_items; ++i) {
    touched.clear();
    for (auto u : item_users[i]) {
      for (auto j : user_items[u]) {
        if (j == i) continue;
        if (co[j] == 0.0) touched.push_back(j);
        co[j] += 1.0;
      }
    }
    auto& list = neighbors_[i];
    list.reserve(touched.size());
    const double ni = static_cast<double>(item_users[i].size());
    for (auto j : touched) {
      const double nj = static_cast<double>(item_users[j].size());
      list.emplace_back(j, co[j] / (ni + nj - co[j]));
      co[j] = 0.0;
    }
    auto better = [](const auto& a, const auto& b) {
      return a.second != b.second ? a.second > b.second : a.first < b.first;
    };
    if (list.size() > k_) {
      std::partial_sort(list.begin(), list.begin() + static_cast<std::ptrdiff_t>(k_), list.end(),
                        better);
      list.resize(k_);
    } else {
      std::sort(list.begin(), list.end(), better);
    }
  }
  fitted_ = true;
}

void BaselineModel::fit(const Dataset& dataset) {
  switch (kind_) {
    case BaselineKind::kPop: {
      std::vector<double> freq(dataset.num_items, 0.0);
      for (std::size_t u = 0; u < dataset.num_users; ++u) {
        const auto& items = dataset.sequences[u].items;
        for (std::size_t t = 0; t < dataset.user_splits[u].train_end; ++t) freq[items[t]] += 1.0;
      }
      fit_popularity(std::move(freq));
      break;
    }
    case BaselineKind::kItemCF:
      fit_item_cf(dataset.train_positives, dataset.num_items);
      break;
    case BaselineKind::kBpr: {
      const auto& c = bpr_config_;
      bpr_ = ScoringModel::random(dataset.num_users, dataset.num_items, c.dim, c.seed,
                                  c.init_scale);
      std::mt19937_64 rng(c.seed + 1);
      std::vector<std::pair<UserId, ItemId>> events;
      for (std::size_t u = 0; u < dataset.num_users; ++u) {
        const auto& items = dataset.sequences[u].items;
        for (std::size_t t = 0; t < dataset.user_splits[u].train_end; ++t) {
          events.emplace_back(static_cast<UserId>(u), items[t]);
        }
      }
      std::uniform_int_distribution<ItemId> any_item(0, static_cast<ItemId>(dataset.num_items - 1));
      QueryContext q;
      for (std::size_t epoch = 0; epoch < c.epochs; ++epoch) {
        std::shuffle(events.begin(), events.end(), rng);
        for (const auto& [u, pos] : events) {
          const auto& positives = dataset.train_positives[u];
          if (positives.size() >= dataset.num_items) continue;
          ItemId neg = any_item(rng);
          while (std::binary_search(positives.begin(), positives.end(), neg)) neg = any_item(rng);
          q.user = u;
          const ItemScore s[] = {{pos, bpr_.score(q, pos)}, {neg, bpr_.score(q, neg)}};
          const auto loss = pairwise_loss(s, {{pos, neg}});
          bpr_.gradient_step(q, loss.grads, c.lr, c.l2);
        }
      }
      fitted_ = true;
      break;
    }
  }
}

void BaselineModel::score_into(const QueryContext& q, std::span<const ItemId> candidates,
                               std::span<double> out) const {
  if (!fitted_) throw StateError("baseline model is not fitted");
  switch (kind_) {
    case BaselineKind::kPop:
      for (std::size_t c = 0; c < candidates.size(); ++c) out[c] = popularity_.at(candidates[c]);
      break;
    case BaselineKind::kItemCF: {
      std::unordered_map<ItemId, double> acc;
      for (auto j : q.history) {
        for (const auto& [n, sim] : neighbors_.at(j)) acc[n] += sim;
      }
      for (std::size_t c = 0; c < candidates.size(); ++c) {
        auto it = acc.find(candidates[c]);
        out[c] = it == acc.end() ? 0.0 : it->second;
      }
      break;
    }
    case BaselineKind::kBpr: {
      // BPR ignores the sequential context.
      QueryContext user_only{q.user, {}};
      bpr_.score_into(user_only, candidates, out);
      break;
    }
  }
}

std::size_t BaselineModel::parameter_count() const {
  switch (kind_) {
    case BaselineKind::kPop:
      return popularity_.size();
    case BaselineKind::kItemCF: {
      std::size_t n = 0;
      for (const auto& l : neighbors_) n += l.size();
      return n;
    }
    case BaselineKind::kBpr:
      return bpr_.dim() * (bpr_.num_users() + bpr_.num_items()) + bpr_.num_items();
  }
  return 0;
}

const std::vector<std::pair<ItemId, double>>& BaselineModel::neighbors(ItemId item) const {
  if (!fitted_ || kind_ != BaselineKind::kItemCF) throw StateError("no ItemCF neighbors fitted");
  return neighbors_.at(item);
}

std::vector<ItemId> baseline_rank(const BaselineModel& model, const QueryContext& q,
                                  std::span<const ItemId> candidates) {
  std::vector<double> scores(candidates.size());
  model.score_into(q, candidates, scores);
  return rank_candidates(candidates, scores);
}

}  // namespace rankdistill
