#include "rankdistill/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "rankdistill/eval.hpp"
#include "rankdistill/losses.hpp"

namespace rankdistill {
namespace {

enum Stream : std::uint64_t { kInitStream = 0, kSamplingStream = 1, kRankStream = 2 };

std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
  std::vector<std::uint32_t> words{static_cast<std::uint32_t>(seed),
                                   static_cast<std::uint32_t>(seed >> 32)};
  for (auto p : path) {
    words.push_back(static_cast<std::uint32_t>(p));
    words.push_back(static_cast<std::uint32_t>(p >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

std::vector<ItemId> unlabeled_pool(const Dataset& dataset, UserId user) {
  const auto& positives = dataset.train_positives[user];
  std::vector<ItemId> pool;
  pool.reserve(dataset.num_items - positives.size());
  for (ItemId i = 0; i < dataset.num_items; ++i) {
    if (!std::binary_search(positives.begin(), positives.end(), i)) pool.push_back(i);
  }
  return pool;
}

bool has_validation_queries(const Dataset& dataset) {
  QueryContext q;
  for (UserId u = 0; u < dataset.num_users; ++u) {
    if (!dataset.validation_items[u].empty() && dataset.validation_context(u, q)) return true;
  }
  return false;
}

LossGrad ranking_term(const ScoringModel& model, const LabeledQuery& lq,
                      std::span<const ItemId> negatives, RankingLossKind kind) {
  std::vector<ItemId> items;
  items.reserve(negatives.size() + 1);
  items.push_back(lq.target);
  items.insert(items.end(), negatives.begin(), negatives.end());
  const auto scores = model.score_all(lq.context, items);
  std::vector<ItemScore> scored(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) scored[i] = {items[i], scores[i]};
  if (kind == RankingLossKind::kPointwise) {
    return pointwise_loss(std::span(scored).first(1), std::span(scored).subspan(1));
  }
  PairSet pairs;
  pairs.reserve(negatives.size());
  for (auto n : negatives) pairs.emplace_back(lq.target, n);
  return pairwise_loss(scored, pairs);
}

// Shared SGD loop. A null `topk` (or alpha == 0) trains on the ranking loss alone.
TrainResult run_training(const Dataset& dataset, std::span<const TopKRanking> topk,
                         std::size_t dim, const TrainConfig& config) {
  config.validate();
  if (dataset.train.empty()) throw ConfigError("dataset has no training pairs");
  const bool distill = !topk.empty() && config.alpha > 0.0;
  const bool ranking = config.alpha < 1.0 || !distill;

  TrainResult result;
  ScoringModel model = ScoringModel::random(dataset.num_users, dataset.num_items, dim,
                                            derive_seed(config.seed, {kInitStream}),
                                            config.init_scale);
  std::mt19937_64 rng(derive_seed(config.seed, {kSamplingStream}));
  const bool validate = has_validation_queries(dataset);
  double best_map = -1.0;

  std::vector<std::size_t> order(dataset.train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<ItemId> excluded;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), rng);
    CompensatedSum epoch_loss;
    std::size_t zero_pressure = 0;

    for (auto qi : order) {
      const auto& lq = dataset.train[qi];
      const auto& positives = dataset.train_positives[lq.context.user];

      LossGrad rank_loss;
      if (ranking) {
        std::span<const ItemId> exclude = positives;
        if (distill) {
          // Teacher top-K items are positives of the distillation term; never negatives.
          std::vector<ItemId> extra = topk[qi].items;
          std::sort(extra.begin(), extra.end());
          excluded.clear();
          std::set_union(positives.begin(), positives.end(), extra.begin(), extra.end(),
                         std::back_inserter(excluded));
          exclude = excluded;
        }
        const auto negatives = sample_negatives(dataset.num_items, exclude, config.negatives, rng);
        rank_loss = ranking_term(model, lq, negatives, config.loss);
      }

      LossGrad distill_loss;
      if (distill) {
        const auto& t = topk[qi];
        const auto student_scores = model.score_all(lq.context, t.items);
        auto ranks = [&] {
          std::mt19937_64 rank_rng(derive_seed(config.seed, {kRankStream, epoch, qi}));
          const auto pool = unlabeled_pool(dataset, lq.context.user);
          std::vector<std::size_t> r(t.items.size());
          for (std::size_t k = 0; k < t.items.size(); ++k) {
            r[k] = estimate_rank(model, lq.context, t.items[k], pool, config.weights.epsilon,
                                 rank_rng)
                       .rank;
          }
          return r;
        };
        const auto w = effective_weights(epoch, t.items.size(), config.weights, ranks);
        if (std::all_of(w.begin(), w.end(), [](double x) { return x == 0.0; })) ++zero_pressure;
        distill_loss = distillation_loss(t.items, student_scores, w);
      }

      const LossGrad total = distill ? combined_loss(rank_loss, distill_loss, config.alpha) : rank_loss;
      if (!std::isfinite(total.value)) {
        throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch),
                              std::make_shared<ScoringModel>(epoch ? result.model : model));
      }
      try {
        model.gradient_step(lq.context, total.grads, config.lr, config.l2);
      } catch (const NumericError& e) {
        throw DivergenceError(std::string(e.what()) + " at epoch " + std::to_string(epoch),
                              std::make_shared<ScoringModel>(epoch ? result.model : model));
      }
      epoch_loss.add(total.value);
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.train_loss = epoch_loss.value() / static_cast<double>(order.size());
    entry.zero_pressure_queries = zero_pressure;
    entry.validation_map = validate ? validation_map(model, dataset) : 0.0;
    entry.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.log.push_back(entry);

    if (!validate || entry.validation_map > best_map) {
      best_map = entry.validation_map;
      result.model = model;
      result.best_epoch = epoch;
    }
  }
  result.best_validation_map = std::max(best_map, 0.0);
  result.final_model = std::move(model);
  return result;
}

}  // namespace

std::string to_string(RankingLossKind kind) {
  return kind == RankingLossKind::kPointwise ? "pointwise" : "pairwise";
}

RankingLossKind parse_ranking_loss(const std::string& name) {
  if (name == "pointwise") return RankingLossKind::kPointwise;
  if (name == "pairwise") return RankingLossKind::kPairwise;
  throw ConfigError("unknown ranking loss '" + name + "'");
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (!(lr > 0.0 && std::isfinite(lr))) throw ConfigError("lr must be a positive real");
  if (!(l2 >= 0.0 && std::isfinite(l2))) throw ConfigError("l2 must be non-negative");
  if (negatives < 1) throw ConfigError("negatives per positive must be >= 1");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
  if (K < 1) throw ConfigError("K must be >= 1");
  if (!(init_scale >= 0.0)) throw ConfigError("init_scale must be non-negative");
  weights.validate();
}

std::string TrainResult::log_jsonl() const {
  std::string out;
  for (const auto& e : log) {
    nlohmann::ordered_json j;
    j["epoch"] = e.epoch;
    j["train_loss"] = e.train_loss;
    j["validation_map"] = e.validation_map;
    j["wall_seconds"] = e.wall_seconds;
    j["zero_pressure_queries"] = e.zero_pressure_queries;
    out += j.dump() + "\n";
  }
  return out;
}

std::vector<ItemId> sample_negatives(std::size_t num_items, std::span<const ItemId> excluded,
                                     std::size_t count, std::mt19937_64& rng) {
  std::size_t blocked = 0;
  for (std::size_t i = 0; i < excluded.size(); ++i) {
    if (excluded[i] < num_items && (i == 0 || excluded[i] != excluded[i - 1])) ++blocked;
  }
  const std::size_t allowed = num_items - blocked;
  if (allowed == 0) throw ConfigError("no unlabeled items left to sample negatives from");
  std::vector<ItemId> out;
  auto is_excluded = [&](ItemId i) {
    return std::binary_search(excluded.begin(), excluded.end(), i);
  };
  if (count >= allowed) {
    for (ItemId i = 0; i < num_items; ++i) {
      if (!is_excluded(i)) out.push_back(i);
    }
    return out;
  }
  std::uniform_int_distribution<ItemId> pick(0, static_cast<ItemId>(num_items - 1));
  out.reserve(count);
  while (out.size() < count) {
    const ItemId i = pick(rng);
    if (is_excluded(i) || std::find(out.begin(), out.end(), i) != out.end()) continue;
    out.push_back(i);
  }
  return out;
}

TrainResult train_teacher(const Dataset& dataset, std::size_t dim, const TrainConfig& config) {
  if (dim < 1) throw ConfigError("teacher dimension must be >= 1");
  return run_training(dataset, {}, dim, config);
}

std::vector<TopKRanking> generate_topk(const ScoringModel& teacher, const Dataset& dataset,
                                       std::size_t K, std::size_t threads) {
  if (K < 1) throw ConfigError("K must be >= 1");
  std::vector<TopKRanking> out(dataset.train.size());
  for (std::size_t qi = 0; qi < dataset.train.size(); ++qi) {
    const auto user = dataset.train[qi].context.user;
    const std::size_t pool = dataset.num_items - dataset.train_positives[user].size();
    if (K > pool) {
      throw ConfigError("K=" + std::to_string(K) + " exceeds the unlabeled pool (" +
                        std::to_string(pool) + ") of training query " + std::to_string(qi));
    }
  }

  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t qi = begin; qi < end; ++qi) {
      const auto& lq = dataset.train[qi];
      const auto pool = unlabeled_pool(dataset, lq.context.user);
      const auto scores = teacher.score_all(lq.context, pool);
      std::vector<std::size_t> idx(pool.size());
      std::iota(idx.begin(), idx.end(), std::size_t{0});
      std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(K), idx.end(),
                        [&](std::size_t a, std::size_t b) {
                          if (scores[a] != scores[b]) return scores[a] > scores[b];
                          return pool[a] < pool[b];
                        });
      auto& t = out[qi];
      t.query = qi;
      for (std::size_t k = 0; k < K; ++k) {
        t.items.push_back(pool[idx[k]]);
        t.teacher_scores.push_back(scores[idx[k]]);
      }
    }
  };

  const std::size_t n = dataset.train.size();
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    work(0, n);
  } else {
    std::vector<std::jthread> workers;
    const std::size_t chunk = (n + threads - 1) / threads;
    for (std::size_t b = 0; b < n; b += chunk) workers.emplace_back(work, b, std::min(n, b + chunk));
  }
  return out;
}

TrainResult distill_train(const Dataset& dataset, std::span<const TopKRanking> teacher_topk,
                          std::size_t dim, const TrainConfig& config) {
  if (dim < 1) throw ConfigError("student dimension must be >= 1");
  if (teacher_topk.size() != dataset.train.size()) {
    throw ConfigError("top-K cache covers " + std::to_string(teacher_topk.size()) +
                      " queries, dataset has " + std::to_string(dataset.train.size()));
  }
  for (std::size_t qi = 0; qi < teacher_topk.size(); ++qi) {
    const auto& t = teacher_topk[qi];
    if (t.query != qi || t.items.empty() || t.items.size() != t.teacher_scores.size()) {
      throw ConfigError("top-K cache entry " + std::to_string(qi) + " is malformed");
    }
  }
  return run_training(dataset, teacher_topk, dim, config);
}

std::string format_double(double x) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, ptr);
}

void save_topk(std::span<const TopKRanking> topk, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& t : topk) {
    out << t.query << '\t' << t.items.size() << '\t';
    for (std::size_t k = 0; k < t.items.size(); ++k) {
      if (k) out << ',';
      out << t.items[k] << ':' << format_double(t.teacher_scores[k]);
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

std::vector<TopKRanking> load_topk(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw MissingArtifactError("missing top-K cache " + path.string());
  std::ifstream in(path);
  std::vector<TopKRanking> out;
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string query, k, body;
    if (!std::getline(ss, query, '\t') || !std::getline(ss, k, '\t') || !std::getline(ss, body)) {
      throw ParseError(line_no, "expected query \\t K \\t entries");
    }
    TopKRanking t;
    std::size_t declared = 0;
    try {
      t.query = std::stoul(query);
      declared = std::stoul(k);
    } catch (const std::exception&) {
      throw ParseError(line_no, "bad query index or K");
    }
    std::istringstream entries(body);
    for (std::string e; std::getline(entries, e, ',');) {
      const auto colon = e.find(':');
      if (colon == std::string::npos) throw ParseError(line_no, "entry without ':'");
      ItemId item = 0;
      double score = 0.0;
      auto r1 = std::from_chars(e.data(), e.data() + colon, item);
      auto r2 = std::from_chars(e.data() + colon + 1, e.data() + e.size(), score);
      if (r1.ec != std::errc{} || r2.ec != std::errc{} || r2.ptr != e.data() + e.size()) {
        throw ParseError(line_no, "bad entry '" + e + "'");
      }
      t.items.push_back(item);
      t.teacher_scores.push_back(score);
    }
    if (t.items.size() != declared) throw ParseError(line_no, "entry count does not match K");
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace rankdistill
