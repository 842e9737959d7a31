#include "rankdistill/weighting.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rankdistill/error.hpp"

namespace rankdistill {
namespace {

bool is_static(WeightMode m) {
  return m == WeightMode::kUniform || m == WeightMode::kReciprocal ||
         m == WeightMode::kGeometricRho || m == WeightMode::kGeometricLambda;
}

void normalize(std::vector<double>& w) {
  const double sum = std::accumulate(w.begin(), w.end(), 0.0);
  for (auto& x : w) x /= sum;
}

// m distinct draws from {0..N-1} \ {skip} (Floyd's algorithm over N-1 slots).
std::vector<std::size_t> sample_excluding(std::size_t n, std::size_t skip, std::size_t m,
                                          std::mt19937_64& rng) {
  const std::size_t slots = n - 1;
  std::vector<std::size_t> picked;
  picked.reserve(m);
  if (m >= slots) {
    for (std::size_t s = 0; s < slots; ++s) picked.push_back(s);
  } else {
    for (std::size_t j = slots - m; j < slots; ++j) {
      const std::size_t t = std::uniform_int_distribution<std::size_t>(0, j)(rng);
      const bool seen = std::find(picked.begin(), picked.end(), t) != picked.end();
      picked.push_back(seen ? j : t);
    }
  }
  for (auto& s : picked) s = s < skip ? s : s + 1;
  return picked;
}

RankEstimate finish(std::size_t hits, std::size_t samples, std::size_t n) {
  RankEstimate e;
  e.hits = hits;
  e.samples = std::max<std::size_t>(samples, 1);
  e.rank = samples == 0 ? 1 : hits * (n - 1) / samples + 1;
  return e;
}

}  // namespace

std::string to_string(WeightMode mode) {
  switch (mode) {
    case WeightMode::kUniform: return "uniform";
    case WeightMode::kReciprocal: return "reciprocal";
    case WeightMode::kGeometricRho: return "geometric_rho";
    case WeightMode::kGeometricLambda: return "geometric_lambda";
    case WeightMode::kDiscrepancy: return "discrepancy";
    case WeightMode::kHybrid: return "hybrid";
  }
  return "?";
}

WeightMode parse_weight_mode(const std::string& name) {
  for (auto m : {WeightMode::kUniform, WeightMode::kReciprocal, WeightMode::kGeometricRho,
                 WeightMode::kGeometricLambda, WeightMode::kDiscrepancy, WeightMode::kHybrid}) {
    if (to_string(m) == name) return m;
  }
  throw ConfigError("unknown weighting mode '" + name + "'");
}

void WeightConfig::validate() const {
  if (!is_static(position_mode)) {
    throw ConfigError("position_mode must be a static scheme, got " + to_string(position_mode));
  }
  const bool uses_lambda = mode == WeightMode::kGeometricLambda ||
                           (mode == WeightMode::kHybrid && position_mode == WeightMode::kGeometricLambda);
  const bool uses_rho = mode == WeightMode::kGeometricRho ||
                        (mode == WeightMode::kHybrid && position_mode == WeightMode::kGeometricRho);
  if (uses_lambda && !(lambda > 0.0 && std::isfinite(lambda))) {
    throw ConfigError("lambda must be a positive real");
  }
  if (uses_rho && !(rho > 0.0 && rho < 1.0)) throw ConfigError("rho must lie in (0, 1)");
  if (mode == WeightMode::kDiscrepancy || mode == WeightMode::kHybrid) {
    if (!(mu > 0.0 && std::isfinite(mu))) throw ConfigError("mu must be a positive real");
    if (epsilon < 1) throw ConfigError("epsilon must be >= 1");
  }
}

bool WeightConfig::needs_rank_estimates(std::size_t epoch) const {
  return (mode == WeightMode::kDiscrepancy || mode == WeightMode::kHybrid) && epoch >= warmup;
}

std::vector<double> position_weights(std::size_t K, const WeightConfig& config) {
  if (K < 1) throw ConfigError("K must be >= 1");
  config.validate();
  WeightMode mode = config.mode;
  if (mode == WeightMode::kHybrid) mode = config.position_mode;
  if (mode == WeightMode::kDiscrepancy) mode = WeightMode::kUniform;

  std::vector<double> w(K);
  for (std::size_t i = 0; i < K; ++i) {
    const double r = static_cast<double>(i + 1);
    switch (mode) {
      case WeightMode::kUniform:
        w[i] = 1.0;
        break;
      case WeightMode::kReciprocal:
        w[i] = 1.0 / r;
        break;
      case WeightMode::kGeometricRho:
        // rho (1 - rho)^r, scaled by its r = 1 value; the scale cancels on normalizing.
        w[i] = std::exp((r - 1.0) * std::log1p(-config.rho));
        break;
      case WeightMode::kGeometricLambda:
        w[i] = std::exp(-(r - 1.0) / config.lambda);
        break;
      default:
        throw ConfigError("no position weights for mode " + to_string(mode));
    }
  }
  normalize(w);
  return w;
}

RankEstimate estimate_rank_from_scores(std::span<const double> pool_scores, std::size_t target,
                                       std::size_t epsilon, std::mt19937_64& rng) {
  if (pool_scores.empty()) throw ConfigError("rank estimation needs a nonempty pool");
  if (target >= pool_scores.size()) throw IndexError("target outside the pool");
  if (epsilon < 1) throw ConfigError("epsilon must be >= 1");
  const std::size_t n = pool_scores.size();
  const std::size_t m = std::min(epsilon, n - 1);
  const double target_score = pool_scores[target];
  std::size_t hits = 0;
  for (auto idx : sample_excluding(n, target, m, rng)) {
    if (pool_scores[idx] > target_score) ++hits;
  }
  return finish(hits, m, n);
}

RankEstimate estimate_rank(const ScoringModel& student, const QueryContext& q,
                           ItemId target_item, std::span<const ItemId> pool,
                           std::size_t epsilon, std::mt19937_64& rng) {
  if (pool.empty()) throw ConfigError("rank estimation needs a nonempty pool");
  if (epsilon < 1) throw ConfigError("epsilon must be >= 1");
  auto it = std::find(pool.begin(), pool.end(), target_item);
  if (it == pool.end()) throw ConfigError("target item is not in the pool");
  const auto target = static_cast<std::size_t>(it - pool.begin());
  const std::size_t n = pool.size();
  const std::size_t m = std::min(epsilon, n - 1);

  const auto idx = sample_excluding(n, target, m, rng);
  std::vector<ItemId> sampled;
  sampled.reserve(idx.size() + 1);
  sampled.push_back(target_item);
  for (auto i : idx) sampled.push_back(pool[i]);
  const auto scores = student.score_all(q, sampled);
  std::size_t hits = 0;
  for (std::size_t s = 1; s < scores.size(); ++s) {
    if (scores[s] > scores[0]) ++hits;
  }
  return finish(hits, m, n);
}

std::vector<double> discrepancy_weights(std::span<const std::size_t> student_ranks, double mu) {
  if (!(mu > 0.0)) throw ConfigError("mu must be a positive real");
  // tanh*(x) = 2 s(2x) - 1 is tanh(x); large x rounds to 1.0, so cap just below it.
  const double cap = std::nextafter(1.0, 0.0);
  std::vector<double> w(student_ranks.size());
  for (std::size_t i = 0; i < student_ranks.size(); ++i) {
    if (student_ranks[i] < 1) throw ConfigError("student ranks must be >= 1");
    const double gap = static_cast<double>(student_ranks[i]) - static_cast<double>(i + 1);
    w[i] = std::min(std::tanh(std::max(mu * gap, 0.0)), cap);
  }
  return w;
}

HybridWeights hybrid_weights(std::span<const double> wa, std::span<const double> wb) {
  if (wa.size() != wb.size()) throw ConfigError("hybrid weights: length mismatch");
  HybridWeights out;
  out.weights.resize(wa.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < wa.size(); ++i) {
    if (!(wa[i] >= 0.0) || !(wb[i] >= 0.0)) throw ConfigError("hybrid weights must be >= 0");
    out.weights[i] = wa[i] * wb[i];
    sum += out.weights[i];
  }
  if (sum == 0.0) {
    out.zero_pressure = true;
    return out;
  }
  for (auto& x : out.weights) x /= sum;
  return out;
}

std::vector<double> effective_weights(std::size_t epoch, std::size_t K, const WeightConfig& config,
                                      const std::function<std::vector<std::size_t>()>& student_ranks) {
  if (!config.needs_rank_estimates(epoch)) return position_weights(K, config);
  const auto ranks = student_ranks();
  if (ranks.size() != K) throw ConfigError("expected one student rank per top-K entry");
  auto wb = discrepancy_weights(ranks, config.mu);
  if (config.mode == WeightMode::kDiscrepancy) {
    if (std::all_of(wb.begin(), wb.end(), [](double x) { return x == 0.0; })) {
      return std::vector<double>(K, 1.0 / static_cast<double>(K));
    }
    normalize(wb);
    return wb;
  }
  return hybrid_weights(position_weights(K, config), wb).weights;
}

}  // namespace rankdistill
