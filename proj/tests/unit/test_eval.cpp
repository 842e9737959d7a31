#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "helpers.hpp"
#include "rankdistill/error.hpp"
#include "rankdistill/eval.hpp"

using namespace rankdistill;

namespace {

std::vector<ItemId> sorted(std::vector<ItemId> v) {
  std::sort(v.begin(), v.end());
  return v;
}

// Scores each item by its id.
class IdRanker final : public Ranker {
 public:
  void score_into(const QueryContext&, std::span<const ItemId> c, std::span<double> out) const override {
    for (std::size_t i = 0; i < c.size(); ++i) out[i] = static_cast<double>(c[i]);
  }
  std::size_t parameter_count() const override { return 0; }
};

// Seeded random scores, fresh per call.
class NoiseRanker final : public Ranker {
 public:
  explicit NoiseRanker(std::uint64_t seed) : rng_(seed) {}
  void score_into(const QueryContext&, std::span<const ItemId> c, std::span<double> out) const override {
    std::uniform_real_distribution<double> u(0, 1);
    for (std::size_t i = 0; i < c.size(); ++i) out[i] = u(rng_);
  }
  std::size_t parameter_count() const override { return 0; }

 private:
  mutable std::mt19937_64 rng_;
};

}  // namespace

TEST_SUITE("eval") {
  TEST_CASE("precision examples") {
    const std::vector<ItemId> ranked{4, 2, 9, 1};
    CHECK(precision_at(ranked, sorted({2, 7}), 3) == doctest::Approx(1.0 / 3.0));
    CHECK(precision_at(ranked, std::vector<ItemId>{}, 3) == 0.0);
    CHECK(precision_at(ranked, sorted({4, 2, 9}), 3) == 1.0);
    CHECK_THROWS_AS(precision_at(ranked, std::vector<ItemId>{}, 5), EvalError);
    CHECK_THROWS_AS(precision_at(ranked, std::vector<ItemId>{}, 0), EvalError);
  }

  TEST_CASE("ndcg examples") {
    const std::vector<ItemId> ranked{4, 2, 9, 1};
    CHECK(ndcg_at(ranked, std::vector<ItemId>{2}, 3) == doctest::Approx(1.0 / std::log2(3.0)));
    CHECK(ndcg_at(ranked, std::vector<ItemId>{2}, 3) == doctest::Approx(0.63093).epsilon(1e-5));
    CHECK(ndcg_at(ranked, sorted({4, 2, 9, 1}), 3) == 1.0);
    CHECK(ndcg_at(ranked, std::vector<ItemId>{}, 3) == 0.0);
  }

  TEST_CASE("average precision examples") {
    const std::vector<ItemId> ranked{5, 6, 7, 8};
    CHECK(average_precision(ranked, sorted({5, 7})) == doctest::Approx(5.0 / 6.0));
    std::vector<std::vector<ItemId>> r{{1, 2, 3}, {3, 2, 1}};
    std::vector<std::vector<ItemId>> rel{{1}, {3}};
    CHECK(mean_average_precision(r, rel) == 1.0);
    std::vector<std::vector<ItemId>> none{{}, {}};
    CHECK_THROWS_AS(mean_average_precision(r, none), EvalError);
    // empty relevant sets are skipped, not scored 0
    std::vector<std::vector<ItemId>> some{{1}, {}};
    CHECK(mean_average_precision(r, some) == 1.0);
  }

  TEST_CASE("random-ranking MAP matches the analytic expectation") {
    const std::size_t N = 200, R = 5;
    double expect = 0.0;
    for (std::size_t k = 1; k <= N; ++k) {
      expect += (1.0 / k + (k - 1.0) / k * (R - 1.0) / (N - 1.0)) / N;
    }
    std::mt19937_64 rng(21);
    std::vector<ItemId> items(N);
    std::iota(items.begin(), items.end(), ItemId{0});
    const std::vector<ItemId> rel{0, 1, 2, 3, 4};
    CompensatedSum sum;
    for (int t = 0; t < 10000; ++t) {
      std::shuffle(items.begin(), items.end(), rng);
      sum.add(average_precision(items, rel));
    }
    CHECK(std::abs(sum.value() / 10000 - expect) / expect < 0.02);
  }

  TEST_CASE("metric invariants") {
    std::mt19937_64 rng(8);
    for (int t = 0; t < 300; ++t) {
      const std::size_t n = 3 + rng() % 30;
      std::vector<ItemId> ranked(n);
      std::iota(ranked.begin(), ranked.end(), ItemId{0});
      std::shuffle(ranked.begin(), ranked.end(), rng);
      std::vector<ItemId> rel;
      for (ItemId i = 0; i < n; ++i) {
        if (rng() % 4 == 0) rel.push_back(i);
      }
      std::vector<ItemId> perm(n);
      std::iota(perm.begin(), perm.end(), ItemId{0});
      std::shuffle(perm.begin(), perm.end(), rng);
      std::vector<ItemId> ranked2, rel2;
      for (auto i : ranked) ranked2.push_back(perm[i]);
      for (auto i : rel) rel2.push_back(perm[i]);
      rel2 = sorted(rel2);
      const std::size_t cut = 1 + rng() % n;
      CHECK(precision_at(ranked, rel, cut) == precision_at(ranked2, rel2, cut));
      CHECK(ndcg_at(ranked, rel, cut) == ndcg_at(ranked2, rel2, cut));
      CHECK(average_precision(ranked, rel) == average_precision(ranked2, rel2));
      CHECK(precision_at(ranked, rel, cut) <= 1.0);
      CHECK(ndcg_at(ranked, rel, cut) <= 1.0 + 1e-12);
      CHECK(average_precision(ranked, rel) <= 1.0 + 1e-12);
      if (!rel.empty()) {
        const std::size_t need = std::min(cut, rel.size());
        bool top_all = true;
        for (std::size_t p = 0; p < need; ++p) top_all = top_all && std::binary_search(rel.begin(), rel.end(), ranked[p]);
        CHECK((ndcg_at(ranked, rel, cut) == doctest::Approx(1.0)) == top_all);
      }
    }
  }

  TEST_CASE("item-id ranker finds the max-id test item") {
    // single user, items 0..9, test item is 9
    std::vector<Interaction> its;
    const std::vector<ItemId> seq{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    for (std::size_t t = 0; t < seq.size(); ++t) its.push_back({0, seq[t], static_cast<std::int64_t>(t)});
    auto ds = build_dataset(its, 1, 10, 3, {0.8, 0.1, 0.1});
    REQUIRE(ds.test_items[0] == std::vector<ItemId>{9});
    IdRanker r;
    const auto rep = evaluate_model(r, ds);
    CHECK(rep.queries == 1);
    CHECK(rep.metrics.at("map") == 1.0);
    CHECK(rep.metrics.at("prec@3") == doctest::Approx(1.0 / 3.0));
    QueryContext q;
    ds.test_context(0, q);
    std::vector<ItemId> cand{9};
    std::vector<double> s(1);
    r.score_into(q, cand, s);
    CHECK(precision_at(rank_candidates(cand, s), ds.test_items[0], 1) == 1.0);
  }

  TEST_CASE("POP on uniform data is indistinguishable from random") {
    const auto its = generate_synthetic({300, 60, 30, 0.0, 9});
    const auto ds = build_dataset(its, 300, 60, 5);
    BaselineModel pop(BaselineKind::kPop);
    pop.fit(ds);
    const double pop_map = evaluate_model(pop, ds).metrics.at("map");
    std::vector<double> maps;
    for (std::uint64_t s = 0; s < 200; ++s) {
      NoiseRanker noise(s);
      maps.push_back(evaluate_model(noise, ds).metrics.at("map"));
    }
    std::sort(maps.begin(), maps.end());
    CHECK(pop_map >= maps[4]);
    CHECK(pop_map <= maps[195]);
  }

  TEST_CASE("evaluation is deterministic and reports sizes") {
    const auto ds = test::small_synthetic();
    const auto m = ScoringModel::random(ds.num_users, ds.num_items, 4, 2, 0.3);
    const auto a = evaluate_model(m, ds, {EvalSplit::kTest, 2}, "m");
    const auto b = evaluate_model(m, ds, {EvalSplit::kTest, 1}, "m");
    CHECK(a.metrics == b.metrics);
    CHECK(a.parameter_count == m.parameter_count());
    CHECK(a.queries > 0);
    for (const auto& [k, v] : a.metrics) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    const auto back = EvalReport::from_json(a.to_json());
    CHECK(back.metrics == a.metrics);
    CHECK(back.parameter_count == a.parameter_count);
    CHECK(validation_map(m, ds) == evaluate_model(m, ds, {EvalSplit::kValidation, 1}).metrics.at("map"));
  }

  TEST_CASE("no evaluable queries") {
    std::vector<Interaction> its{{0, 1, 0}, {0, 2, 1}};
    const auto ds = build_dataset(its, 1, 3, 5);
    IdRanker r;
    CHECK_THROWS_AS(evaluate_model(r, ds), EvalError);
  }

  TEST_CASE("compare ratios") {
    EvalReport t{"teacher", {{"map", 0.2}}, 1000, 800, 2.0, 10, ""};
    const auto single = compare({t}, "teacher");
    CHECK(single.rows[0][9] == "1.0000");
    CHECK(single.rows[0][10] == "1.0000");
    ScoringModel big(10, 20, 8), small(10, 20, 4);
    EvalReport a{"teacher", {{"map", 0.2}}, big.parameter_count(), big.embedding_parameter_count(), 2.0, 10, ""};
    EvalReport b{"student", {{"map", 0.1}}, small.parameter_count(), small.embedding_parameter_count(), 1.0, 10, ""};
    const auto table = compare({a, b}, "teacher");
    CHECK(table.rows[1][10] == "0.5000");
    CHECK(table.rows[1][12] == "0.5000");
    CHECK(table.rows[1][9] == "0.5238");
    CHECK(table.to_text().find("student") != std::string::npos);
    const auto csv = table.to_csv();
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
  }
}
