#include <algorithm>
#include <numeric>
#include <random>

#include "doctest.h"
#include "helpers.hpp"
#include "rankdistill/error.hpp"
#include "rankdistill/losses.hpp"
#include "rankdistill/models.hpp"

using namespace rankdistill;

TEST_SUITE("models") {
  TEST_CASE("zero model scores zero") {
    ScoringModel m(3, 6, 4);
    QueryContext q{1, {0, 2, 5}};
    for (ItemId i = 0; i < 6; ++i) CHECK(m.score(q, i) == 0.0);
  }

  TEST_CASE("hand arithmetic d=1") {
    ScoringModel m(1, 7, 1);
    m.user_row(0)[0] = 0.5;
    for (ItemId j = 0; j < 5; ++j) m.item_in_row(j)[0] = 1.0;
    m.item_out_row(6)[0] = 2.0;
    m.bias(6) = 0.1;
    CHECK(m.score({0, {0, 1, 2, 3, 4}}, 6) == doctest::Approx(3.1).epsilon(1e-15));
  }

  TEST_CASE("history order does not matter") {
    const auto m = ScoringModel::random(2, 10, 6, 9, 0.5);
    QueryContext a{1, {1, 4, 7, 2, 9}};
    QueryContext b{1, {9, 2, 7, 4, 1}};
    for (ItemId i = 0; i < 10; ++i) CHECK(m.score(a, i) == doctest::Approx(m.score(b, i)).epsilon(1e-14));
  }

  TEST_CASE("score_all equals mapped score exactly") {
    const auto m = ScoringModel::random(4, 20, 5, 2, 0.1);
    QueryContext q{3, {0, 19, 7}};
    std::vector<ItemId> all(20);
    std::iota(all.begin(), all.end(), ItemId{0});
    const auto s = m.score_all(q, all);
    for (ItemId i = 0; i < 20; ++i) CHECK(s[i] == m.score(q, i));
    CHECK(m.score_all(q, std::vector<ItemId>{7}) == std::vector<double>{m.score(q, 7)});

    std::vector<ItemId> perm = all;
    std::shuffle(perm.begin(), perm.end(), std::mt19937_64(1));
    const auto sp = m.score_all(q, perm);
    for (std::size_t c = 0; c < perm.size(); ++c) CHECK(sp[c] == s[perm[c]]);
  }

  TEST_CASE("out-of-range ids") {
    ScoringModel m(2, 3, 2);
    CHECK_THROWS_AS(m.score({2, {}}, 0), IndexError);
    CHECK_THROWS_AS(m.score({0, {3}}, 0), IndexError);
    CHECK_THROWS_AS(m.score({0, {}}, 3), IndexError);
  }

  TEST_CASE("no-op updates") {
    auto m = ScoringModel::random(3, 8, 4, 5);
    const auto before = m;
    QueryContext q{0, {1, 2}};
    std::vector<ItemGrad> zero{{3, 0.0}, {4, 0.0}};
    m.gradient_step(q, zero, 0.1, 0.0);
    CHECK(m == before);
    std::vector<ItemGrad> g{{3, 0.7}};
    m.gradient_step(q, g, 0.0, 0.5);
    CHECK(m == before);
  }

  TEST_CASE("non-finite gradient leaves the model unchanged") {
    auto m = ScoringModel::random(3, 8, 4, 5);
    const auto before = m;
    std::vector<ItemGrad> g{{1, std::nan("")}};
    CHECK_THROWS_AS(m.gradient_step({0, {2}}, g, 0.1, 0.0), NumericError);
    CHECK(m == before);
    std::vector<ItemGrad> huge{{1, 1e308}};
    auto m2 = ScoringModel::random(3, 8, 4, 5, 1e300);
    const auto b2 = m2;
    CHECK_THROWS_AS(m2.gradient_step({0, {2}}, huge, 1e300, 0.0), NumericError);
    CHECK(m2 == b2);
  }

  TEST_CASE("sgd step matches the dense formula") {
    auto m = ScoringModel::random(3, 8, 4, 6, 0.1);
    QueryContext q{2, {1, 1, 5}};
    std::vector<ItemGrad> g{{0, 0.3}, {5, -0.2}};
    const auto grad = test::flatten(m, m.backward(q, g));
    auto before = m.flat_parameters();
    m.gradient_step(q, g, 0.05, 0.0);
    const auto after = m.flat_parameters();
    for (std::size_t p = 0; p < before.size(); ++p) {
      CHECK(after[p] == doctest::Approx(before[p] - 0.05 * grad[p]).epsilon(1e-14));
    }
  }

  TEST_CASE("finite differences through the model, d=4") {
    auto m = ScoringModel::random(4, 12, 4, 17, 0.1);
    QueryContext q{1, {3, 7, 3, 0, 11}};
    const std::vector<ItemId> pos{2}, neg{5, 9, 7};
    auto loss_of = [&](const ScoringModel& mm) {
      std::vector<ItemScore> p{{2, mm.score(q, 2)}};
      std::vector<ItemScore> n;
      for (auto i : neg) n.push_back({i, mm.score(q, i)});
      return pointwise_loss(p, n);
    };
    const auto lg = loss_of(m);
    const auto analytic = test::flatten(m, m.backward(q, lg.grads));
    std::vector<std::size_t> touched;
    for (std::size_t p = 0; p < analytic.size(); ++p) {
      if (analytic[p] != 0.0) touched.push_back(p);
    }
    CHECK(touched.size() > 10);
    CHECK(test::fd_worst(m, analytic, [&](const ScoringModel& mm) { return loss_of(mm).value; },
                         touched) < 1e-4);
  }

  TEST_CASE("parameter counting") {
    CHECK(parameter_count(10, 20, 4) == 220);
    ScoringModel t(10, 20, 8), s(10, 20, 4);
    CHECK(s.embedding_parameter_count() * 2 == t.embedding_parameter_count());
    CHECK(t.parameter_count() == 8 * (10 + 40) + 20);
    CHECK_THROWS_AS(ScoringModel(10, 20, 0), ConfigError);
  }

  TEST_CASE("random init is seeded and bounded") {
    const auto a = ScoringModel::random(5, 9, 3, 42);
    const auto b = ScoringModel::random(5, 9, 3, 42);
    const auto c = ScoringModel::random(5, 9, 3, 43);
    CHECK(a == b);
    CHECK_FALSE(a == c);
    for (double x : a.flat_parameters()) CHECK(std::abs(x) <= 0.01);
  }

  TEST_CASE("checkpoint round trip is bit exact") {
    test::TempDir dir;
    const auto m = ScoringModel::random(5, 9, 3, 42, 0.3);
    save_checkpoint(m, dir.path / "ck", 42, R"({"note":1})");
    const auto back = load_checkpoint(dir.path / "ck");
    CHECK(back == m);
    CHECK_THROWS_AS(load_checkpoint(dir.path / "missing"), MissingArtifactError);

    std::filesystem::resize_file(dir.path / "ck" / "params.bin",
                                 std::filesystem::file_size(dir.path / "ck" / "params.bin") - 3);
    CHECK_THROWS_AS(load_checkpoint(dir.path / "ck"), IoError);
  }

  TEST_CASE("rank_candidates ties by id") {
    std::vector<ItemId> c{4, 1, 3, 2};
    std::vector<double> s{1.0, 2.0, 1.0, 0.5};
    CHECK(rank_candidates(c, s) == std::vector<ItemId>{1, 3, 4, 2});
  }
}

TEST_SUITE("baselines") {
  TEST_CASE("POP orders by frequency") {
    BaselineModel pop(BaselineKind::kPop);
    pop.fit_popularity({5, 9, 1});
    CHECK(baseline_rank(pop, {0, {}}, std::vector<ItemId>{0, 1, 2}) == std::vector<ItemId>{1, 0, 2});
  }

  TEST_CASE("unfitted baseline refuses to score") {
    BaselineModel pop(BaselineKind::kPop);
    std::vector<double> out(1);
    CHECK_THROWS_AS(pop.score_into({0, {}}, std::vector<ItemId>{0}, out), StateError);
  }

  TEST_CASE("ItemCF jaccard and fallback ordering") {
    // users: {0,1}, {0,1,2}, {3,4}
    std::vector<std::vector<ItemId>> ui{{0, 1}, {0, 1, 2}, {3, 4}};
    BaselineModel cf(BaselineKind::kItemCF, 20);
    cf.fit_item_cf(ui, 6);
    const auto& n0 = cf.neighbors(0);
    REQUIRE(n0.size() == 2);
    CHECK(n0[0].first == 1);
    CHECK(n0[0].second == doctest::Approx(1.0));
    CHECK(n0[1].first == 2);
    CHECK(n0[1].second == doctest::Approx(0.5));
    // history {5} has no neighbors at all: ascending id
    CHECK(baseline_rank(cf, {0, {5}}, std::vector<ItemId>{4, 2, 3}) == std::vector<ItemId>{2, 3, 4});
    // history {0}: 1 before 2, unrelated items after
    CHECK(baseline_rank(cf, {0, {0}}, std::vector<ItemId>{3, 2, 1}) == std::vector<ItemId>{1, 2, 3});
  }

  TEST_CASE("ItemCF neighbor cap") {
    std::vector<std::vector<ItemId>> ui{{0, 1, 2, 3, 4, 5}};
    BaselineModel cf(BaselineKind::kItemCF, 2);
    cf.fit_item_cf(ui, 6);
    CHECK(cf.neighbors(0).size() == 2);
    CHECK(cf.neighbors(0)[0].first == 1);
    CHECK(cf.neighbors(0)[1].first == 2);
  }

  TEST_CASE("BPR with zero parameters ties to id order") {
    const auto ds = test::small_synthetic();
    BprConfig cfg;
    cfg.epochs = 0;
    cfg.init_scale = 0.0;
    BaselineModel bpr(BaselineKind::kBpr, 20, cfg);
    bpr.fit(ds);
    CHECK(baseline_rank(bpr, {0, {}}, std::vector<ItemId>{5, 3, 9, 1}) == std::vector<ItemId>{1, 3, 5, 9});
  }

  TEST_CASE("fitted baselines on synthetic data") {
    const auto ds = test::small_synthetic();
    for (auto kind : {BaselineKind::kPop, BaselineKind::kItemCF, BaselineKind::kBpr}) {
      BaselineModel b(kind);
      b.fit(ds);
      CHECK(b.fitted());
      CHECK(b.parameter_count() > 0);
    }
  }
}
