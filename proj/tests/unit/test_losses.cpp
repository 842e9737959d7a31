#include <cmath>
#include <functional>
#include <random>

#include "doctest.h"
#include "rankdistill/error.hpp"
#include "rankdistill/losses.hpp"

using namespace rankdistill;

namespace {

// central difference of f over the score of `item` in `scores`
template <typename F>
double numeric_grad(F f, std::vector<ItemScore> scores, std::size_t idx, double h = 1e-6) {
  scores[idx].score += h;
  const double up = f(scores);
  scores[idx].score -= 2 * h;
  const double down = f(scores);
  return (up - down) / (2 * h);
}

}  // namespace

TEST_SUITE("losses") {
  TEST_CASE("pointwise examples") {
    std::vector<ItemScore> pos{{1, 0.0}}, none;
    auto l = pointwise_loss(pos, none);
    CHECK(l.value == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    CHECK(l.grad(1) == doctest::Approx(-0.5));
    std::vector<ItemScore> neg{{2, 0.0}};
    l = pointwise_loss(none, neg);
    CHECK(l.value == doctest::Approx(std::log(2.0)));
    CHECK(l.grad(2) == doctest::Approx(0.5));
    std::vector<ItemScore> big{{1, 40.0}};
    l = pointwise_loss(big, none);
    CHECK(l.value < 1e-15);
    CHECK(std::abs(l.grad(1)) < 1e-15);
    CHECK_THROWS_AS(pointwise_loss(none, none), DegenerateInputError);
  }

  TEST_CASE("extremes stay finite and non-negative") {
    for (double y : {-500.0, -40.0, 0.0, 40.0, 500.0}) {
      std::vector<ItemScore> a{{0, y}}, b{{1, y}};
      const auto l = pointwise_loss(a, b);
      CHECK(std::isfinite(l.value));
      CHECK(l.value >= 0.0);
      const auto p = pairwise_loss(std::vector<ItemScore>{{0, y}, {1, -y}}, PairSet{{0, 1}});
      CHECK(std::isfinite(p.value));
      CHECK(p.value >= 0.0);
      const auto d = distillation_loss(std::vector<ItemId>{0}, std::vector<double>{y}, std::vector<double>{1.0});
      CHECK(std::isfinite(d.value));
      CHECK(d.value >= 0.0);
    }
  }

  TEST_CASE("pairwise examples") {
    std::vector<ItemScore> s{{0, 1.5}, {1, 1.5}};
    auto l = pairwise_loss(s, {{0, 1}});
    CHECK(l.value == doctest::Approx(std::log(2.0)));
    CHECK(l.grad(0) == doctest::Approx(-0.5));
    CHECK(l.grad(1) == doctest::Approx(0.5));
    std::vector<ItemScore> far{{0, 40.0}, {1, 0.0}};
    CHECK(pairwise_loss(far, {{0, 1}}).value < 1e-15);
    CHECK_THROWS_AS(pairwise_loss(s, {{0, 7}}), LookupError);
    CHECK_THROWS_AS(pairwise_loss(s, {{0, 0}}), ConfigError);
  }

  TEST_CASE("pairwise accumulates on a shared loser") {
    std::vector<ItemScore> s{{0, 1.0}, {1, 0.3}, {2, -0.4}};
    const auto l = pairwise_loss(s, {{0, 2}, {1, 2}});
    const double g02 = -sigmoid(-(1.0 - -0.4));
    const double g12 = -sigmoid(-(0.3 - -0.4));
    CHECK(l.grad(2) == doctest::Approx(-(g02 + g12)).epsilon(1e-14));
    CHECK(l.grad(0) == doctest::Approx(g02));
    CHECK(l.grad(1) == doctest::Approx(g12));
    CHECK(l.value == doctest::Approx(softplus(-1.4) + softplus(-0.7)));
  }

  TEST_CASE("distillation examples and sign") {
    std::vector<ItemId> top{4, 2, 9};
    auto l = distillation_loss(top, std::vector<double>{1.0, -2.0, 0.5}, std::vector<double>{0, 0, 0});
    CHECK(l.value == 0.0);
    for (const auto& [i, g] : l.grads) CHECK(g == 0.0);
    l = distillation_loss(std::vector<ItemId>{3}, std::vector<double>{0.0}, std::vector<double>{1.0});
    CHECK(l.value == doctest::Approx(std::log(2.0)));
    CHECK(l.grad(3) == doctest::Approx(-0.5));

    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-20, 20), w(0, 1);
    for (int t = 0; t < 200; ++t) {
      std::vector<double> s(3), ww(3);
      for (auto& x : s) x = u(rng);
      for (auto& x : ww) x = w(rng);
      const auto r = distillation_loss(top, s, ww);
      for (const auto& [i, g] : r.grads) CHECK(g <= 0.0);
      // non-increasing in each score
      auto s2 = s;
      s2[t % 3] += 0.5;
      CHECK(distillation_loss(top, s2, ww).value <= r.value);
    }
    CHECK_THROWS_AS(distillation_loss(top, std::vector<double>{0, 0}, std::vector<double>{1, 1, 1}), ConfigError);
    CHECK_THROWS_AS(distillation_loss(top, std::vector<double>{0, 0, 0}, std::vector<double>{1, -1, 1}), ConfigError);
  }

  TEST_CASE("combined blending") {
    LossGrad r, d;
    r.value = 2.0;
    r.accumulate(1, -0.2);
    r.accumulate(5, 0.4);
    d.value = 0.5;
    d.accumulate(1, -0.4);
    d.accumulate(7, -0.1);
    const auto c0 = combined_loss(r, d, 0.0);
    CHECK(c0.value == r.value);
    CHECK(c0.grads == r.grads);
    const auto c1 = combined_loss(r, d, 1.0);
    CHECK(c1.value == d.value);
    CHECK(c1.grads == d.grads);
    const auto half = combined_loss(r, d, 0.5);
    CHECK(half.grad(1) == doctest::Approx(-0.3));
    CHECK(half.grad(5) == doctest::Approx(0.2));
    CHECK(half.grad(7) == doctest::Approx(-0.05));
    for (double a : {0.1, 0.3, 0.77}) {
      CHECK(combined_loss(r, d, a).value == doctest::Approx(2.0 + a * (0.5 - 2.0)).epsilon(1e-15));
    }
  }

  TEST_CASE("finite differences on the score vector") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-5, 5), w(0, 1);
    double worst = 0.0;
    for (int t = 0; t < 100; ++t) {
      std::vector<ItemScore> s;
      for (ItemId i = 0; i < 5; ++i) s.push_back({i, u(rng)});
      std::vector<double> ww(3);
      for (auto& x : ww) x = w(rng);

      auto point = [](const std::vector<ItemScore>& v) {
        return pointwise_loss(std::span(v).first(2), std::span(v).subspan(2)).value;
      };
      auto pair = [](const std::vector<ItemScore>& v) {
        return pairwise_loss(v, {{0, 3}, {0, 4}, {1, 4}}).value;
      };
      auto dist = [&](const std::vector<ItemScore>& v) {
        return distillation_loss(std::vector<ItemId>{0, 1, 2},
                                 std::vector<double>{v[0].score, v[1].score, v[2].score}, ww)
            .value;
      };
      const auto lp = pointwise_loss(std::span(s).first(2), std::span(s).subspan(2));
      const auto lq = pairwise_loss(s, {{0, 3}, {0, 4}, {1, 4}});
      const auto ld = distillation_loss(std::vector<ItemId>{0, 1, 2},
                                        std::vector<double>{s[0].score, s[1].score, s[2].score}, ww);
      for (std::size_t k = 0; k < 5; ++k) {
        for (auto [fn, lg] : {std::pair<std::function<double(const std::vector<ItemScore>&)>, const LossGrad*>{point, &lp},
                              {pair, &lq}, {dist, &ld}}) {
          const double a = lg->grad(s[k].item);
          const double n = numeric_grad(fn, s, k);
          if (std::abs(a) < 1e-9 && std::abs(n) < 1e-8) continue;
          worst = std::max(worst, std::abs(a - n) / (std::abs(a) + 1e-8));
        }
      }
    }
    CHECK(worst < 1e-6);
  }
}
