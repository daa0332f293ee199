#include "oracles.hpp"
#include "support.hpp"

#include "attntul/metrics.hpp"

#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <sstream>

using namespace attntul;
using testing::prediction_with_top;

TEST_SUITE("metrics") {

TEST_CASE("accuracy at k") {
  PredictionSet p{prediction_with_top(0, 0, 3), prediction_with_top(1, 0, 3),
                  prediction_with_top(2, 2, 3), prediction_with_top(1, 2, 3)};
  CHECK(acc_at_k(p, 1) == 0.5);
  CHECK(acc_at_k(p, 3) == 1.0);
  CHECK(acc_at_k(p, 10) == 1.0);
  CHECK_THROWS_AS(acc_at_k(p, 0), std::invalid_argument);
  CHECK_THROWS_AS(acc_at_k(PredictionSet{}, 1), std::invalid_argument);
}

TEST_CASE("ranking breaks ties by user index") {
  const std::vector<double> logits{0.5, 2.0, 0.5, 2.0, 1.0, 1.0, 1.0, 1.0};
  const std::vector<std::size_t> truth{2, 3};
  auto p = rank_predictions(logits, 4, truth);
  CHECK(p[0].ranking == std::vector<std::size_t>{1, 3, 0, 2});
  CHECK(p[1].ranking == std::vector<std::size_t>{0, 1, 2, 3});
}

TEST_CASE("macro metrics hand cases") {
  // class 0: P = 1, R = 0.5; class 1: P = 0.5, R = 1
  PredictionSet p{prediction_with_top(0, 0, 2), prediction_with_top(0, 1, 2),
                  prediction_with_top(1, 1, 2)};
  auto m = macro_metrics(p);
  CHECK(m.class_f1.at(0) == 2.0 / 3.0);
  CHECK(m.class_f1.at(1) == 2.0 / 3.0);
  CHECK(m.f1 == 2.0 / 3.0);
  CHECK(m.precision == 0.75);
  CHECK(m.recall == 0.75);

  PredictionSet perfect{prediction_with_top(0, 0, 3), prediction_with_top(2, 2, 3)};
  CHECK(macro_metrics(perfect).f1 == 1.0);

  // class 1 is never predicted: its F1 of 0 halves the mean
  PredictionSet missed{prediction_with_top(0, 0, 2), prediction_with_top(1, 0, 2)};
  auto mm = macro_metrics(missed);
  CHECK(mm.class_f1.at(1) == 0.0);
  CHECK(mm.class_precision.at(1) == 0.0);
  CHECK(mm.f1 == doctest::Approx(1.0 / 3.0));
  // class 2 appears only as a prediction and is not averaged
  PredictionSet extra{prediction_with_top(0, 2, 3), prediction_with_top(0, 0, 3)};
  CHECK(macro_metrics(extra).class_f1.size() == 1);
}

TEST_CASE("macro metrics match the confusion-matrix oracle exhaustively") {
  auto sweep = testing::macro_sweep(5, 6);
  CHECK(sweep.cases > 1000000);
  CHECK(sweep.worst <= 1e-12);
}

TEST_CASE("accuracy is monotone in k and macro metrics ignore relabelling") {
  std::mt19937_64 rng(4);
  for (int round = 0; round < 1000; ++round) {
    const std::size_t users = 2 + rng() % 8, n = 1 + rng() % 12;
    PredictionSet p;
    for (std::size_t i = 0; i < n; ++i) {
      Prediction x{rng() % users, std::vector<std::size_t>(users)};
      std::iota(x.ranking.begin(), x.ranking.end(), 0);
      std::shuffle(x.ranking.begin(), x.ranking.end(), rng);
      p.push_back(x);
    }
    double prev = 0.0;
    for (std::size_t k = 1; k <= users; ++k) {
      const double a = acc_at_k(p, k);
      std::size_t hits = 0;
      for (const auto& x : p)
        hits += std::find(x.ranking.begin(), x.ranking.begin() + static_cast<std::ptrdiff_t>(k), x.truth) !=
                x.ranking.begin() + static_cast<std::ptrdiff_t>(k);
      CHECK(a == static_cast<double>(hits) / static_cast<double>(n));
      CHECK(a >= prev);
      prev = a;
    }
    CHECK(prev == 1.0);

    std::vector<std::size_t> relabel(users);
    std::iota(relabel.begin(), relabel.end(), 0);
    std::shuffle(relabel.begin(), relabel.end(), rng);
    PredictionSet q = p;
    for (auto& x : q) {
      x.truth = relabel[x.truth];
      for (auto& r : x.ranking) r = relabel[r];
    }
    const auto a = macro_metrics(p), b = macro_metrics(q);
    CHECK(std::abs(a.f1 - b.f1) <= 1e-12);
    CHECK(std::abs(a.precision - b.precision) <= 1e-12);
    CHECK(std::abs(a.recall - b.recall) <= 1e-12);
  }
}

TEST_CASE("metrics file format") {
  PredictionSet p{prediction_with_top(0, 0, 6), prediction_with_top(1, 0, 6)};
  std::ostringstream out;
  write_metrics(out, evaluate_predictions(p));
  CHECK(out.str() ==
        "acc@1=0.500000\nacc@5=1.000000\nmacro_p=0.250000\nmacro_r=0.500000\nmacro_f1=0.333333\n");
}

}  // TEST_SUITE
