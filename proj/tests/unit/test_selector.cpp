#include <cmath>

#include <gtest/gtest.h>

#include "../common/oracles.hpp"
#include "test_util.hpp"
#include "zoosel/selector.hpp"

namespace zoosel {
namespace {

using testing::random_matrix;

TEST(Similarity, WeightedCosineAndZeroNorm) {
  const Matrix zoo(3, 2, {1, 0, 0, 2, 0, 0});
  const Matrix task(2, 2, {3, 0, 1, 1});
  const std::vector<double> w{0.5, 1.0, 2.0};
  const auto s = similarity(zoo, w, task);
  EXPECT_DOUBLE_EQ(s.sim(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(s.sim(1, 0), 0.0);
  EXPECT_NEAR(s.sim(0, 1), 0.5 / std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(s.sim(1, 1), 1.0 / std::sqrt(2.0), 1e-15);
  EXPECT_EQ(s.sim(2, 0), 0.0);
  EXPECT_EQ(s.sim(2, 1), 0.0);
  const std::vector<std::pair<std::size_t, std::size_t>> zero{{2, 0}, {2, 1}};
  EXPECT_EQ(s.zero_norm_pairs, zero);
  EXPECT_ZOOSEL_ERROR((void)similarity(zoo, w, Matrix(1, 3)), Errc::shape_mismatch);
  EXPECT_ZOOSEL_ERROR((void)similarity(zoo, std::vector<double>{1.0}, task), Errc::shape_mismatch);
}

TEST(Similarity, ScaleInvariantAndBounded) {
  std::mt19937_64 rng(1);
  for (int rep = 0; rep < 50; ++rep) {
    const auto zoo = random_matrix(4, 5, rng);
    auto task = random_matrix(2, 5, rng);
    const auto w = testing::random_vector(4, rng, 0.1, 1.0);
    const auto a = similarity(zoo, w, task);
    for (double& v : task.flat()) v *= 3.5;
    const auto b = similarity(zoo, w, task);
    for (std::size_t i = 0; i < a.sim.flat().size(); ++i) {
      EXPECT_NEAR(a.sim.flat()[i], b.sim.flat()[i], 1e-12);
      EXPECT_LE(std::abs(a.sim.flat()[i]), w[i / 2] + 1e-12);
    }
  }
}

TEST(Vote, TopRPerChannelWithTieBreaks) {
  // channel 0: clear order; channel 1: three-way tie at the boundary
  const Matrix sim(4, 2, {0.9, 0.5, 0.1, 0.5, 0.5, 0.5, 0.7, 0.9});
  const std::vector<double> w{1.0, 0.5, 0.8, 1.0};
  const auto v = vote(sim, w, 2);
  EXPECT_EQ(v.b, Matrix(2, 4, {1, 0, 0, 1, 1, 0, 0, 1}));
  ASSERT_EQ(v.ties.size(), 1u);
  EXPECT_EQ(v.ties[0].stage, "vote");
  EXPECT_EQ(*v.ties[0].channel, 1u);
  EXPECT_EQ(v.ties[0].members, (std::vector<std::size_t>{0, 2, 1}));
  EXPECT_EQ(v.ties[0].resolved_by, "weight");

  const std::vector<double> flat{1.0, 1.0, 1.0, 1.0};
  const auto vi = vote(sim, flat, 2);
  EXPECT_EQ(vi.b(1, 0), 1.0);
  EXPECT_EQ(vi.b(1, 1), 0.0);
  EXPECT_EQ(vi.ties[0].resolved_by, "index");
}

TEST(Vote, RowSumsAndClampToM) {
  std::mt19937_64 rng(2);
  for (int rep = 0; rep < 30; ++rep) {
    const auto sim = random_matrix(5, 3, rng);
    const std::vector<double> w(5, 1.0);
    for (std::size_t r : {1u, 3u, 5u, 9u}) {
      const auto v = vote(sim, w, r);
      for (std::size_t c = 0; c < 3; ++c) {
        double sum = 0.0;
        for (double x : v.b.row(c)) sum += x;
        EXPECT_EQ(sum, static_cast<double>(std::min<std::size_t>(r, 5)));
        // every selected entry beats every unselected one
        for (std::size_t a = 0; a < 5; ++a) {
          for (std::size_t b = 0; b < 5; ++b) {
            if (v.b(c, a) == 1.0 && v.b(c, b) == 0.0) EXPECT_GE(sim(a, c), sim(b, c));
          }
        }
      }
    }
  }
  EXPECT_ZOOSEL_ERROR((void)vote(Matrix(2, 1), std::vector<double>{1, 1}, 0), Errc::invalid_argument);
}

TEST(Consensus, ExhaustiveSmallCasesMatchOracle) {
  // every 0/1 matrix with C <= 4 and M <= 4, sim drawn from a tiny alphabet
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> level(0, 2);
  for (std::size_t c = 1; c <= 4; ++c) {
    for (std::size_t m = 1; m <= 4; ++m) {
      const std::size_t bits = c * m;
      for (std::size_t mask = 0; mask < (1u << bits); ++mask) {
        Matrix b(c, m);
        for (std::size_t k = 0; k < bits; ++k) b.flat()[k] = (mask >> k) & 1u ? 1.0 : 0.0;
        Matrix sim(m, c);
        for (double& v : sim.flat()) v = 0.25 * level(rng);
        const auto got = consensus_rank(b, sim);
        const auto want = oracle::consensus(b, sim);
        ASSERT_EQ(got.hamming, want.hamming);
        ASSERT_EQ(got.order, want.order);
      }
    }
  }
}

TEST(Consensus, TieTraceAndShapeCheck) {
  const Matrix b(1, 3, {1, 1, 0});
  const Matrix sim(3, 1, {0.2, 0.4, 0.9});
  const auto r = consensus_rank(b, sim);
  EXPECT_EQ(r.order, (std::vector<std::size_t>{1, 0, 2}));
  ASSERT_EQ(r.ties.size(), 1u);
  EXPECT_EQ(r.ties[0].resolved_by, "sum_sim");
  const auto eq = consensus_rank(b, Matrix(3, 1, {0.4, 0.4, 0.9}));
  EXPECT_EQ(eq.order, (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_EQ(eq.ties[0].resolved_by, "index");
  EXPECT_ZOOSEL_ERROR((void)consensus_rank(b, Matrix(2, 1)), Errc::shape_mismatch);
}

ReprLibrary toy_library(const Matrix& r_zoo, std::vector<double> w) {
  ReprLibrary lib;
  lib.r_zoo = r_zoo;
  lib.weights = std::move(w);
  for (std::size_t m = 0; m < r_zoo.rows(); ++m) lib.model_ids.push_back("m" + std::to_string(m));
  return lib;
}

TEST(RankModels, OrderIsPermutationAndEquivariant) {
  std::mt19937_64 rng(4);
  for (int rep = 0; rep < 40; ++rep) {
    const auto zoo = random_matrix(5, 4, rng);
    const auto w = testing::random_vector(5, rng, 0.2, 1.0);
    TaskRepr task{random_matrix(3, 4, rng), "t", 5};
    const auto r = rank_models(toy_library(zoo, w), task);
    auto sorted = r.order;
    std::sort(sorted.begin(), sorted.end());
    EXPECT_EQ(sorted, (std::vector<std::size_t>{0, 1, 2, 3, 4}));

    // reversing model order maps the ranking through the same permutation
    Matrix rev(5, 4);
    std::vector<double> wr(5);
    for (std::size_t m = 0; m < 5; ++m) {
      std::copy(zoo.row(4 - m).begin(), zoo.row(4 - m).end(), rev.row(m).begin());
      wr[m] = w[4 - m];
    }
    const auto rr = rank_models(toy_library(rev, wr), task);
    for (std::size_t k = 0; k < 5; ++k) EXPECT_EQ(rr.order[k], 4 - r.order[k]);

    // scaling the task representation changes nothing
    TaskRepr scaled = task;
    for (double& v : scaled.r_task.flat()) v *= 7.0;
    EXPECT_EQ(rank_models(toy_library(zoo, w), scaled).order, r.order);
  }
}

TEST(RankModels, JsonCarriesTraceAndOrder) {
  const auto lib = toy_library(Matrix(3, 2, {1, 0, 0, 1, 1, 1}), {1.0, 1.0, 1.0});
  TaskRepr task{Matrix(1, 2, {1, 0}), "task_a", 5};
  const auto r = rank_models(lib, task, 1);
  EXPECT_EQ(r.order.front(), 0u);
  const auto j = to_json(r);
  EXPECT_EQ(j["task_id"], "task_a");
  EXPECT_EQ(j["models"][0]["model_id"], "m0");
  EXPECT_EQ(j["models"][0]["rank"], 1);
  EXPECT_EQ(j["B"].size(), 1u);
  EXPECT_TRUE(j["tie_break_trace"].is_array());
}

TEST(Ensemble, TopKMeanMatchesManualAverage) {
  const auto zoo = default_zoo().models;
  std::vector<double> v(60);
  for (std::size_t t = 0; t < v.size(); ++t) v[t] = std::sin(0.5 * static_cast<double>(t)) + 0.1 * t;
  const auto task = testing::single_channel_task("t", v, 12);
  const std::vector<std::size_t> order{2, 0, 4, 1, 3};
  ForwardCounter counter;
  const auto f = topk_ensemble(zoo, order, task, 3, {&counter});
  EXPECT_EQ(counter.total(), 3u);
  std::vector<double> want(12, 0.0);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto p = forecast(zoo[order[i]], v, 12).values;
    for (std::size_t h = 0; h < 12; ++h) want[h] += p[h];
  }
  for (std::size_t h = 0; h < 12; ++h) EXPECT_NEAR(f.values(0, h), want[h] / 3.0, 1e-12);
  EXPECT_EQ(f.producer_model, zoo[2].model_id + "+" + zoo[0].model_id + "+" + zoo[4].model_id);
  const auto one = topk_ensemble(zoo, order, task, 1);
  EXPECT_EQ(one.values, forecast_task(zoo[2], task).values);
  EXPECT_ZOOSEL_ERROR((void)topk_ensemble(zoo, order, task, 0), Errc::invalid_argument);
  EXPECT_ZOOSEL_ERROR((void)topk_ensemble(zoo, order, task, 6), Errc::invalid_argument);
}

TEST(Ensemble, SelectedModelFailureNamesModel) {
  const std::vector<ForecasterSpec> zoo{{"ar40", kind::Autoregressive{40}, 0, 1.0, "ar"},
                                        {"mean", kind::HistoricMean{}, 1, 1.0, "noise"}};
  const auto task = testing::single_channel_task("short", std::vector<double>(20, 1.0), 4);
  try {
    (void)topk_ensemble(zoo, std::vector<std::size_t>{0, 1}, task, 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::model_failure);
    EXPECT_NE(std::string(e.what()).find("ar40"), std::string::npos);
  }
}

TEST(AverageForecasts, OrderedSumAndShapes) {
  const Matrix a(1, 2, {1, 2});
  const Matrix b(1, 2, {3, 6});
  const std::vector<const Matrix*> ptrs{&a, &b};
  EXPECT_EQ(average_forecasts(ptrs), Matrix(1, 2, {2, 4}));
  const Matrix c(2, 1);
  const std::vector<const Matrix*> bad{&a, &c};
  EXPECT_ZOOSEL_ERROR((void)average_forecasts(bad), Errc::shape_mismatch);
  EXPECT_ZOOSEL_ERROR((void)average_forecasts(std::vector<const Matrix*>{}), Errc::invalid_argument);
}

TEST(DeltaP, Examples) {
  EXPECT_DOUBLE_EQ(delta_p(1.0, std::vector<double>{2.0, 4.0}), 0.5);
  EXPECT_DOUBLE_EQ(delta_p(4.0, std::vector<double>{2.0, 4.0}), -1.0);
  EXPECT_DOUBLE_EQ(delta_p(2.0, std::vector<double>{2.0}), 0.0);
  EXPECT_ZOOSEL_ERROR((void)delta_p(1.0, std::vector<double>{0.0, 1.0}), Errc::degenerate_oracle);
  EXPECT_ZOOSEL_ERROR((void)delta_p(1.0, std::vector<double>{}), Errc::invalid_argument);
}

TEST(DeltaP, ConvexityBound) {
  // MSE is convex, so the mean of K forecasts never loses to the worst member
  std::mt19937_64 rng(5);
  for (int rep = 0; rep < 200; ++rep) {
    const auto y = testing::random_vector(8, rng);
    std::vector<std::vector<double>> preds;
    std::vector<double> losses;
    std::vector<double> avg(8, 0.0);
    for (int k = 0; k < 3; ++k) {
      preds.push_back(testing::random_vector(8, rng, -2, 2));
      losses.push_back(mse(y, preds.back()));
      for (std::size_t h = 0; h < 8; ++h) avg[h] += preds.back()[h] / 3.0;
    }
    const double worst = *std::max_element(losses.begin(), losses.end());
    const double best = *std::min_element(losses.begin(), losses.end());
    EXPECT_GE(delta_p(mse(y, avg), losses), 1.0 - worst / best - 1e-12);
    EXPECT_LE(delta_p(mse(y, avg), losses), 1.0);
  }
}

TEST(Eta, RatioAndValidation) {
  EXPECT_DOUBLE_EQ(eta(0.2, std::chrono::duration<double>(0.5)), 0.4);
  EXPECT_ZOOSEL_ERROR((void)eta(0.2, std::chrono::duration<double>(0.0)), Errc::invalid_argument);
}

TEST(SelectionReport, Json) {
  SelectionReport r;
  r.task_id = "x";
  r.order = {"a", "b"};
  r.chosen_k = 2;
  r.ensemble_forecast.values = Matrix(1, 2, {1, 2});
  r.delta_p = 0.1;
  const auto j = to_json(r);
  EXPECT_EQ(j["task_id"], "x");
  EXPECT_EQ(j["chosen_k"], 2);
  EXPECT_DOUBLE_EQ(j["delta_p"].get<double>(), 0.1);
}

}  // namespace
}  // namespace zoosel
