#include <cmath>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "test_util.hpp"
#include "zoosel/blob_io.hpp"
#include "zoosel/csv_tasks.hpp"
#include "zoosel/harness.hpp"

namespace zoosel {
namespace {

/// Small enough for a unit test, large enough to exercise every stage.
BenchmarkConfig tiny_config(const std::filesystem::path& out) {
  BenchmarkConfig c;
  c.extractor.train.hidden_dim = 8;
  c.extractor.train.embed_dim = 8;
  c.extractor.train.epochs = 1;
  c.extractor.samples_per_pool = 20;
  c.extractor.pairs_per_cell = 2;
  c.characterization.n = 40;
  c.characterization.pool_tasks = 4;
  c.tasks.per_family = 2;
  c.random_seeds = 3;
  c.timing.reps = 1;
  c.timing.emulate_seconds_per_cost = 0.0;
  c.timing.scaling = {3};
  c.seed = 11;
  c.out = out;
  c.use_cache = false;
  return c;
}

const Workspace& shared_workspace() {
  static const Workspace ws = prepare_workspace(tiny_config(std::filesystem::temp_directory_path()));
  return ws;
}

TEST(BenchmarkConfig, JsonRoundTripAndValidation) {
  BenchmarkConfig c = tiny_config("outdir");
  c.k_list = {1, 2};
  c.tasks.families = {"trend", "noise"};
  const auto back = benchmark_config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
  EXPECT_EQ(back.extractor.train, c.extractor.train);
  EXPECT_EQ(back.tasks.families, c.tasks.families);
  EXPECT_ZOOSEL_ERROR((void)benchmark_config_from_json({{"tau", "high"}}), Errc::parse_error);

  EXPECT_NO_THROW(c.validate(5));
  auto bad = c;
  bad.k_list = {6};
  EXPECT_ZOOSEL_ERROR(bad.validate(5), Errc::invalid_argument);
  bad = c;
  bad.characterization.n = 9;
  EXPECT_ZOOSEL_ERROR(bad.validate(5), Errc::invalid_argument);
  bad = c;
  bad.extractor.train.input_len = 48;
  EXPECT_ZOOSEL_ERROR(bad.validate(5), Errc::invalid_argument);
}

TEST(BenchmarkConfig, FileRelativePaths) {
  testing::TempDir dir("cfg");
  {
    std::ofstream f(dir.path() / "c.json");
    f << R"({"out": "results", "zoo_manifest": "zoo.json", "seed": 3})";
  }
  const auto c = load_benchmark_config(dir.path() / "c.json");
  EXPECT_EQ(c.out, dir.path() / "results");
  EXPECT_EQ(*c.zoo_manifest, dir.path() / "zoo.json");
  EXPECT_EQ(c.seed, 3u);
  EXPECT_ZOOSEL_ERROR((void)load_benchmark_config(dir.path() / "missing.json"), Errc::io_error);
}

TEST(Seeds, IndependentStreams) {
  EXPECT_NE(seeds::characterization(0), seeds::extractor(0));
  EXPECT_NE(seeds::tasks(0), seeds::tasks(1));
  EXPECT_NE(seeds::task_embedding(0, "a"), seeds::task_embedding(0, "b"));
  EXPECT_EQ(seeds::random_baseline(4, 2), seeds::random_baseline(4, 2));
}

TEST(Metrics, InsertionRankAndArgmin) {
  const std::vector<double> v{3.0, 1.0, 2.0};
  EXPECT_DOUBLE_EQ(insertion_rank(v, 0.5), 1.0);
  EXPECT_DOUBLE_EQ(insertion_rank(v, 1.0), 1.5);
  EXPECT_DOUBLE_EQ(insertion_rank(v, 9.0), 4.0);
  EXPECT_TRUE(std::isnan(insertion_rank(v, std::nan(""))));
  EXPECT_EQ(argmin_index(v), 1u);
  EXPECT_EQ(argmin_index(std::vector<double>{2.0, 2.0}), 0u);
  EXPECT_ZOOSEL_ERROR((void)argmin_index(std::vector<double>{}), Errc::invalid_argument);
}

TEST(Metrics, ScoreWindowsAverages) {
  std::vector<Window> w(2);
  w[0].context = {1, 2, 3, 4};
  w[0].target = {5, 6};
  w[1].context = {1, 1, 1, 1};
  w[1].target = {1, 1};
  const std::vector<double> f0{5, 8};
  const std::vector<double> f1{1, 1};
  const auto tm = score_windows(w, {&f0, &f1}, 1);
  EXPECT_DOUBLE_EQ(tm.mse, (2.0 + 0.0) / 2.0);
  EXPECT_TRUE(std::isnan(tm.mase));  // constant second context
  EXPECT_DOUBLE_EQ(tm.smape, (smape(w[0].target, f0) + 0.0) / 2.0);
  EXPECT_ZOOSEL_ERROR((void)score_windows(w, {&f0}, 1), Errc::shape_mismatch);
}

TEST(Metrics, AggregateRowsInFirstAppearanceOrder) {
  std::vector<ReportRow> rows{{"a", "f", "s2", 1, 2, 3, 4, 5, 6}, {"a", "f", "s1", 1, 1, 1, 1, 1, 1},
                              {"b", "f", "s2", 3, 4, 5, 6, 7, 8}};
  const auto agg = aggregate_rows(rows);
  ASSERT_EQ(agg.size(), 2u);
  EXPECT_EQ(agg[0].strategy, "s2");
  EXPECT_EQ(agg[0].tasks, 2u);
  EXPECT_DOUBLE_EQ(agg[0].mean_smape, 2.0);
  EXPECT_DOUBLE_EQ(agg[0].mean_delta_p, 7.0);
}

TEST(FullForward, CountsAndCache) {
  const auto& ws = shared_workspace();
  ForwardCounter counter;
  const auto ff = full_forward(ws.zoo.models, ws.tasks, 96, 12, {&counter, 0.0});
  EXPECT_EQ(ff.forwards, ws.zoo.size() * ff.total_windows());
  EXPECT_EQ(counter.total(), ff.forwards);
  testing::TempDir dir("cache");
  const auto first = full_forward_cached(ws.zoo, ws.tasks, 96, 12, dir.path());
  EXPECT_FALSE(first.from_cache);
  const auto second = full_forward_cached(ws.zoo, ws.tasks, 96, 12, dir.path());
  EXPECT_TRUE(second.from_cache);
  EXPECT_EQ(second.forwards, 0u);
  EXPECT_EQ(second.forecasts, ff.forecasts);
  EXPECT_NE(suite_fingerprint(ws.tasks, 96, 12), suite_fingerprint(ws.tasks, 96, 24));
}

TEST(Pipeline, ReportIsConsistent) {
  const auto& ws = shared_workspace();
  const auto rep = run_pipeline(ws);
  const std::size_t m = ws.zoo.size();
  EXPECT_EQ(rep.task_count, ws.tasks.size());
  EXPECT_EQ(rep.rows.size(), ws.tasks.size() * (m + ws.config.k_list.size() + 3));
  EXPECT_EQ(rep.selections.size(), ws.tasks.size());
  EXPECT_EQ(rep.rankings.size(), ws.tasks.size());
  EXPECT_EQ(rep.deciles.size(), 10u);
  std::size_t correct = 0;
  for (const auto& s : rep.selections) correct += s.correct ? 1 : 0;
  EXPECT_DOUBLE_EQ(rep.top1_accuracy, static_cast<double>(correct) / static_cast<double>(ws.tasks.size()));
  for (const auto& r : rep.rows) {
    EXPECT_GE(r.rank_smape, 1.0);
    EXPECT_LE(r.rank_smape, static_cast<double>(m + 1));
    if (r.strategy == "oracle_best") EXPECT_DOUBLE_EQ(r.delta_p, 0.0);
    if (r.strategy.rfind("model:", 0) == 0) EXPECT_LE(r.delta_p, 0.0);
  }
  for (const auto& t : rep.timing) {
    if (t.stage == "selection" || t.stage == "task_embedding" || t.stage == "similarity") {
      EXPECT_EQ(t.forecaster_forwards, 0u) << t.stage;
    }
    if (t.stage == "precompute") {
      EXPECT_EQ(t.forecaster_forwards, m * ws.dset.size());
      EXPECT_EQ(t.extractor_calls, ws.dset.size());
    }
  }
  const auto again = run_pipeline(ws);
  std::ostringstream a, b;
  write_report_csv(a, rep.rows);
  write_report_csv(b, again.rows);
  EXPECT_EQ(a.str(), b.str());
}

TEST(Pipeline, ZooselTopMEqualsAllEnsemble) {
  Workspace ws = shared_workspace();
  ws.config.k_list = {5};
  const auto rep = run_pipeline(ws);
  const auto agg = aggregate_rows(rep.rows);
  const AggregateRow* top = nullptr;
  const AggregateRow* all = nullptr;
  for (const auto& a : agg) {
    if (a.strategy == "zoosel_top5") top = &a;
    if (a.strategy == "all_ensemble") all = &a;
  }
  ASSERT_TRUE(top && all);
  // same members summed in a different order: equal up to rounding
  EXPECT_NEAR(top->mean_mse, all->mean_mse, 1e-9);
}

TEST(Pipeline, WritesReportFiles) {
  const auto& ws = shared_workspace();
  const auto rep = run_pipeline(ws);
  testing::TempDir dir("report");
  write_run_report(dir.path(), rep);
  for (const char* f : {"report.csv", "aggregate.csv", "selection.csv", "deciles.csv", "timing.csv", "summary.json"}) {
    EXPECT_TRUE(std::filesystem::exists(dir.path() / f)) << f;
  }
  EXPECT_TRUE(std::filesystem::exists(dir.path() / "ranking" / (safe_file_name(ws.tasks[0].task.id()) + ".json")));
  const auto summary = summary_json(rep);
  EXPECT_DOUBLE_EQ(summary.at("top1_accuracy").get<double>(), rep.top1_accuracy);
}

TEST(Pipeline, StageFailureNamesStage) {
  auto cfg = tiny_config(std::filesystem::temp_directory_path());
  cfg.zoo_manifest = "/nonexistent/zoo.json";
  try {
    (void)prepare_workspace(cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::stage_failure);
    EXPECT_NE(std::string(e.what()).find("load-zoo"), std::string::npos);
  }
}

TEST(Sequential, ExpansionCostsAndFirstStep) {
  const auto& ws = shared_workspace();
  const auto rep = sequential_release_eval(ws);
  const std::size_t m = ws.zoo.size();
  EXPECT_EQ(rep.release_order.size(), m);
  ASSERT_EQ(rep.expansion_forwards.size(), m - 1);
  for (auto f : rep.expansion_forwards) EXPECT_EQ(f, ws.dset.size());
  for (auto x : rep.expansion_extractor_calls) EXPECT_EQ(x, 0u);
  // with one model every strategy picks it
  const double z = rep.value(1, "zoosel", "mean_smape");
  for (const char* s : {"random", "all_current", "latest", "current_best"}) {
    EXPECT_NEAR(rep.value(1, s, "mean_smape"), z, 1e-12) << s;
  }
  EXPECT_ZOOSEL_ERROR((void)rep.value(99, "zoosel", "mean_smape"), Errc::invalid_argument);
}

TEST(Timing, ReportsZeroSelectionForwards) {
  const auto& ws = shared_workspace();
  const auto rep = timing_report(ws);
  bool saw_total = false;
  for (const auto& r : rep.rows) {
    if (r.stage == "selection") EXPECT_EQ(r.forecaster_forwards, 0u);
    if (r.stage == "forecast") {
      std::size_t windows = 0;
      for (const auto& w : evaluation_windows(ws.tasks, 96, 12)) windows += w.size();
      EXPECT_EQ(r.forecaster_forwards, ws.config.primary_k * windows);
    }
    saw_total = saw_total || r.stage == "zoosel_total";
  }
  EXPECT_TRUE(saw_total);
  ASSERT_EQ(rep.scaling.size(), 2u);
  EXPECT_EQ(rep.scaling[0].models, 3u);
}

TEST(Tasks, CsvSourceLoadsWithSeason) {
  testing::TempDir dir("csv_src");
  std::vector<double> v(120);
  for (std::size_t t = 0; t < v.size(); ++t) v[t] = std::sin(static_cast<double>(t));
  {
    std::ofstream f(dir.path() / "a.csv");
    write_task_csv(f, {testing::single_channel_task("x", v, 12)});
    std::ofstream m(dir.path() / "m.json");
    m << R"({"x": {"horizon": 12, "season": 7}})";
  }
  BenchmarkConfig c;
  c.tasks.csv_dir = dir.path();
  c.tasks.csv_manifest = dir.path() / "m.json";
  const auto tasks = load_tasks(c);
  ASSERT_EQ(tasks.size(), 1u);
  EXPECT_EQ(tasks[0].season, 7u);
  EXPECT_EQ(tasks[0].family, "csv");
  c.tasks.csv_manifest.reset();
  EXPECT_ZOOSEL_ERROR((void)load_tasks(c), Errc::invalid_argument);
}

TEST(Report, SafeFileNameAndFormat) {
  EXPECT_EQ(safe_file_name("a/b c:d"), "a_b_c_d");
  EXPECT_EQ(format_double(0.1), "0.10000000000000001");
}

}  // namespace
}  // namespace zoosel
