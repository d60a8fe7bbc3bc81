#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "zoosel/characterize.hpp"
#include "zoosel/embedder.hpp"
#include "zoosel/library.hpp"
#include "zoosel/selector.hpp"
#include "zoosel/synth.hpp"
#include "zoosel/zoo.hpp"

namespace zoosel {

struct ExtractorSource {
  std::optional<std::filesystem::path> checkpoint;  // load instead of training
  ExtractorConfig train;
  std::size_t samples_per_pool = 400;
  std::size_t pairs_per_cell = 8;
};

struct TaskSource {
  std::optional<std::filesystem::path> csv_dir;
  std::optional<std::filesystem::path> csv_manifest;
  std::size_t per_family = 20;
  std::vector<std::string> families;  // empty = every family
  SynthOptions synth{.length = 480};  // long enough to separate families
};

struct TimingOptions {
  std::size_t reps = 3;
  /// Busy-wait per unit of nominal_cost on every forward, in seconds.
  double emulate_seconds_per_cost = 5e-4;
  std::vector<std::size_t> scaling = {4, 8, 16};
};

struct BenchmarkConfig {
  std::optional<std::filesystem::path> zoo_manifest;  // built-in default zoo when absent
  ExtractorSource extractor;
  CharacterizationOptions characterization;
  double tau = 1.0;
  std::size_t r = 3;
  std::vector<std::size_t> k_list = {1, 3, 5};
  std::size_t primary_k = 3;
  TaskSource tasks;
  std::size_t eval_context = 96;
  std::size_t eval_stride = 12;
  std::size_t segments_per_channel = 5;
  std::size_t random_seeds = 10;
  TimingOptions timing;
  std::uint64_t seed = 0;
  std::filesystem::path out = "out";
  bool use_cache = true;

  /// Checks n >= 10, K values in [1, M], positive stride and lengths.
  void validate(std::size_t zoo_size) const;
};

BenchmarkConfig benchmark_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const BenchmarkConfig& c);
BenchmarkConfig load_benchmark_config(const std::filesystem::path& path);

/// A benchmark task plus what metrics need beyond the raw values.
struct EvalTask {
  TimeSeriesTask task;
  std::string family;      // frequency tag, or "csv"
  std::size_t season = 1;  // MASE scaling lag
};

/// Everything shared by the pipeline stages: zoo, task suite, extractor and
/// characterization set, each derived deterministically from the config.
struct Workspace {
  BenchmarkConfig config;
  ZooManifest zoo;
  std::vector<EvalTask> tasks;
  Extractor extractor;
  std::vector<EpochLoss> loss_trace;
  CharacterizationSet dset;
};

ZooManifest load_zoo(const BenchmarkConfig& config);
std::vector<EvalTask> load_tasks(const BenchmarkConfig& config);
CharacterizationSet build_dset(const BenchmarkConfig& config, const ZooManifest& zoo);
CharacterizationSet build_dset(const BenchmarkConfig& config, const std::vector<std::string>& pools);
/// Loads the checkpoint, or trains on pools of the zoo's characterization sources.
Extractor obtain_extractor(const BenchmarkConfig& config, const ZooManifest& zoo,
                           std::vector<EpochLoss>* trace = nullptr);
Workspace prepare_workspace(const BenchmarkConfig& config);

/// Sub-seeds derived from the global seed.
namespace seeds {
std::uint64_t characterization(std::uint64_t seed);
std::uint64_t extractor(std::uint64_t seed);
std::uint64_t tasks(std::uint64_t seed);
std::uint64_t task_embedding(std::uint64_t seed, const std::string& task_id);
std::uint64_t random_baseline(std::uint64_t seed, std::size_t replicate);
}  // namespace seeds

/// Every model forwarded on every rolling window of every task.
struct FullForward {
  std::vector<std::vector<Window>> windows;  // [task][window]
  /// forecasts[m][t][w], each of the task's horizon.
  std::vector<std::vector<std::vector<std::vector<double>>>> forecasts;
  std::uint64_t forwards = 0;  // 0 when served from cache
  bool from_cache = false;

  [[nodiscard]] std::size_t total_windows() const;
};

std::vector<std::vector<Window>> evaluation_windows(const std::vector<EvalTask>& tasks, std::size_t context_len,
                                                    std::size_t stride);
FullForward full_forward(const std::vector<ForecasterSpec>& models, const std::vector<EvalTask>& tasks,
                         std::size_t context_len, std::size_t stride, const ForwardOptions& options = {});
/// full_forward with an on-disk cache keyed by (zoo hash, task-suite hash).
FullForward full_forward_cached(const ZooManifest& zoo, const std::vector<EvalTask>& tasks, std::size_t context_len,
                                std::size_t stride, const std::filesystem::path& cache_dir);
std::string suite_fingerprint(const std::vector<EvalTask>& tasks, std::size_t context_len, std::size_t stride);

struct TaskMetrics {
  double smape = 0.0;
  double mse = 0.0;
  double mase = 0.0;  // NaN when the in-sample scale is degenerate
};

/// Window-averaged metrics of one forecast per window.
TaskMetrics score_windows(const std::vector<Window>& windows, const std::vector<const std::vector<double>*>& fc,
                          std::size_t season);

/// Rank of `value` inserted among `model_values` (1 = best, ties averaged).
double insertion_rank(std::span<const double> model_values, double value);

/// Model index with the lowest value; ties go to the lower index.
std::size_t argmin_index(std::span<const double> values);

struct ReportRow {
  std::string task_id;
  std::string family;
  std::string strategy;
  double smape = 0.0;
  double mse = 0.0;
  double mase = 0.0;
  double rank_smape = 0.0;
  double rank_mase = 0.0;
  double delta_p = 0.0;
};

struct AggregateRow {
  std::string strategy;
  std::size_t tasks = 0;
  double mean_smape = 0.0;
  double mean_mse = 0.0;
  double mean_mase = 0.0;
  double mean_rank_smape = 0.0;
  double mean_rank_mase = 0.0;
  double mean_delta_p = 0.0;
  double var_smape = 0.0;  // across random replicates; 0 otherwise
  double var_rank = 0.0;
};

struct SelectionRow {
  std::string task_id;
  std::string family;
  std::string oracle_best;  // lowest MSE
  std::string chosen;       // zoosel top-1
  bool correct = false;
  std::string order;        // ';'-joined model ids
};

struct TimingRow {
  std::string stage;
  double seconds = 0.0;
  std::uint64_t forecaster_forwards = 0;
  std::uint64_t extractor_calls = 0;
  std::size_t models = 0;
};

struct RunReport {
  std::vector<ReportRow> rows;
  std::vector<AggregateRow> aggregates;
  std::vector<SelectionRow> selections;
  std::vector<RankingResult> rankings;
  std::vector<DecileRow> deciles;
  std::vector<TimingRow> timing;
  std::vector<EpochLoss> loss_trace;
  double top1_accuracy = 0.0;
  std::size_t task_count = 0;
  std::vector<std::string> model_ids;
};

/// Mean of every numeric column per strategy, in first-appearance order.
std::vector<AggregateRow> aggregate_rows(const std::vector<ReportRow>& rows);

/// Precompute, per-task selection, forecast and scoring against the
/// full-forward oracle. Throws stage_failure naming the stage on error.
RunReport run_pipeline(const BenchmarkConfig& config);
RunReport run_pipeline(const Workspace& ws);

struct SequentialRow {
  std::size_t step = 0;
  std::string added_model;
  std::string strategy;
  std::string metric;
  double value = 0.0;
};

struct SequentialReport {
  std::vector<SequentialRow> rows;
  std::vector<std::string> release_order;
  /// Forecaster forwards spent by each expansion step (n expected).
  std::vector<std::uint64_t> expansion_forwards;
  std::vector<std::uint64_t> expansion_extractor_calls;

  /// Value for (step, strategy, metric); throws when absent.
  [[nodiscard]] double value(std::size_t step, const std::string& strategy, const std::string& metric) const;
};

/// Grows the library one release at a time and scores zoosel top-K against
/// random, all-current ensemble, latest and current-best selection.
SequentialReport sequential_release_eval(const Workspace& ws);
SequentialReport sequential_release_eval(const BenchmarkConfig& config);

struct TimingReport {
  std::vector<TimingRow> rows;         // medians over reps
  std::vector<TimingRow> scaling;      // stage rows tagged by zoo size
};

/// Three-stage wall-time protocol with forward-cost emulation.
TimingReport timing_report(const Workspace& ws);
TimingReport timing_report(const BenchmarkConfig& config);

// CSV / JSON writers. Doubles are printed with 17 significant digits.
std::string format_double(double v);
void write_report_csv(std::ostream& out, const std::vector<ReportRow>& rows);
void write_aggregate_csv(std::ostream& out, const std::vector<AggregateRow>& rows);
void write_selection_csv(std::ostream& out, const std::vector<SelectionRow>& rows);
void write_decile_csv(std::ostream& out, const std::vector<DecileRow>& rows);
void write_timing_csv(std::ostream& out, const std::vector<TimingRow>& rows);
void write_sequential_csv(std::ostream& out, const std::vector<SequentialRow>& rows);
nlohmann::json summary_json(const RunReport& report);

/// report.csv, aggregate.csv, selection.csv, deciles.csv, timing.csv,
/// summary.json and ranking/<task>.json under `dir`.
void write_run_report(const std::filesystem::path& dir, const RunReport& report);

/// Replaces characters unsafe in file names with '_'.
std::string safe_file_name(const std::string& s);

}  // namespace zoosel
