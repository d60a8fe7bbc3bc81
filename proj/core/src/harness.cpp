#include "zoosel/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include "zoosel/blob_io.hpp"
#include "zoosel/csv_tasks.hpp"

namespace zoosel {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

template <class F>
auto run_stage(const std::string& stage, const std::string& artifact, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    if (e.code() == Errc::stage_failure) throw;
    fail(Errc::stage_failure, "stage '" + stage + "' failed on " + artifact + ": " + e.what());
  } catch (const std::exception& e) {
    fail(Errc::stage_failure, "stage '" + stage + "' failed on " + artifact + ": " + e.what());
  }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::filesystem::path& p) {
  return p.is_absolute() || base.empty() ? p : base / p;
}

}  // namespace

// ---------------------------------------------------------------- config

void BenchmarkConfig::validate(std::size_t zoo_size) const {
  if (characterization.n < 10) fail(Errc::invalid_argument, "characterization n must be >= 10");
  if (r < 1) fail(Errc::invalid_argument, "r must be >= 1");
  if (k_list.empty()) fail(Errc::invalid_argument, "K list is empty");
  for (std::size_t k : k_list) {
    if (k < 1 || k > zoo_size) {
      fail(Errc::invalid_argument, "K=" + std::to_string(k) + " outside [1, " + std::to_string(zoo_size) + "]");
    }
  }
  if (primary_k < 1 || primary_k > zoo_size) fail(Errc::invalid_argument, "primary K outside [1, M]");
  if (eval_context < 1 || eval_stride < 1) fail(Errc::invalid_argument, "evaluation context and stride must be >= 1");
  if (segments_per_channel < 1) fail(Errc::invalid_argument, "segments_per_channel must be >= 1");
  if (random_seeds < 1) fail(Errc::invalid_argument, "random_seeds must be >= 1");
  if (timing.reps < 1) fail(Errc::invalid_argument, "timing reps must be >= 1");
  if (extractor.train.input_len != characterization.context_len && !extractor.checkpoint) {
    fail(Errc::invalid_argument, "extractor input_len must equal the characterization context length");
  }
}

namespace {

BenchmarkConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base) {
  BenchmarkConfig c;
  try {
    c.seed = j.value("seed", c.seed);
    if (j.contains("out")) c.out = resolve(base, j.at("out").get<std::string>());
    if (j.contains("zoo_manifest") && !j.at("zoo_manifest").is_null()) {
      c.zoo_manifest = resolve(base, j.at("zoo_manifest").get<std::string>());
    }
    if (j.contains("extractor")) {
      const auto& e = j.at("extractor");
      if (e.contains("checkpoint") && !e.at("checkpoint").is_null()) {
        c.extractor.checkpoint = resolve(base, e.at("checkpoint").get<std::string>());
      }
      if (e.contains("config")) c.extractor.train = extractor_config_from_json(e.at("config"));
      c.extractor.samples_per_pool = e.value("samples_per_pool", c.extractor.samples_per_pool);
      c.extractor.pairs_per_cell = e.value("pairs_per_cell", c.extractor.pairs_per_cell);
    }
    if (j.contains("characterization")) {
      const auto& d = j.at("characterization");
      c.characterization.n = d.value("n", c.characterization.n);
      c.characterization.context_len = d.value("context_len", c.characterization.context_len);
      c.characterization.target_len = d.value("target_len", c.characterization.target_len);
      c.characterization.pool_tasks = d.value("pool_tasks", c.characterization.pool_tasks);
    }
    c.tau = j.value("tau", c.tau);
    c.r = j.value("r", c.r);
    if (j.contains("k")) c.k_list = j.at("k").get<std::vector<std::size_t>>();
    c.primary_k = j.value("primary_k", c.primary_k);
    if (j.contains("tasks")) {
      const auto& t = j.at("tasks");
      if (t.contains("csv_dir")) c.tasks.csv_dir = resolve(base, t.at("csv_dir").get<std::string>());
      if (t.contains("manifest")) c.tasks.csv_manifest = resolve(base, t.at("manifest").get<std::string>());
      c.tasks.per_family = t.value("per_family", c.tasks.per_family);
      if (t.contains("families")) c.tasks.families = t.at("families").get<std::vector<std::string>>();
      c.tasks.synth.length = t.value("length", c.tasks.synth.length);
      c.tasks.synth.horizon = t.value("horizon", c.tasks.synth.horizon);
      c.tasks.synth.min_channels = t.value("min_channels", c.tasks.synth.min_channels);
      c.tasks.synth.max_channels = t.value("max_channels", c.tasks.synth.max_channels);
    }
    if (j.contains("eval")) {
      c.eval_context = j.at("eval").value("context_len", c.eval_context);
      c.eval_stride = j.at("eval").value("stride", c.eval_stride);
    }
    c.segments_per_channel = j.value("segments_per_channel", c.segments_per_channel);
    c.random_seeds = j.value("random_seeds", c.random_seeds);
    if (j.contains("timing")) {
      const auto& t = j.at("timing");
      c.timing.reps = t.value("reps", c.timing.reps);
      c.timing.emulate_seconds_per_cost = t.value("emulate_seconds_per_cost", c.timing.emulate_seconds_per_cost);
      if (t.contains("scaling")) c.timing.scaling = t.at("scaling").get<std::vector<std::size_t>>();
    }
    c.use_cache = j.value("use_cache", c.use_cache);
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::parse_error, std::string("benchmark config: ") + e.what());
  }
  return c;
}

}  // namespace

BenchmarkConfig benchmark_config_from_json(const nlohmann::json& j) { return config_from_json(j, {}); }

nlohmann::json to_json(const BenchmarkConfig& c) {
  nlohmann::json j;
  j["seed"] = c.seed;
  j["out"] = c.out.string();
  j["zoo_manifest"] = c.zoo_manifest ? nlohmann::json(c.zoo_manifest->string()) : nlohmann::json(nullptr);
  j["extractor"] = {{"checkpoint", c.extractor.checkpoint ? nlohmann::json(c.extractor.checkpoint->string())
                                                           : nlohmann::json(nullptr)},
                    {"config", to_json(c.extractor.train)},
                    {"samples_per_pool", c.extractor.samples_per_pool},
                    {"pairs_per_cell", c.extractor.pairs_per_cell}};
  j["characterization"] = {{"n", c.characterization.n},
                           {"context_len", c.characterization.context_len},
                           {"target_len", c.characterization.target_len},
                           {"pool_tasks", c.characterization.pool_tasks}};
  j["tau"] = c.tau;
  j["r"] = c.r;
  j["k"] = c.k_list;
  j["primary_k"] = c.primary_k;
  nlohmann::json t = {{"per_family", c.tasks.per_family},
                      {"families", c.tasks.families},
                      {"length", c.tasks.synth.length},
                      {"horizon", c.tasks.synth.horizon},
                      {"min_channels", c.tasks.synth.min_channels},
                      {"max_channels", c.tasks.synth.max_channels}};
  if (c.tasks.csv_dir) t["csv_dir"] = c.tasks.csv_dir->string();
  if (c.tasks.csv_manifest) t["manifest"] = c.tasks.csv_manifest->string();
  j["tasks"] = t;
  j["eval"] = {{"context_len", c.eval_context}, {"stride", c.eval_stride}};
  j["segments_per_channel"] = c.segments_per_channel;
  j["random_seeds"] = c.random_seeds;
  j["timing"] = {{"reps", c.timing.reps},
                 {"emulate_seconds_per_cost", c.timing.emulate_seconds_per_cost},
                 {"scaling", c.timing.scaling}};
  j["use_cache"] = c.use_cache;
  return j;
}

BenchmarkConfig load_benchmark_config(const std::filesystem::path& path) {
  const std::string text = blob::read_bytes(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::parse_error, path.string() + ": " + e.what());
  }
  return config_from_json(j, path.parent_path());
}

// ---------------------------------------------------------------- seeds

namespace seeds {
std::uint64_t characterization(std::uint64_t seed) { return mix_seed(seed, 0xC4A2); }
std::uint64_t extractor(std::uint64_t seed) { return mix_seed(seed, 0xE7A1); }
std::uint64_t tasks(std::uint64_t seed) { return mix_seed(seed, 0x5417); }
std::uint64_t task_embedding(std::uint64_t seed, const std::string& task_id) {
  return mix_seed(mix_seed(seed, 0x7A5C), blob::fnv1a(task_id));
}
std::uint64_t random_baseline(std::uint64_t seed, std::size_t replicate) {
  return mix_seed(mix_seed(seed, 0xAD00), replicate);
}
}  // namespace seeds

// ---------------------------------------------------------------- workspace

ZooManifest load_zoo(const BenchmarkConfig& config) {
  return config.zoo_manifest ? load_manifest(*config.zoo_manifest) : default_zoo();
}

std::vector<EvalTask> load_tasks(const BenchmarkConfig& config) {
  std::vector<EvalTask> out;
  if (config.tasks.csv_dir) {
    if (!config.tasks.csv_manifest) fail(Errc::invalid_argument, "CSV task source needs a manifest");
    const auto manifest = load_task_manifest(*config.tasks.csv_manifest);
    auto ingested = ingest_csv(*config.tasks.csv_dir, manifest);
    if (ingested.tasks.empty()) fail(Errc::invalid_argument, "no task could be loaded from the CSV directory");
    for (auto& t : ingested.tasks) {
      const auto it = manifest.find(t.id());
      const std::size_t season = it != manifest.end() && it->second.season ? *it->second.season : 1;
      out.push_back({std::move(t), "csv", season});
    }
    return out;
  }
  std::vector<std::string> families = config.tasks.families;
  if (families.empty()) {
    for (Family f : kAllFamilies) families.emplace_back(to_string(f));
  }
  for (const auto& name : families) {
    const Family f = parse_family(name);
    for (auto& t : synth_task_family(f, config.tasks.per_family, seeds::tasks(config.seed), config.tasks.synth)) {
      out.push_back({std::move(t), name, f == Family::seasonal ? std::size_t{12} : std::size_t{1}});
    }
  }
  return out;
}

CharacterizationSet build_dset(const BenchmarkConfig& config, const std::vector<std::string>& pools) {
  CharacterizationOptions opts = config.characterization;
  opts.seed = seeds::characterization(config.seed);
  return build_characterization_set(pools, opts);
}

CharacterizationSet build_dset(const BenchmarkConfig& config, const ZooManifest& zoo) {
  return build_dset(config, pools_of(zoo));
}

Extractor obtain_extractor(const BenchmarkConfig& config, const ZooManifest& zoo, std::vector<EpochLoss>* trace) {
  if (config.extractor.checkpoint) return load_checkpoint(*config.extractor.checkpoint);
  ExtractorConfig cfg = config.extractor.train;
  cfg.seed = seeds::extractor(config.seed);
  const auto pools = build_training_pools(pools_of(zoo), config.extractor.samples_per_pool, cfg,
                                          mix_seed(config.seed, 0x7001));
  const auto targets = build_transfer_targets(pools, zoo, config.extractor.pairs_per_cell,
                                              mix_seed(config.seed, 0x7002));
  const auto corpus = flatten_pools(pools);
  auto result = train(cfg, corpus, targets);
  if (trace) *trace = result.trace;
  return std::move(result.extractor);
}

Workspace prepare_workspace(const BenchmarkConfig& config) {
  ZooManifest zoo = run_stage("load-zoo", config.zoo_manifest ? config.zoo_manifest->string() : "default zoo",
                              [&] { return load_zoo(config); });
  run_stage("load-zoo", "manifest", [&] {
    validate(zoo, 1);
    config.validate(zoo.size());
    return 0;
  });
  auto tasks = run_stage("load-tasks", config.tasks.csv_dir ? config.tasks.csv_dir->string() : "synthetic suite",
                         [&] { return load_tasks(config); });
  std::vector<EpochLoss> trace;
  Extractor ext = run_stage("train-extractor",
                            config.extractor.checkpoint ? config.extractor.checkpoint->string() : "training pools",
                            [&] { return obtain_extractor(config, zoo, &trace); });
  if (ext.config().input_len != config.characterization.context_len) {
    fail(Errc::stage_failure, "stage 'characterize' failed: extractor input length differs from context length");
  }
  auto dset = run_stage("characterize", "characterization set", [&] { return build_dset(config, zoo); });
  return Workspace{config, std::move(zoo), std::move(tasks), std::move(ext), std::move(trace), std::move(dset)};
}

// ---------------------------------------------------------------- full forward

std::size_t FullForward::total_windows() const {
  std::size_t n = 0;
  for (const auto& w : windows) n += w.size();
  return n;
}

std::vector<std::vector<Window>> evaluation_windows(const std::vector<EvalTask>& tasks, std::size_t context_len,
                                                    std::size_t stride) {
  std::vector<std::vector<Window>> out;
  out.reserve(tasks.size());
  for (const auto& t : tasks) out.push_back(make_windows(t.task, context_len, t.task.horizon(), stride));
  return out;
}

FullForward full_forward(const std::vector<ForecasterSpec>& models, const std::vector<EvalTask>& tasks,
                         std::size_t context_len, std::size_t stride, const ForwardOptions& options) {
  FullForward ff;
  ff.windows = evaluation_windows(tasks, context_len, stride);
  ff.forecasts.resize(models.size());
  for (std::size_t m = 0; m < models.size(); ++m) {
    ff.forecasts[m].resize(tasks.size());
    for (std::size_t t = 0; t < tasks.size(); ++t) {
      auto& dst = ff.forecasts[m][t];
      dst.reserve(ff.windows[t].size());
      for (const auto& w : ff.windows[t]) {
        try {
          dst.push_back(forward(models[m], w.context, tasks[t].task.horizon(), options).values);
        } catch (const Error& e) {
          fail(Errc::model_failure, "model '" + models[m].model_id + "' failed on task '" + tasks[t].task.id() +
                                        "': " + e.what());
        }
        ++ff.forwards;
      }
    }
  }
  if (ff.forwards != models.size() * ff.total_windows()) {
    fail(Errc::stage_failure, "full-forward accounting mismatch");
  }
  return ff;
}

std::string suite_fingerprint(const std::vector<EvalTask>& tasks, std::size_t context_len, std::size_t stride) {
  std::uint64_t h = blob::fnv1a("suite");
  for (const auto& t : tasks) {
    h = blob::fnv1a(t.task.id(), h);
    h = blob::fnv1a(t.task.values().flat(), h);
    const double dims[] = {static_cast<double>(t.task.channels()), static_cast<double>(t.task.horizon())};
    h = blob::fnv1a(std::span<const double>(dims), h);
  }
  const double eval[] = {static_cast<double>(context_len), static_cast<double>(stride)};
  h = blob::fnv1a(std::span<const double>(eval), h);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

FullForward full_forward_cached(const ZooManifest& zoo, const std::vector<EvalTask>& tasks, std::size_t context_len,
                                std::size_t stride, const std::filesystem::path& cache_dir) {
  const std::string zoo_fp = zoo.fingerprint();
  const std::string suite_fp = suite_fingerprint(tasks, context_len, stride);
  const auto path = cache_dir / ("fullforward_" + zoo_fp + "_" + suite_fp + ".bin");
  std::error_code ec;
  if (std::filesystem::exists(path, ec)) {
    try {
      const auto b = blob::read_file(path, "full_forward");
      if (b.header.value("zoo", std::string{}) == zoo_fp && b.header.value("suite", std::string{}) == suite_fp) {
        FullForward ff;
        ff.windows = evaluation_windows(tasks, context_len, stride);
        const auto& flat = b.block("forecasts").data();
        std::size_t pos = 0;
        ff.forecasts.resize(zoo.size());
        for (std::size_t m = 0; m < zoo.size(); ++m) {
          ff.forecasts[m].resize(tasks.size());
          for (std::size_t t = 0; t < tasks.size(); ++t) {
            const std::size_t h = tasks[t].task.horizon();
            for (std::size_t w = 0; w < ff.windows[t].size(); ++w) {
              if (pos + h > flat.size()) fail(Errc::corrupt_payload, "cache too short");
              ff.forecasts[m][t].emplace_back(flat.begin() + static_cast<std::ptrdiff_t>(pos),
                                              flat.begin() + static_cast<std::ptrdiff_t>(pos + h));
              pos += h;
            }
          }
        }
        if (pos == flat.size()) {
          ff.from_cache = true;
          return ff;
        }
      }
    } catch (const Error&) {
      // unreadable cache entries are recomputed
    }
  }
  FullForward ff = full_forward(zoo.models, tasks, context_len, stride);
  std::vector<double> flat;
  for (const auto& per_model : ff.forecasts) {
    for (const auto& per_task : per_model) {
      for (const auto& f : per_task) flat.insert(flat.end(), f.begin(), f.end());
    }
  }
  blob::Blob b;
  b.kind = "full_forward";
  b.header = {{"zoo", zoo_fp}, {"suite", suite_fp}, {"models", zoo.size()}};
  const std::size_t n = flat.size();
  b.blocks.push_back({"forecasts", Matrix(1, n, std::move(flat))});
  blob::write_file(path, b);
  return ff;
}

// ---------------------------------------------------------------- metrics

TaskMetrics score_windows(const std::vector<Window>& windows, const std::vector<const std::vector<double>*>& fc,
                          std::size_t season) {
  if (windows.size() != fc.size()) fail(Errc::shape_mismatch, "one forecast per window expected");
  if (windows.empty()) fail(Errc::invalid_argument, "no windows to score");
  TaskMetrics out;
  bool mase_ok = true;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    out.smape += smape(windows[i].target, *fc[i]);
    out.mse += mse(windows[i].target, *fc[i]);
    if (mase_ok) {
      try {
        out.mase += mase(windows[i].target, *fc[i], windows[i].context, season);
      } catch (const Error&) {
        mase_ok = false;
      }
    }
  }
  const double n = static_cast<double>(windows.size());
  out.smape /= n;
  out.mse /= n;
  out.mase = mase_ok ? out.mase / n : std::numeric_limits<double>::quiet_NaN();
  return out;
}

double insertion_rank(std::span<const double> model_values, double value) {
  if (std::isnan(value)) return std::numeric_limits<double>::quiet_NaN();
  std::vector<double> all(model_values.begin(), model_values.end());
  for (double v : all) {
    if (std::isnan(v)) return std::numeric_limits<double>::quiet_NaN();
  }
  all.push_back(value);
  return rank_scores(all).back();
}

std::size_t argmin_index(std::span<const double> values) {
  if (values.empty()) fail(Errc::invalid_argument, "argmin of an empty list");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] < values[best]) best = i;
  }
  return best;
}

std::vector<AggregateRow> aggregate_rows(const std::vector<ReportRow>& rows) {
  std::vector<AggregateRow> out;
  std::map<std::string, std::size_t> index;
  for (const auto& r : rows) {
    auto [it, inserted] = index.try_emplace(r.strategy, out.size());
    if (inserted) out.push_back(AggregateRow{r.strategy});
    auto& a = out[it->second];
    ++a.tasks;
    a.mean_smape += r.smape;
    a.mean_mse += r.mse;
    a.mean_mase += r.mase;
    a.mean_rank_smape += r.rank_smape;
    a.mean_rank_mase += r.rank_mase;
    a.mean_delta_p += r.delta_p;
  }
  for (auto& a : out) {
    const double n = static_cast<double>(a.tasks);
    a.mean_smape /= n;
    a.mean_mse /= n;
    a.mean_mase /= n;
    a.mean_rank_smape /= n;
    a.mean_rank_mase /= n;
    a.mean_delta_p /= n;
  }
  return out;
}

namespace {

/// Model metrics of every task from the oracle forecasts: [task][model].
std::vector<std::vector<TaskMetrics>> model_metrics(const FullForward& ff, const std::vector<EvalTask>& tasks) {
  const std::size_t m_count = ff.forecasts.size();
  std::vector<std::vector<TaskMetrics>> out(tasks.size(), std::vector<TaskMetrics>(m_count));
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    for (std::size_t m = 0; m < m_count; ++m) {
      std::vector<const std::vector<double>*> fc;
      for (const auto& f : ff.forecasts[m][t]) fc.push_back(&f);
      out[t][m] = score_windows(ff.windows[t], fc, tasks[t].season);
    }
  }
  return out;
}

/// Window-wise mean of the given models' oracle forecasts, summed in order.
std::vector<std::vector<double>> ensemble_windows(const FullForward& ff, std::size_t t,
                                                  std::span<const std::size_t> models) {
  std::vector<std::vector<double>> out;
  for (std::size_t w = 0; w < ff.windows[t].size(); ++w) {
    std::vector<double> acc(ff.forecasts[models[0]][t][w].size(), 0.0);
    for (std::size_t m : models) {
      const auto& f = ff.forecasts[m][t][w];
      for (std::size_t h = 0; h < acc.size(); ++h) acc[h] += f[h];
    }
    for (auto& v : acc) v /= static_cast<double>(models.size());
    out.push_back(std::move(acc));
  }
  return out;
}

struct Column {
  std::vector<double> smape, mase, mse;
};

Column columns_of(const std::vector<TaskMetrics>& per_model, std::span<const std::size_t> subset = {}) {
  Column c;
  auto add = [&](const TaskMetrics& tm) {
    c.smape.push_back(tm.smape);
    c.mase.push_back(tm.mase);
    c.mse.push_back(tm.mse);
  };
  if (subset.empty()) {
    for (const auto& tm : per_model) add(tm);
  } else {
    for (std::size_t m : subset) add(per_model[m]);
  }
  return c;
}

ReportRow make_row(const EvalTask& et, const std::string& strategy, const TaskMetrics& tm, const Column& ref) {
  ReportRow r;
  r.task_id = et.task.id();
  r.family = et.family;
  r.strategy = strategy;
  r.smape = tm.smape;
  r.mse = tm.mse;
  r.mase = tm.mase;
  r.rank_smape = insertion_rank(ref.smape, tm.smape);
  r.rank_mase = insertion_rank(ref.mase, tm.mase);
  r.delta_p = delta_p(tm.mse, ref.mse);
  return r;
}

TaskMetrics score_ensemble(const FullForward& ff, const EvalTask& et, std::size_t t,
                           std::span<const std::size_t> models) {
  const auto fc = ensemble_windows(ff, t, models);
  std::vector<const std::vector<double>*> ptrs;
  for (const auto& f : fc) ptrs.push_back(&f);
  return score_windows(ff.windows[t], ptrs, et.season);
}

TaskRepr embed_eval_task(const Workspace& ws, const EvalTask& et) {
  const std::size_t len = std::min(et.task.length(), ws.config.eval_context);
  return embed_task(ws.extractor, et.task.head(len), ws.config.segments_per_channel,
                    seeds::task_embedding(ws.config.seed, et.task.id()));
}

ErrorMatrix error_matrix_of(const ReprLibrary& lib, const CharacterizationSet& dset) {
  ErrorMatrix e{lib.errors, lib.model_ids, {}};
  for (std::size_t i = 0; i < dset.size(); ++i) e.sample_ids.push_back(dset.provenance[i] + "#" + std::to_string(i));
  return e;
}

std::string join_ids(const std::vector<std::string>& ids, std::span<const std::size_t> order) {
  std::string s;
  for (std::size_t i = 0; i < order.size(); ++i) s += (i ? ";" : "") + ids[order[i]];
  return s;
}

double variance(std::span<const double> v) {
  const double s = population_std(v);
  return s * s;
}

}  // namespace

// ---------------------------------------------------------------- pipeline

RunReport run_pipeline(const BenchmarkConfig& config) { return run_pipeline(prepare_workspace(config)); }

RunReport run_pipeline(const Workspace& ws) {
  const auto& cfg = ws.config;
  const auto& models = ws.zoo.models;
  const std::size_t m_count = models.size();
  RunReport rep;
  rep.loss_trace = ws.loss_trace;
  rep.task_count = ws.tasks.size();
  for (const auto& s : models) rep.model_ids.push_back(s.model_id);

  ForwardCounter counter;
  auto ext0 = embed_invocations();
  auto t0 = Clock::now();
  const ReprLibrary lib = run_stage("embed-zoo", "zoo library", [&] {
    return build_library(models, ws.dset, ws.extractor, cfg.tau, ForwardOptions{&counter, 0.0});
  });
  rep.timing.push_back({"precompute", seconds_since(t0), counter.total(), embed_invocations() - ext0, m_count});
  rep.deciles = variance_decile_report(error_matrix_of(lib, ws.dset));

  t0 = Clock::now();
  const FullForward ff = run_stage("full-forward", "task suite", [&] {
    return cfg.use_cache ? full_forward_cached(ws.zoo, ws.tasks, cfg.eval_context, cfg.eval_stride, cfg.out / "cache")
                         : full_forward(models, ws.tasks, cfg.eval_context, cfg.eval_stride);
  });
  rep.timing.push_back({ff.from_cache ? "full_forward_cached" : "full_forward", seconds_since(t0), ff.forwards, 0,
                        m_count});

  // per-task selection: no forecaster forward may happen here
  counter.reset();
  ext0 = embed_invocations();
  double embed_s = 0.0, sim_s = 0.0;
  for (const auto& et : ws.tasks) {
    auto ts = Clock::now();
    const TaskRepr repr = run_stage("select", "task '" + et.task.id() + "'", [&] { return embed_eval_task(ws, et); });
    embed_s += seconds_since(ts);
    ts = Clock::now();
    rep.rankings.push_back(run_stage("select", "task '" + et.task.id() + "'",
                                     [&] { return rank_models(lib, repr, cfg.r); }));
    sim_s += seconds_since(ts);
  }
  if (counter.total() != 0) fail(Errc::stage_failure, "selection stage ran a forecaster forward");
  const std::uint64_t sel_ext = embed_invocations() - ext0;
  rep.timing.push_back({"task_embedding", embed_s, 0, sel_ext, m_count});
  rep.timing.push_back({"similarity", sim_s, 0, 0, m_count});
  rep.timing.push_back({"selection", embed_s + sim_s, 0, sel_ext, m_count});

  // forecast stage: the primary top-K actually forwarded on every window
  counter.reset();
  t0 = Clock::now();
  for (std::size_t t = 0; t < ws.tasks.size(); ++t) {
    const auto& order = rep.rankings[t].order;
    run_stage("forecast", "task '" + ws.tasks[t].task.id() + "'", [&] {
      for (std::size_t k = 0; k < cfg.primary_k; ++k) {
        for (const auto& w : ff.windows[t]) {
          (void)forward(models[order[k]], w.context, ws.tasks[t].task.horizon(), ForwardOptions{&counter, 0.0});
        }
      }
      return 0;
    });
  }
  rep.timing.push_back({"forecast", seconds_since(t0), counter.total(), 0, m_count});

  const auto metrics = model_metrics(ff, ws.tasks);
  std::vector<std::size_t> all(m_count);
  std::iota(all.begin(), all.end(), 0);

  std::vector<std::mt19937_64> rngs;
  for (std::size_t j = 0; j < cfg.random_seeds; ++j) rngs.emplace_back(seeds::random_baseline(cfg.seed, j));
  std::vector<double> rep_smape(cfg.random_seeds, 0.0), rep_rank(cfg.random_seeds, 0.0);

  std::size_t correct = 0;
  for (std::size_t t = 0; t < ws.tasks.size(); ++t) {
    const auto& et = ws.tasks[t];
    const Column ref = columns_of(metrics[t]);
    for (std::size_t m = 0; m < m_count; ++m) {
      rep.rows.push_back(make_row(et, "model:" + models[m].model_id, metrics[t][m], ref));
    }
    const auto& order = rep.rankings[t].order;
    for (std::size_t k : cfg.k_list) {
      const auto tm = score_ensemble(ff, et, t, std::span(order).first(k));
      rep.rows.push_back(make_row(et, "zoosel_top" + std::to_string(k), tm, ref));
    }
    rep.rows.push_back(make_row(et, "all_ensemble", score_ensemble(ff, et, t, all), ref));

    ReportRow rnd{et.task.id(), et.family, "random"};
    for (std::size_t j = 0; j < cfg.random_seeds; ++j) {
      const std::size_t pick = std::uniform_int_distribution<std::size_t>(0, m_count - 1)(rngs[j]);
      const ReportRow r = make_row(et, "random", metrics[t][pick], ref);
      rnd.smape += r.smape;
      rnd.mse += r.mse;
      rnd.mase += r.mase;
      rnd.rank_smape += r.rank_smape;
      rnd.rank_mase += r.rank_mase;
      rnd.delta_p += r.delta_p;
      rep_smape[j] += r.smape;
      rep_rank[j] += r.rank_smape;
    }
    const double reps = static_cast<double>(cfg.random_seeds);
    for (double* v : {&rnd.smape, &rnd.mse, &rnd.mase, &rnd.rank_smape, &rnd.rank_mase, &rnd.delta_p}) *v /= reps;
    rep.rows.push_back(rnd);

    const std::size_t best = argmin_index(ref.mse);
    rep.rows.push_back(make_row(et, "oracle_best", metrics[t][best], ref));

    SelectionRow sel{et.task.id(), et.family, models[best].model_id, models[order[0]].model_id, best == order[0],
                     join_ids(rep.model_ids, order)};
    correct += sel.correct ? 1 : 0;
    rep.selections.push_back(std::move(sel));
  }
  rep.top1_accuracy = ws.tasks.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(ws.tasks.size());
  rep.aggregates = aggregate_rows(rep.rows);
  const double n_tasks = static_cast<double>(ws.tasks.size());
  for (auto& v : rep_smape) v /= n_tasks;
  for (auto& v : rep_rank) v /= n_tasks;
  for (auto& a : rep.aggregates) {
    if (a.strategy == "random") {
      a.var_smape = variance(rep_smape);
      a.var_rank = variance(rep_rank);
    }
  }
  return rep;
}

// ---------------------------------------------------------------- sequential release

double SequentialReport::value(std::size_t step, const std::string& strategy, const std::string& metric) const {
  for (const auto& r : rows) {
    if (r.step == step && r.strategy == strategy && r.metric == metric) return r.value;
  }
  fail(Errc::invalid_argument, "no sequential value for step " + std::to_string(step) + " " + strategy + "/" + metric);
}

SequentialReport sequential_release_eval(const BenchmarkConfig& config) {
  return sequential_release_eval(prepare_workspace(config));
}

SequentialReport sequential_release_eval(const Workspace& ws) {
  const auto& cfg = ws.config;
  const auto& models = ws.zoo.models;
  const auto release = ws.zoo.release_order();
  SequentialReport out;
  for (std::size_t m : release) out.release_order.push_back(models[m].model_id);

  const FullForward ff = run_stage("full-forward", "task suite", [&] {
    return cfg.use_cache ? full_forward_cached(ws.zoo, ws.tasks, cfg.eval_context, cfg.eval_stride, cfg.out / "cache")
                         : full_forward(models, ws.tasks, cfg.eval_context, cfg.eval_stride);
  });
  const auto metrics = model_metrics(ff, ws.tasks);
  std::vector<TaskRepr> reprs;
  for (const auto& et : ws.tasks) {
    reprs.push_back(run_stage("select", "task '" + et.task.id() + "'", [&] { return embed_eval_task(ws, et); }));
  }
  // suite-mean sMAPE of each model, the history "current best" looks back on
  std::vector<double> suite_smape(models.size(), 0.0);
  for (std::size_t t = 0; t < ws.tasks.size(); ++t) {
    for (std::size_t m = 0; m < models.size(); ++m) suite_smape[m] += metrics[t][m].smape;
  }

  std::optional<ReprLibrary> lib;
  for (std::size_t s = 1; s <= release.size(); ++s) {
    const std::size_t added = release[s - 1];
    ForwardCounter counter;
    const auto ext0 = embed_invocations();
    if (!lib) {
      lib = run_stage("embed-zoo", models[added].model_id, [&] {
        return build_library({models[added]}, ws.dset, ws.extractor, cfg.tau, ForwardOptions{&counter, 0.0});
      });
    } else {
      lib = run_stage("add-model", models[added].model_id, [&] {
        return add_model(*lib, models[added], ws.dset, ws.extractor, cfg.tau, ForwardOptions{&counter, 0.0});
      });
      out.expansion_forwards.push_back(counter.total());
      out.expansion_extractor_calls.push_back(embed_invocations() - ext0);
    }
    const std::vector<std::size_t> avail(release.begin(), release.begin() + static_cast<std::ptrdiff_t>(s));
    const std::size_t k = std::min(cfg.primary_k, s);
    std::size_t current_best = release[0];
    if (s > 1) {
      for (std::size_t i = 1; i + 1 < s; ++i) {
        if (suite_smape[release[i]] < suite_smape[current_best]) current_best = release[i];
      }
    }

    struct Acc {
      double smape = 0, rank = 0, rank_mase = 0, mse = 0;
    };
    std::map<std::string, Acc> acc;
    std::vector<std::mt19937_64> rngs;
    for (std::size_t j = 0; j < cfg.random_seeds; ++j) rngs.emplace_back(seeds::random_baseline(cfg.seed, j));
    std::vector<double> rep_smape(cfg.random_seeds, 0.0), rep_rank(cfg.random_seeds, 0.0);
    auto add = [&](const std::string& name, const TaskMetrics& tm, const Column& ref) {
      auto& a = acc[name];
      a.smape += tm.smape;
      a.mse += tm.mse;
      a.rank += insertion_rank(ref.smape, tm.smape);
      a.rank_mase += insertion_rank(ref.mase, tm.mase);
    };
    for (std::size_t t = 0; t < ws.tasks.size(); ++t) {
      const auto& et = ws.tasks[t];
      const Column ref = columns_of(metrics[t]);
      const auto ranking = rank_models(*lib, reprs[t], cfg.r);
      std::vector<std::size_t> chosen;
      for (std::size_t i = 0; i < k; ++i) chosen.push_back(avail[ranking.order[i]]);
      add("zoosel", score_ensemble(ff, et, t, chosen), ref);
      add("all_current", score_ensemble(ff, et, t, avail), ref);
      add("latest", metrics[t][added], ref);
      add("current_best", metrics[t][current_best], ref);
      for (std::size_t j = 0; j < cfg.random_seeds; ++j) {
        const std::size_t pick = avail[std::uniform_int_distribution<std::size_t>(0, s - 1)(rngs[j])];
        const auto& tm = metrics[t][pick];
        rep_smape[j] += tm.smape;
        rep_rank[j] += insertion_rank(ref.smape, tm.smape);
        add("random", tm, ref);
      }
    }
    const double n_tasks = static_cast<double>(ws.tasks.size());
    const double reps = static_cast<double>(cfg.random_seeds);
    for (const std::string name : {"zoosel", "random", "all_current", "latest", "current_best"}) {
      const auto& a = acc[name];
      const double denom = name == "random" ? n_tasks * reps : n_tasks;
      out.rows.push_back({s, models[added].model_id, name, "mean_smape", a.smape / denom});
      out.rows.push_back({s, models[added].model_id, name, "mean_mse", a.mse / denom});
      out.rows.push_back({s, models[added].model_id, name, "mean_rank", a.rank / denom});
      out.rows.push_back({s, models[added].model_id, name, "mean_rank_mase", a.rank_mase / denom});
    }
    for (auto& v : rep_smape) v /= n_tasks;
    for (auto& v : rep_rank) v /= n_tasks;
    out.rows.push_back({s, models[added].model_id, "random", "var_smape", variance(rep_smape)});
    out.rows.push_back({s, models[added].model_id, "random", "var_rank", variance(rep_rank)});
  }
  return out;
}

// ---------------------------------------------------------------- timing

namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct SelectionTiming {
  double embed = 0.0;
  double sim = 0.0;
  std::uint64_t extractor_calls = 0;
};

SelectionTiming time_selection(const Workspace& ws, const ReprLibrary& lib, ForwardCounter& counter) {
  SelectionTiming st;
  const auto ext0 = embed_invocations();
  const auto before = counter.total();
  for (const auto& et : ws.tasks) {
    auto t0 = Clock::now();
    const auto repr = embed_eval_task(ws, et);
    st.embed += seconds_since(t0);
    t0 = Clock::now();
    const auto ranking = rank_models(lib, repr, ws.config.r);
    st.sim += seconds_since(t0);
    if (ranking.order.empty()) fail(Errc::stage_failure, "empty ranking");
  }
  if (counter.total() != before) fail(Errc::stage_failure, "selection stage ran a forecaster forward");
  st.extractor_calls = embed_invocations() - ext0;
  return st;
}

}  // namespace

TimingReport timing_report(const BenchmarkConfig& config) { return timing_report(prepare_workspace(config)); }

TimingReport timing_report(const Workspace& ws) {
  const auto& cfg = ws.config;
  const auto& models = ws.zoo.models;
  const std::size_t m_count = models.size();
  const double emu = cfg.timing.emulate_seconds_per_cost;
  TimingReport out;

  std::vector<double> ff_s, pre_s, emb_s, sim_s, fc_s;
  std::uint64_t ff_n = 0, pre_n = 0, fc_n = 0, pre_x = 0, sel_x = 0;
  for (std::size_t rep = 0; rep < cfg.timing.reps; ++rep) {
    ForwardCounter counter;
    ForwardOptions opts{&counter, emu};
    auto t0 = Clock::now();
    const auto ff = full_forward(models, ws.tasks, cfg.eval_context, cfg.eval_stride, opts);
    ff_s.push_back(seconds_since(t0));
    ff_n = counter.total();

    counter.reset();
    auto x0 = embed_invocations();
    t0 = Clock::now();
    const auto lib = build_library(models, ws.dset, ws.extractor, cfg.tau, opts);
    pre_s.push_back(seconds_since(t0));
    pre_n = counter.total();
    pre_x = embed_invocations() - x0;

    counter.reset();
    const auto st = time_selection(ws, lib, counter);
    emb_s.push_back(st.embed);
    sim_s.push_back(st.sim);
    sel_x = st.extractor_calls;

    counter.reset();
    t0 = Clock::now();
    for (std::size_t t = 0; t < ws.tasks.size(); ++t) {
      const auto ranking = rank_models(lib, embed_eval_task(ws, ws.tasks[t]), cfg.r);
      for (std::size_t k = 0; k < cfg.primary_k; ++k) {
        for (const auto& w : ff.windows[t]) {
          (void)forward(models[ranking.order[k]], w.context, ws.tasks[t].task.horizon(), opts);
        }
      }
    }
    // the re-selection inside the loop is subtracted so only forwards remain
    fc_s.push_back(std::max(0.0, seconds_since(t0) - st.embed - st.sim));
    fc_n = counter.total();
  }
  const double sel = median(emb_s) + median(sim_s);
  out.rows.push_back({"full_forward", median(ff_s), ff_n, 0, m_count});
  out.rows.push_back({"precompute", median(pre_s), pre_n, pre_x, m_count});
  out.rows.push_back({"task_embedding", median(emb_s), 0, sel_x, m_count});
  out.rows.push_back({"similarity", median(sim_s), 0, 0, m_count});
  out.rows.push_back({"selection", sel, 0, sel_x, m_count});
  out.rows.push_back({"forecast", median(fc_s), fc_n, 0, m_count});
  out.rows.push_back({"zoosel_total", median(pre_s) + sel + median(fc_s), pre_n + fc_n, pre_x + sel_x, m_count});

  for (std::size_t size : cfg.timing.scaling) {
    const ZooManifest zoo = scaling_zoo(size);
    const auto dset = build_dset(cfg, zoo);
    const auto lib = build_library(zoo.models, dset, ws.extractor, cfg.tau);
    std::vector<double> sel_s, full_s;
    std::uint64_t full_n = 0;
    for (std::size_t rep = 0; rep < cfg.timing.reps; ++rep) {
      ForwardCounter counter;
      const auto st = time_selection(ws, lib, counter);
      sel_s.push_back(st.embed + st.sim);
      const auto t0 = Clock::now();
      (void)full_forward(zoo.models, ws.tasks, cfg.eval_context, cfg.eval_stride, ForwardOptions{&counter, emu});
      full_s.push_back(seconds_since(t0));
      full_n = counter.total();
    }
    out.scaling.push_back({"selection", median(sel_s), 0, 0, size});
    out.scaling.push_back({"full_forward", median(full_s), full_n, 0, size});
  }
  return out;
}

}  // namespace zoosel
