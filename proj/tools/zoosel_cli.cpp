#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "zoosel/blob_io.hpp"
#include "zoosel/characterize.hpp"
#include "zoosel/csv_tasks.hpp"
#include "zoosel/embedder.hpp"
#include "zoosel/harness.hpp"
#include "zoosel/library.hpp"
#include "zoosel/selector.hpp"

namespace fs = std::filesystem;
using namespace zoosel;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

BenchmarkConfig effective_config(const Globals& g) {
  BenchmarkConfig c = g.config.empty() ? BenchmarkConfig{} : load_benchmark_config(g.config);
  if (g.seed) c.seed = *g.seed;
  if (!g.out.empty()) c.out = g.out;
  return c;
}

template <class F>
void write_file(const fs::path& path, F&& body) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(Errc::io_error, "cannot write " + path.string());
  body(out);
}

/// Tasks named on the command line, or the configured suite.
std::vector<EvalTask> cli_tasks(const BenchmarkConfig& cfg, const std::string& csv, const std::string& manifest,
                                const std::string& task_id) {
  std::vector<EvalTask> tasks;
  if (!csv.empty()) {
    if (manifest.empty()) fail(Errc::invalid_argument, "--tasks-csv needs --manifest");
    const auto m = load_task_manifest(manifest);
    std::ifstream in(csv);
    if (!in) fail(Errc::io_error, "cannot open " + csv);
    for (auto& t : parse_task_csv(in, m, csv)) {
      const auto it = m.find(t.id());
      const std::size_t season = it != m.end() && it->second.season ? *it->second.season : 1;
      tasks.push_back({std::move(t), "csv", season});
    }
  } else {
    tasks = load_tasks(cfg);
  }
  if (!task_id.empty()) {
    std::erase_if(tasks, [&](const EvalTask& t) { return t.task.id() != task_id; });
    if (tasks.empty()) fail(Errc::invalid_argument, "task '" + task_id + "' not found");
  }
  return tasks;
}

// Specs of the library's models live next to it so forecast can resolve added models.
std::filesystem::path zoo_sidecar(const std::filesystem::path& library) {
  return library.string() + ".zoo.json";
}

Extractor cli_extractor(BenchmarkConfig& cfg, const ZooManifest& zoo, const std::string& path) {
  if (!path.empty()) cfg.extractor.checkpoint = path;
  return obtain_extractor(cfg, zoo);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"zoosel: forward-free forecaster selection from a precomputed zoo representation library"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "Benchmark config JSON");
  app.add_option("--seed", g.seed, "Global seed (overrides the config)");
  app.add_option("--out", g.out, "Output directory (overrides the config)");

  std::string extractor_path, library_path, model_path, tasks_csv, task_manifest, task_id;
  std::size_t k = 0;

  auto* characterize = app.add_subcommand("characterize", "Forward the zoo over the characterization set");
  auto* train_ext = app.add_subcommand("train-extractor", "Train the co-embedding extractor");
  auto* embed_zoo = app.add_subcommand("embed-zoo", "Build the zoo representation library");
  embed_zoo->add_option("--extractor", extractor_path, "Extractor checkpoint (trains one when omitted)");
  auto* add = app.add_subcommand("add-model", "Append one model to an existing library");
  add->add_option("--library", library_path, "Library file")->required();
  add->add_option("--model", model_path, "JSON file with one model spec")->required();
  add->add_option("--extractor", extractor_path, "Extractor checkpoint that built the library")->required();
  auto* select = app.add_subcommand("select", "Rank the zoo for tasks without any forecaster forward");
  auto* forecast = app.add_subcommand("forecast", "Select and emit the top-K ensemble forecast");
  for (auto* sc : {select, forecast}) {
    sc->add_option("--library", library_path, "Library file")->required();
    sc->add_option("--extractor", extractor_path, "Extractor checkpoint")->required();
    sc->add_option("--tasks-csv", tasks_csv, "Task CSV (task_id,channel,t,value)");
    sc->add_option("--manifest", task_manifest, "Task manifest JSON for --tasks-csv");
    sc->add_option("--task", task_id, "Only this task id");
  }
  forecast->add_option("-k", k, "Ensemble size (default: config primary K)");
  auto* bench = app.add_subcommand("bench", "Full benchmark against the full-forward oracle");
  auto* seq = app.add_subcommand("sequential-eval", "Sequential-release evaluation with four baselines");
  auto* timing = app.add_subcommand("timing", "Three-stage timing protocol and zoo-size scaling");

  CLI11_PARSE(app, argc, argv);

  try {
    BenchmarkConfig cfg = effective_config(g);
    const fs::path out = cfg.out;

    if (*characterize) {
      const auto zoo = load_zoo(cfg);
      const auto dset = build_dset(cfg, zoo);
      const auto e = build_error_matrix(zoo.models, dset);
      save_error_matrix(out / "error_matrix.bin", e);
      write_file(out / "error_matrix.csv", [&](std::ostream& o) { write_error_matrix_csv(o, e); });
      write_file(out / "deciles.csv", [&](std::ostream& o) { write_decile_csv(o, variance_decile_report(e)); });
      const auto profile = advantage_subsets(advantage_scores(e), cfg.tau);
      nlohmann::json adv = nlohmann::json::array();
      for (std::size_t m = 0; m < profile.models.size(); ++m) {
        adv.push_back({{"model_id", e.model_ids[m]},
                       {"subset_size", profile.models[m].size},
                       {"weight", profile.models[m].weight},
                       {"empty_fallback", profile.models[m].empty_fallback}});
      }
      write_file(out / "advantage.json", [&](std::ostream& o) { o << adv.dump(2) << '\n'; });
      std::cout << "characterized " << e.model_ids.size() << " models on n=" << dset.size() << " samples -> "
                << (out / "error_matrix.bin").string() << '\n';
    } else if (*train_ext) {
      const auto zoo = load_zoo(cfg);
      cfg.extractor.checkpoint.reset();
      std::vector<EpochLoss> trace;
      const auto ext = obtain_extractor(cfg, zoo, &trace);
      save_checkpoint(out / "extractor.bin", ext);
      write_file(out / "loss_trace.csv", [&](std::ostream& o) { write_loss_trace_csv(o, trace); });
      std::cout << "extractor " << ext.fingerprint() << " -> " << (out / "extractor.bin").string() << '\n';
    } else if (*embed_zoo) {
      const auto zoo = load_zoo(cfg);
      validate(zoo, 1);
      const auto ext = cli_extractor(cfg, zoo, extractor_path);
      if (extractor_path.empty()) save_checkpoint(out / "extractor.bin", ext);
      const auto dset = build_dset(cfg, zoo);
      auto lib = build_library(zoo.models, dset, ext, cfg.tau);
      lib.dset_meta["pools"] = pools_of(zoo);
      lib.dset_meta["seed"] = cfg.seed;
      lib.dset_meta["n"] = cfg.characterization.n;
      const auto path = out / "library.bin";
      FileLock lock(path, FileLock::Mode::exclusive);
      save_library(path, lib);
      save_manifest(zoo_sidecar(path), zoo);
      std::cout << "library with " << lib.size() << " models, D=" << lib.dim() << " -> " << path.string() << '\n';
    } else if (*add) {
      FileLock lock(library_path, FileLock::Mode::exclusive);
      const auto lib = load_library(library_path);
      nlohmann::json spec_json;
      std::ifstream in(model_path);
      if (!in) fail(Errc::io_error, "cannot open " + model_path);
      try {
        in >> spec_json;
      } catch (const nlohmann::json::exception& e) {
        fail(Errc::parse_error, model_path + ": " + e.what());
      }
      const auto spec = spec_from_json(spec_json);
      validate(spec);
      const auto ext = load_checkpoint(extractor_path);
      // rebuild D from the provenance the library recorded
      const auto pools = lib.dset_meta.value("pools", std::vector<std::string>{});
      if (lib.dset_meta.contains("seed")) cfg.seed = lib.dset_meta.at("seed").get<std::uint64_t>();
      if (lib.dset_meta.contains("n")) cfg.characterization.n = lib.dset_meta.at("n").get<std::size_t>();
      const auto dset = build_dset(cfg, pools);
      const auto grown = add_model(lib, spec, dset, ext, lib.tau);
      const auto sidecar = zoo_sidecar(library_path);
      ZooManifest zoo = std::filesystem::exists(sidecar) ? load_manifest(sidecar) : load_zoo(cfg);
      zoo.models.push_back(spec);
      save_library(library_path, grown);
      save_manifest(sidecar, zoo);
      std::cout << "added " << spec.model_id << "; library now has " << grown.size() << " models\n";
    } else if (*select || *forecast) {
      FileLock lock(library_path, FileLock::Mode::shared);
      const auto lib = load_library(library_path);
      const auto ext = load_checkpoint(extractor_path);
      if (ext.fingerprint() != lib.extractor_fingerprint) {
        fail(Errc::library_drift, "library/extractor drift: checkpoint does not match the library");
      }
      const auto tasks = cli_tasks(cfg, tasks_csv, task_manifest, task_id);
      const auto sidecar = zoo_sidecar(library_path);
      const ZooManifest zoo = std::filesystem::exists(sidecar) ? load_manifest(sidecar) : load_zoo(cfg);
      for (const auto& et : tasks) {
        SelectionReport report;
        report.task_id = et.task.id();
        auto t0 = std::chrono::steady_clock::now();
        const auto repr = embed_task(ext, et.task, cfg.segments_per_channel, seeds::task_embedding(cfg.seed, et.task.id()));
        auto t1 = std::chrono::steady_clock::now();
        const auto ranking = rank_models(lib, repr, cfg.r);
        auto t2 = std::chrono::steady_clock::now();
        report.timings.task_embedding = t1 - t0;
        report.timings.similarity = t2 - t1;
        for (std::size_t m : ranking.order) report.order.push_back(lib.model_ids[m]);
        write_file(out / "ranking" / (safe_file_name(et.task.id()) + ".json"),
                   [&](std::ostream& o) { o << to_json(ranking).dump(2) << '\n'; });
        std::cout << et.task.id() << ":";
        for (std::size_t pos = 0; pos < ranking.order.size(); ++pos) {
          const std::size_t m = ranking.order[pos];
          double mean_sim = 0.0;
          for (double s : ranking.sim.row(m)) mean_sim += s;
          mean_sim /= static_cast<double>(ranking.sim.cols());
          std::cout << ' ' << lib.model_ids[m] << "(h=" << ranking.hamming[m] << ",sim=" << mean_sim << ")";
        }
        std::cout << '\n';
        if (*forecast) {
          const std::size_t kk = k ? k : std::min(cfg.primary_k, lib.size());
          std::vector<ForecasterSpec> specs;
          for (const auto& id : lib.model_ids) specs.push_back(zoo.models.at(zoo.index_of(id)));
          report.chosen_k = kk;
          report.ensemble_forecast = topk_ensemble(specs, ranking.order, et.task, kk);
          report.timings.forecast = report.ensemble_forecast.wall_time;
          const auto& v = report.ensemble_forecast.values;
          write_file(out / "forecast" / (safe_file_name(et.task.id()) + ".csv"), [&](std::ostream& o) {
            o << "task_id,channel,step,value\n";
            for (std::size_t c = 0; c < v.rows(); ++c) {
              for (std::size_t h = 0; h < v.cols(); ++h) {
                o << et.task.id() << ',' << c << ',' << h + 1 << ',' << format_double(v(c, h)) << '\n';
              }
            }
          });
          write_file(out / "selection" / (safe_file_name(et.task.id()) + ".json"),
                     [&](std::ostream& o) { o << to_json(report).dump(2) << '\n'; });
        }
      }
    } else if (*bench) {
      const auto report = run_pipeline(cfg);
      write_run_report(out, report);
      std::cout << "tasks=" << report.task_count << " top1_accuracy=" << report.top1_accuracy << '\n';
      for (const auto& a : report.aggregates) {
        std::cout << "  " << a.strategy << " smape=" << a.mean_smape << " rank=" << a.mean_rank_smape
                  << " delta_p=" << a.mean_delta_p << '\n';
      }
    } else if (*seq) {
      const auto report = sequential_release_eval(cfg);
      write_file(out / "sequential.csv", [&](std::ostream& o) { write_sequential_csv(o, report.rows); });
      std::cout << "sequential evaluation over " << report.release_order.size() << " releases -> "
                << (out / "sequential.csv").string() << '\n';
    } else if (*timing) {
      const auto report = timing_report(cfg);
      write_file(out / "timing.csv", [&](std::ostream& o) { write_timing_csv(o, report.rows); });
      write_file(out / "timing_scaling.csv", [&](std::ostream& o) { write_timing_csv(o, report.scaling); });
      for (const auto& r : report.rows) {
        std::cout << r.stage << ": " << r.seconds << " s, forwards=" << r.forecaster_forwards << '\n';
      }
    }
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.code()) << "]: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
