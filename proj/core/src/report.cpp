#include <cstdio>
#include <fstream>
#include <ostream>

#include "zoosel/blob_io.hpp"
#include "zoosel/harness.hpp"

namespace zoosel {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_report_csv(std::ostream& out, const std::vector<ReportRow>& rows) {
  out << "task_id,family,strategy,smape,mse,mase,rank_smape,rank_mase,delta_p\n";
  for (const auto& r : rows) {
    out << r.task_id << ',' << r.family << ',' << r.strategy << ',' << format_double(r.smape) << ','
        << format_double(r.mse) << ',' << format_double(r.mase) << ',' << format_double(r.rank_smape) << ','
        << format_double(r.rank_mase) << ',' << format_double(r.delta_p) << '\n';
  }
}

void write_aggregate_csv(std::ostream& out, const std::vector<AggregateRow>& rows) {
  out << "strategy,tasks,mean_smape,mean_mse,mean_mase,mean_rank_smape,mean_rank_mase,mean_delta_p,var_smape,"
         "var_rank\n";
  for (const auto& a : rows) {
    out << a.strategy << ',' << a.tasks << ',' << format_double(a.mean_smape) << ',' << format_double(a.mean_mse)
        << ',' << format_double(a.mean_mase) << ',' << format_double(a.mean_rank_smape) << ','
        << format_double(a.mean_rank_mase) << ',' << format_double(a.mean_delta_p) << ','
        << format_double(a.var_smape) << ',' << format_double(a.var_rank) << '\n';
  }
}

void write_selection_csv(std::ostream& out, const std::vector<SelectionRow>& rows) {
  out << "task_id,family,oracle_best,chosen,correct,order\n";
  for (const auto& s : rows) {
    out << s.task_id << ',' << s.family << ',' << s.oracle_best << ',' << s.chosen << ',' << (s.correct ? 1 : 0)
        << ',' << s.order << '\n';
  }
}

void write_decile_csv(std::ostream& out, const std::vector<DecileRow>& rows) {
  out << "decile,count,mean_sigma,gap\n";
  for (const auto& d : rows) {
    out << d.decile << ',' << d.count << ',' << format_double(d.mean_sigma) << ',' << format_double(d.gap) << '\n';
  }
}

void write_timing_csv(std::ostream& out, const std::vector<TimingRow>& rows) {
  out << "stage,models,seconds,forecaster_forwards,extractor_calls\n";
  for (const auto& t : rows) {
    out << t.stage << ',' << t.models << ',' << format_double(t.seconds) << ',' << t.forecaster_forwards << ','
        << t.extractor_calls << '\n';
  }
}

void write_sequential_csv(std::ostream& out, const std::vector<SequentialRow>& rows) {
  out << "step,added_model,strategy,metric,value\n";
  for (const auto& r : rows) {
    out << r.step << ',' << r.added_model << ',' << r.strategy << ',' << r.metric << ',' << format_double(r.value)
        << '\n';
  }
}

nlohmann::json summary_json(const RunReport& report) {
  nlohmann::json aggregates = nlohmann::json::object();
  for (const auto& a : report.aggregates) {
    aggregates[a.strategy] = {{"mean_smape", a.mean_smape},
                              {"mean_rank_smape", a.mean_rank_smape},
                              {"mean_rank_mase", a.mean_rank_mase},
                              {"mean_delta_p", a.mean_delta_p}};
  }
  return {{"tasks", report.task_count},
          {"models", report.model_ids},
          {"top1_accuracy", report.top1_accuracy},
          {"rank_metric", "smape (rank_mase also reported)"},
          {"delta_p_loss", "mse"},
          {"aggregates", aggregates}};
}

std::string safe_file_name(const std::string& s) {
  std::string out = s;
  for (char& c : out) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' ||
                    c == '_' || c == '.';
    if (!ok) c = '_';
  }
  return out.empty() ? "_" : out;
}

namespace {

template <class F>
void write_text(const std::filesystem::path& path, F&& body) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(Errc::io_error, "cannot write " + path.string());
  body(out);
  if (!out) fail(Errc::io_error, "write failed for " + path.string());
}

}  // namespace

void write_run_report(const std::filesystem::path& dir, const RunReport& report) {
  write_text(dir / "report.csv", [&](std::ostream& o) { write_report_csv(o, report.rows); });
  write_text(dir / "aggregate.csv", [&](std::ostream& o) { write_aggregate_csv(o, report.aggregates); });
  write_text(dir / "selection.csv", [&](std::ostream& o) { write_selection_csv(o, report.selections); });
  write_text(dir / "deciles.csv", [&](std::ostream& o) { write_decile_csv(o, report.deciles); });
  write_text(dir / "timing.csv", [&](std::ostream& o) { write_timing_csv(o, report.timing); });
  write_text(dir / "summary.json", [&](std::ostream& o) { o << summary_json(report).dump(2) << '\n'; });
  if (!report.loss_trace.empty()) {
    write_text(dir / "loss_trace.csv", [&](std::ostream& o) { write_loss_trace_csv(o, report.loss_trace); });
  }
  for (const auto& r : report.rankings) {
    write_text(dir / "ranking" / (safe_file_name(r.task_id) + ".json"),
               [&](std::ostream& o) { o << to_json(r).dump(2) << '\n'; });
  }
}

}  // namespace zoosel
