#pragma once

// Long-form task CSV:
//
//   task_id,channel,t,value
//   sales,0,0,12.5
//   ...
//
// Rows are sorted by (task_id, channel, t); t must be contiguous within a
// channel and every channel of a task must cover the same t range. Horizons
// (and an optional MASE season) come from a JSON manifest
// {"<task_id>": {"horizon": H, "season": s}}.

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "zoosel/tscore.hpp"

namespace zoosel {

struct TaskManifestEntry {
  std::size_t horizon = 1;
  std::optional<std::size_t> season;
};

using TaskManifest = std::map<std::string, TaskManifestEntry>;

TaskManifest parse_task_manifest(const std::string& json_text);
TaskManifest load_task_manifest(const std::filesystem::path& path);

/// Throws Error (parse_error / non_finite_value / non_contiguous_timeline)
/// with `source:line` in the message on the first bad row.
std::vector<TimeSeriesTask> parse_task_csv(std::istream& in, const TaskManifest& manifest,
                                           const std::string& source = "<stream>");

void write_task_csv(std::ostream& out, const std::vector<TimeSeriesTask>& tasks);

struct IngestResult {
  std::vector<TimeSeriesTask> tasks;
  std::vector<std::filesystem::path> loaded;
  std::vector<std::pair<std::filesystem::path, std::string>> failed;
};

/// Loads every *.csv in `dir` (sorted by file name). A bad file is recorded in
/// `failed` and skipped; the remaining files still load.
IngestResult ingest_csv(const std::filesystem::path& dir, const TaskManifest& manifest);

}  // namespace zoosel
