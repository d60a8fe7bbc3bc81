#include "zoosel/csv_tasks.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace zoosel {

TaskManifest parse_task_manifest(const std::string& json_text) {
  TaskManifest out;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::parse_error, std::string("task manifest: ") + e.what());
  }
  if (!j.is_object()) fail(Errc::parse_error, "task manifest must be a JSON object");
  for (const auto& [id, entry] : j.items()) {
    TaskManifestEntry e;
    try {
      e.horizon = entry.at("horizon").get<std::size_t>();
      if (entry.contains("season")) e.season = entry.at("season").get<std::size_t>();
    } catch (const nlohmann::json::exception& ex) {
      fail(Errc::parse_error, "task manifest entry '" + id + "': " + ex.what());
    }
    if (e.horizon < 1) fail(Errc::parse_error, "task manifest entry '" + id + "': horizon must be >= 1");
    out.emplace(id, e);
  }
  return out;
}

TaskManifest load_task_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::io_error, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_task_manifest(ss.str());
}

namespace {

struct PendingTask {
  std::string id;
  std::vector<std::vector<double>> channels;
  std::vector<long long> first_t;
  long long last_t = 0;
};

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

template <typename T>
bool parse_integral(const std::string& s, T& out) {
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end;
}

bool parse_real(const std::string& s, double& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size();
}

}  // namespace

std::vector<TimeSeriesTask> parse_task_csv(std::istream& in, const TaskManifest& manifest,
                                           const std::string& source) {
  std::vector<TimeSeriesTask> tasks;
  std::string line;
  std::size_t line_no = 0;
  auto where = [&] { return source + ":" + std::to_string(line_no) + ": "; };

  if (!std::getline(in, line)) fail(Errc::parse_error, source + ": empty file");
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "task_id,channel,t,value") {
    fail(Errc::parse_error, where() + "expected header 'task_id,channel,t,value'");
  }

  std::optional<PendingTask> cur;
  auto flush = [&] {
    if (!cur) return;
    const auto it = manifest.find(cur->id);
    if (it == manifest.end()) fail(Errc::parse_error, source + ": task '" + cur->id + "' missing from manifest");
    const std::size_t len = cur->channels.front().size();
    for (std::size_t c = 0; c < cur->channels.size(); ++c) {
      if (cur->channels[c].size() != len || cur->first_t[c] != cur->first_t[0]) {
        fail(Errc::non_contiguous_timeline,
             source + ": task '" + cur->id + "' channel " + std::to_string(c) + " covers a different t range");
      }
    }
    Matrix values(cur->channels.size(), len);
    for (std::size_t c = 0; c < cur->channels.size(); ++c) {
      std::copy(cur->channels[c].begin(), cur->channels[c].end(), values.row(c).begin());
    }
    tasks.emplace_back(cur->id, std::move(values), it->second.horizon);
    cur.reset();
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_csv(line);
    if (fields.size() != 4) fail(Errc::parse_error, where() + "expected 4 fields");
    const std::string& id = fields[0];
    std::size_t channel = 0;
    long long t = 0;
    double value = 0.0;
    if (id.empty()) fail(Errc::parse_error, where() + "empty task_id");
    if (!parse_integral(fields[1], channel)) fail(Errc::parse_error, where() + "bad channel '" + fields[1] + "'");
    if (!parse_integral(fields[2], t)) fail(Errc::parse_error, where() + "bad t '" + fields[2] + "'");
    if (!parse_real(fields[3], value)) fail(Errc::parse_error, where() + "bad value '" + fields[3] + "'");
    if (!std::isfinite(value)) fail(Errc::non_finite_value, where() + "non-finite value");

    if (cur && cur->id != id) {
      if (id < cur->id) fail(Errc::parse_error, where() + "rows not sorted by task_id");
      flush();
    }
    if (!cur) {
      for (const auto& done : tasks) {
        if (done.id() == id) fail(Errc::parse_error, where() + "task '" + id + "' appears twice");
      }
      cur = PendingTask{id, {}, {}, 0};
    }
    if (channel == cur->channels.size()) {
      cur->channels.emplace_back();
      cur->first_t.push_back(t);
    } else if (channel + 1 != cur->channels.size()) {
      fail(Errc::parse_error, where() + "channels must appear in order starting at 0");
    } else if (t != cur->last_t + 1) {
      fail(Errc::non_contiguous_timeline,
           where() + "non-contiguous timeline: expected t=" + std::to_string(cur->last_t + 1) +
               ", got t=" + std::to_string(t));
    }
    cur->channels.back().push_back(value);
    cur->last_t = t;
  }
  flush();
  if (tasks.empty()) fail(Errc::parse_error, source + ": no data rows");
  return tasks;
}

void write_task_csv(std::ostream& out, const std::vector<TimeSeriesTask>& tasks) {
  out << "task_id,channel,t,value\n";
  out << std::setprecision(17);
  for (const auto& task : tasks) {
    for (std::size_t c = 0; c < task.channels(); ++c) {
      const auto ch = task.channel(c);
      for (std::size_t t = 0; t < ch.size(); ++t) out << task.id() << ',' << c << ',' << t << ',' << ch[t] << '\n';
    }
  }
}

IngestResult ingest_csv(const std::filesystem::path& dir, const TaskManifest& manifest) {
  if (!std::filesystem::is_directory(dir)) fail(Errc::io_error, dir.string() + " is not a directory");
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".csv") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());

  IngestResult result;
  for (const auto& file : files) {
    std::ifstream in(file);
    try {
      if (!in) fail(Errc::io_error, "cannot open " + file.string());
      auto tasks = parse_task_csv(in, manifest, file.filename().string());
      for (auto& t : tasks) result.tasks.push_back(std::move(t));
      result.loaded.push_back(file);
    } catch (const Error& e) {
      result.failed.emplace_back(file, e.what());
    }
  }
  return result;
}

}  // namespace zoosel
