#include "zoosel/library.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "zoosel/blob_io.hpp"

namespace zoosel {

std::vector<double> mean_of_rows(const Matrix& rows, const ModelAdvantage& adv) {
  std::vector<double> out(rows.cols(), 0.0);
  if (rows.rows() == 0) return out;
  auto accumulate_row = [&](std::size_t i) {
    if (i >= rows.rows()) fail(Errc::invalid_argument, "advantage index out of range");
    const auto r = rows.row(i);
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += r[k];
  };
  std::size_t count = 0;
  if (adv.subset.empty()) {
    for (std::size_t i = 0; i < rows.rows(); ++i) accumulate_row(i);
    count = rows.rows();
  } else {
    for (std::size_t i : adv.subset) accumulate_row(i);
    count = adv.subset.size();
  }
  for (auto& v : out) v /= static_cast<double>(count);
  return out;
}

std::vector<double> embed_model(const Extractor& ext, const ModelAdvantage& adv, const CharacterizationSet& dset) {
  std::vector<double> out(ext.embed_dim(), 0.0);
  std::vector<std::size_t> idx = adv.subset;
  if (idx.empty()) {
    idx.resize(dset.size());
    std::iota(idx.begin(), idx.end(), 0);
  }
  for (std::size_t i : idx) {
    if (i >= dset.size()) fail(Errc::invalid_argument, "advantage index out of range");
    const auto z = ext.embed(dset.contexts[i]);
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += z[k];
  }
  if (!idx.empty()) {
    for (auto& v : out) v /= static_cast<double>(idx.size());
  }
  return out;
}

Matrix embed_characterization_set(const Extractor& ext, const CharacterizationSet& dset) {
  Matrix out(dset.size(), ext.embed_dim());
  for (std::size_t i = 0; i < dset.size(); ++i) {
    const auto z = ext.embed(dset.contexts[i]);
    std::copy(z.begin(), z.end(), out.row(i).begin());
  }
  return out;
}

std::vector<std::size_t> sample_offsets(std::size_t channel_len, std::size_t segment_len, std::size_t count,
                                        std::mt19937_64& rng) {
  const std::size_t valid = channel_len >= segment_len ? channel_len - segment_len + 1 : 1;
  std::vector<std::size_t> out;
  out.reserve(count);
  if (valid >= count) {
    std::vector<std::size_t> pool(valid);
    std::iota(pool.begin(), pool.end(), 0);
    for (std::size_t i = 0; i < count; ++i) {
      const auto j = std::uniform_int_distribution<std::size_t>(i, valid - 1)(rng);
      std::swap(pool[i], pool[j]);
      out.push_back(pool[i]);
    }
  } else {
    std::uniform_int_distribution<std::size_t> pick(0, valid - 1);
    for (std::size_t i = 0; i < count; ++i) out.push_back(pick(rng));
  }
  return out;
}

TaskRepr embed_task(const Extractor& ext, const TimeSeriesTask& task, std::size_t segments_per_channel,
                    std::uint64_t seed) {
  if (segments_per_channel < 1) fail(Errc::invalid_argument, "segments_per_channel must be >= 1");
  const std::size_t len = ext.config().input_len;
  TaskRepr repr;
  repr.task_id = task.id();
  repr.segments_per_channel = segments_per_channel;
  repr.r_task = Matrix(task.channels(), ext.embed_dim());
  std::mt19937_64 rng(seed);
  for (std::size_t c = 0; c < task.channels(); ++c) {
    const auto ch = task.channel(c);
    if (ch.empty()) fail(Errc::insufficient_length, "task '" + task.id() + "' has an empty channel");
    std::vector<double> series(ch.begin(), ch.end());
    if (series.size() < len) series.insert(series.begin(), len - series.size(), series.front());
    auto row = repr.r_task.row(c);
    for (std::size_t start : sample_offsets(series.size(), len, segments_per_channel, rng)) {
      const Segment seg = znorm(std::span<const double>(series).subspan(start, len));
      const auto z = ext.embed(seg);
      for (std::size_t k = 0; k < z.size(); ++k) row[k] += z[k];
    }
    for (auto& v : row) v /= static_cast<double>(segments_per_channel);
  }
  return repr;
}

void derive_representations(ReprLibrary& lib) {
  const std::size_t m = lib.model_ids.size();
  if (lib.errors.rows() != m) fail(Errc::shape_mismatch, "error matrix rows != model count");
  AdvantageProfile profile;
  if (m >= 2) {
    profile = advantage_subsets(advantage_scores(lib.errors), lib.tau);
  } else {
    // a lone model has no peers to be compared against
    profile.tau = lib.tau;
    profile.models.assign(m, ModelAdvantage{{}, 0, 1.0, true});
  }
  lib.r_zoo = Matrix(m, lib.segment_embeddings.cols());
  lib.weights.assign(m, 1.0);
  lib.empty_subset.assign(m, false);
  lib.subset_sizes.assign(m, 0);
  for (std::size_t k = 0; k < m; ++k) {
    const auto& adv = profile.models[k];
    const auto row = mean_of_rows(lib.segment_embeddings, adv);
    std::copy(row.begin(), row.end(), lib.r_zoo.row(k).begin());
    lib.weights[k] = adv.weight;
    lib.empty_subset[k] = adv.empty_fallback;
    lib.subset_sizes[k] = adv.size;
  }
}

namespace {

nlohmann::json dset_meta_of(const CharacterizationSet& dset) {
  return {{"context_len", dset.context_len}, {"target_len", dset.target_len}};
}

}  // namespace

ReprLibrary build_library(const std::vector<ForecasterSpec>& models, const CharacterizationSet& dset,
                          const Extractor& ext, double tau, const ForwardOptions& options) {
  if (models.empty()) fail(Errc::invalid_argument, "library needs at least one model");
  if (dset.context_len != ext.config().input_len) {
    fail(Errc::shape_mismatch, "characterization context length differs from extractor input length");
  }
  ReprLibrary lib;
  const ErrorMatrix e = build_error_matrix(models, dset, options);
  lib.errors = e.values;
  lib.model_ids = e.model_ids;
  lib.tau = tau;
  lib.n = dset.size();
  lib.extractor_fingerprint = ext.fingerprint();
  lib.dset_fingerprint = dset.fingerprint();
  lib.dset_meta = dset_meta_of(dset);
  lib.segment_embeddings = embed_characterization_set(ext, dset);
  derive_representations(lib);
  return lib;
}

ReprLibrary add_model(const ReprLibrary& lib, const ForecasterSpec& spec, const CharacterizationSet& dset,
                      const Extractor& ext, double tau, const ForwardOptions& options) {
  if (lib.extractor_fingerprint != ext.fingerprint() || lib.dset_fingerprint != dset.fingerprint()) {
    fail(Errc::library_drift, "library/extractor drift: characterization set or extractor changed since build");
  }
  if (std::find(lib.model_ids.begin(), lib.model_ids.end(), spec.model_id) != lib.model_ids.end()) {
    fail(Errc::invalid_argument, "model '" + spec.model_id + "' is already in the library");
  }
  ReprLibrary out = lib;
  out.errors.append_row(error_row(spec, dset, options));
  out.model_ids.push_back(spec.model_id);
  out.tau = tau;
  derive_representations(out);
  return out;
}

namespace {

Matrix as_row(const std::vector<double>& v) { return Matrix(1, v.size(), v); }

}  // namespace

void save_library(const std::filesystem::path& path, const ReprLibrary& lib) {
  blob::Blob b;
  b.kind = "library";
  std::vector<int> flags(lib.empty_subset.begin(), lib.empty_subset.end());
  b.header = {{"model_ids", lib.model_ids},
              {"D", lib.dim()},
              {"n", lib.n},
              {"tau", lib.tau},
              {"flags", flags},
              {"subset_sizes", lib.subset_sizes},
              {"extractor_fingerprint", lib.extractor_fingerprint},
              {"dset_fingerprint", lib.dset_fingerprint},
              {"dset", lib.dset_meta}};
  b.blocks.push_back({"r_zoo", lib.r_zoo});
  b.blocks.push_back({"weights", as_row(lib.weights)});
  b.blocks.push_back({"segment_embeddings", lib.segment_embeddings});
  b.blocks.push_back({"errors", lib.errors});
  blob::write_file(path, b);
}

ReprLibrary load_library(const std::filesystem::path& path) {
  const auto b = blob::read_file(path, "library");
  const auto& h = b.header;
  if (!h.contains("extractor_fingerprint") || !h["extractor_fingerprint"].is_string() ||
      h["extractor_fingerprint"].get<std::string>().empty()) {
    fail(Errc::fingerprint_absent, path.string() + ": library has no extractor fingerprint");
  }
  ReprLibrary lib;
  try {
    lib.model_ids = h.at("model_ids").get<std::vector<std::string>>();
    lib.n = h.at("n").get<std::size_t>();
    lib.tau = h.at("tau").get<double>();
    const auto flags = h.at("flags").get<std::vector<int>>();
    lib.empty_subset.assign(flags.begin(), flags.end());
    lib.subset_sizes = h.at("subset_sizes").get<std::vector<std::size_t>>();
    lib.extractor_fingerprint = h.at("extractor_fingerprint").get<std::string>();
    lib.dset_fingerprint = h.at("dset_fingerprint").get<std::string>();
    lib.dset_meta = h.at("dset");
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::malformed_header, path.string() + ": " + e.what());
  }
  lib.r_zoo = b.block("r_zoo");
  lib.weights = b.block("weights").data();
  lib.segment_embeddings = b.block("segment_embeddings");
  lib.errors = b.block("errors");
  const std::size_t m = lib.model_ids.size();
  if (lib.r_zoo.rows() != m || lib.weights.size() != m || lib.empty_subset.size() != m ||
      lib.errors.rows() != m || lib.errors.cols() != lib.n || lib.segment_embeddings.rows() != lib.n ||
      lib.segment_embeddings.cols() != lib.r_zoo.cols() || h.at("D").get<std::size_t>() != lib.r_zoo.cols()) {
    fail(Errc::malformed_header, path.string() + ": block shapes disagree with header");
  }
  return lib;
}

FileLock::FileLock(const std::filesystem::path& path, Mode mode) {
  const std::string lock_path = path.string() + ".lock";
  if (mode == Mode::exclusive && path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  fd_ = ::open(lock_path.c_str(), O_RDWR | O_CREAT, 0644);
  if (fd_ < 0) fail(Errc::io_error, "cannot open lock file " + lock_path);
  if (::flock(fd_, mode == Mode::shared ? LOCK_SH : LOCK_EX) != 0) {
    ::close(fd_);
    fail(Errc::io_error, "cannot lock " + lock_path);
  }
}

FileLock::~FileLock() {
  if (fd_ >= 0) {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
}

}  // namespace zoosel
