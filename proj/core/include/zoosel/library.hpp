#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "zoosel/characterize.hpp"
#include "zoosel/embedder.hpp"
#include "zoosel/matrix.hpp"
#include "zoosel/zoo.hpp"

namespace zoosel {

/// Zoo representation library: one embedding row per model plus everything
/// needed to append models without re-running the extractor or incumbents.
struct ReprLibrary {
  Matrix r_zoo;                       // M x D
  std::vector<double> weights;        // M
  std::vector<std::string> model_ids; // M
  std::vector<bool> empty_subset;     // M; row is the mean over all of D
  std::vector<std::size_t> subset_sizes;
  std::string extractor_fingerprint;
  std::string dset_fingerprint;
  double tau = 1.0;
  std::size_t n = 0;
  Matrix segment_embeddings;          // n x D, cache of psi over D
  Matrix errors;                      // M x n characterization errors
  /// Free-form provenance of D (pools, seed, lengths) so it can be rebuilt.
  nlohmann::json dset_meta = nlohmann::json::object();

  [[nodiscard]] std::size_t size() const noexcept { return model_ids.size(); }
  [[nodiscard]] std::size_t dim() const noexcept { return r_zoo.cols(); }

  friend bool operator==(const ReprLibrary&, const ReprLibrary&) = default;
};

struct TaskRepr {
  Matrix r_task;  // C x D
  std::string task_id;
  std::size_t segments_per_channel = 5;
};

/// Mean embedding of model m's advantage subset, computed with the extractor.
/// An empty subset falls back to the mean over all of D.
std::vector<double> embed_model(const Extractor& ext, const ModelAdvantage& adv, const CharacterizationSet& dset);

/// Same mean, taken from cached per-sample embeddings.
std::vector<double> mean_of_rows(const Matrix& rows, const ModelAdvantage& adv);

/// psi applied to every characterization context (n extractor calls).
Matrix embed_characterization_set(const Extractor& ext, const CharacterizationSet& dset);

/// Per channel: segments_per_channel length-L windows drawn from the valid
/// start offsets (without replacement when enough exist), z-normalized,
/// embedded and averaged. Short channels are left-padded by repeating the
/// first value.
TaskRepr embed_task(const Extractor& ext, const TimeSeriesTask& task, std::size_t segments_per_channel = 5,
                    std::uint64_t seed = 0);

/// The start offsets embed_task samples for one channel.
std::vector<std::size_t> sample_offsets(std::size_t channel_len, std::size_t segment_len, std::size_t count,
                                        std::mt19937_64& rng);

/// Full precompute: forward every model over D, score, embed D once, average.
ReprLibrary build_library(const std::vector<ForecasterSpec>& models, const CharacterizationSet& dset,
                          const Extractor& ext, double tau, const ForwardOptions& options = {});

/// Appends one model: n forwards of the new model only, scores and weights
/// recomputed from the extended error matrix, rows re-derived from the
/// embedding cache. Throws library_drift if dset or ext differ from the ones
/// that built `lib`.
ReprLibrary add_model(const ReprLibrary& lib, const ForecasterSpec& spec, const CharacterizationSet& dset,
                      const Extractor& ext, double tau, const ForwardOptions& options = {});

/// Rebuilds rows, weights and flags from `errors` and the embedding cache.
void derive_representations(ReprLibrary& lib);

void save_library(const std::filesystem::path& path, const ReprLibrary& lib);
ReprLibrary load_library(const std::filesystem::path& path);

/// Advisory flock() on `<path>.lock`, held for the object's lifetime.
class FileLock {
 public:
  enum class Mode { shared, exclusive };
  FileLock(const std::filesystem::path& path, Mode mode);
  ~FileLock();
  FileLock(const FileLock&) = delete;
  FileLock& operator=(const FileLock&) = delete;

 private:
  int fd_ = -1;
};

}  // namespace zoosel
