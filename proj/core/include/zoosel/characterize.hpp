#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "zoosel/matrix.hpp"
#include "zoosel/synth.hpp"
#include "zoosel/tscore.hpp"
#include "zoosel/zoo.hpp"

namespace zoosel {

/// n normalized context/target pairs every zoo model is forwarded on once.
/// Targets are scaled with their context's (z_mean, z_std).
struct CharacterizationSet {
  std::vector<Segment> contexts;
  std::vector<std::vector<double>> targets;
  std::vector<std::string> provenance;  // source pool per sample
  std::size_t context_len = 36;
  std::size_t target_len = 12;

  [[nodiscard]] std::size_t size() const noexcept { return contexts.size(); }
  [[nodiscard]] std::string fingerprint() const;
};

struct CharacterizationOptions {
  std::size_t n = 1000;
  std::size_t context_len = 36;
  std::size_t target_len = 12;
  std::uint64_t seed = 0;
  std::size_t pool_tasks = 40;  // synthetic tasks generated per pool
  SynthOptions synth;
};

/// Draws n samples, split as evenly as possible across `pools` (earlier pools
/// take the remainder). Each pool is a synthetic family.
CharacterizationSet build_characterization_set(const std::vector<std::string>& pools,
                                               const CharacterizationOptions& options);

/// Distinct characterization sources of a manifest, in manifest order.
std::vector<std::string> pools_of(const ZooManifest& zoo);

struct ErrorMatrix {
  Matrix values;  // M x n
  std::vector<std::string> model_ids;
  std::vector<std::string> sample_ids;
};

/// E[m][i] = MSE of model m's target_len-step forecast on sample i.
/// Exactly one forward per (model, sample).
ErrorMatrix build_error_matrix(const std::vector<ForecasterSpec>& models, const CharacterizationSet& dset,
                               const ForwardOptions& options = {});

/// One row of build_error_matrix for a single model.
std::vector<double> error_row(const ForecasterSpec& model, const CharacterizationSet& dset,
                              const ForwardOptions& options = {});

/// Leave-one-out advantage scaled by the sample's standardized inter-model
/// error spread:
///   s[m][i] = (mean_{k != m} E[k][i] - E[m][i]) * (sigma_i - mean(sigma)) / std(sigma)
/// with population std throughout. If std(sigma) is 0 every score is 0.
Matrix advantage_scores(const Matrix& errors);
inline Matrix advantage_scores(const ErrorMatrix& e) { return advantage_scores(e.values); }

struct ModelAdvantage {
  std::vector<std::size_t> subset;
  std::size_t size = 0;
  double weight = 1.0;
  bool empty_fallback = false;
};

struct AdvantageProfile {
  std::vector<ModelAdvantage> models;
  double tau = 1.0;
};

/// subset_m = { i : s[m][i] > tau }, weight 1/sqrt(|subset|), or weight 1 with
/// the fallback flag for an empty subset.
AdvantageProfile advantage_subsets(const Matrix& scores, double tau);

struct DecileRow {
  std::size_t decile = 0;  // 1..10, increasing inter-model spread
  std::size_t count = 0;
  double mean_sigma = 0.0;
  double gap = 0.0;  // mean over samples of (mean_m E - min_m E)
};

std::vector<DecileRow> variance_decile_report(const ErrorMatrix& e);

/// Per-sample population std over models.
std::vector<double> column_sigma(const Matrix& errors);

void save_error_matrix(const std::filesystem::path& path, const ErrorMatrix& e);
ErrorMatrix load_error_matrix(const std::filesystem::path& path);
void write_error_matrix_csv(std::ostream& out, const ErrorMatrix& e);

}  // namespace zoosel
