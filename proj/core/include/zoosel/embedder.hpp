#pragma once

// Co-embedding extractor: a small patch encoder mapping a length-L segment to
// a D-dim vector, with a linear decoder head used for the reconstruction
// objective.
//
//   patches  : split x into ceil(L / patch_size) patches (last one padded by
//              repeating the final point)
//   project  : u_j = Wp * patch_j + bp + pos_j                 (hidden)
//   encoder  : h_j = gelu(W_l * h_j + b_l), l = 1..encoder_layers
//   pool     : p = mean_j h_j
//   embed    : z = Wz * p + bz                                  (embed_dim)
//   decode   : y = Wd * p + bd                                  (pred_len)
//
// All gradients are written out by hand; tests check them against central
// finite differences.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "zoosel/matrix.hpp"
#include "zoosel/tscore.hpp"
#include "zoosel/zoo.hpp"

namespace zoosel {

struct ExtractorConfig {
  std::size_t input_len = 36;
  std::size_t pred_len = 12;
  std::size_t patch_size = 16;
  std::size_t encoder_layers = 1;
  std::size_t hidden_dim = 64;
  std::size_t embed_dim = 128;
  std::size_t epochs = 10;
  double learning_rate = 0.001;
  double lambda = 1.0;
  double mask_ratio = 0.15;
  double temperature = 0.1;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;

  [[nodiscard]] std::size_t num_patches() const noexcept {
    return (input_len + patch_size - 1) / patch_size;
  }
  void validate() const;

  friend bool operator==(const ExtractorConfig&, const ExtractorConfig&) = default;
};

nlohmann::json to_json(const ExtractorConfig& c);
ExtractorConfig extractor_config_from_json(const nlohmann::json& j);

/// Named slices of the flat parameter vector.
struct ParamLayout {
  struct Slice {
    std::string name;
    std::size_t offset = 0;
    std::size_t rows = 0;
    std::size_t cols = 0;
  };
  std::vector<Slice> slices;
  std::size_t total = 0;

  static ParamLayout for_config(const ExtractorConfig& c);
  [[nodiscard]] const Slice& at(std::string_view name) const;
};

class Extractor {
 public:
  Extractor(ExtractorConfig config, std::vector<double> params);

  /// Seeded uniform fan-in initialization; biases start at 0.
  static Extractor initialize(const ExtractorConfig& config);
  static Extractor zeros(const ExtractorConfig& config);

  [[nodiscard]] const ExtractorConfig& config() const noexcept { return config_; }
  [[nodiscard]] const ParamLayout& layout() const noexcept { return layout_; }
  [[nodiscard]] std::span<const double> params() const noexcept { return params_; }
  [[nodiscard]] std::span<double> mutable_params() noexcept { return params_; }
  [[nodiscard]] std::size_t embed_dim() const noexcept { return config_.embed_dim; }

  /// Embedding of an already-normalized segment of length input_len.
  [[nodiscard]] std::vector<double> embed(std::span<const double> segment) const;
  [[nodiscard]] std::vector<double> embed(const Segment& seg) const { return embed(seg.data); }
  /// Decoder output (pred_len values) for a normalized segment.
  [[nodiscard]] std::vector<double> reconstruct(std::span<const double> segment) const;

  /// FNV-1a of the serialized checkpoint bytes.
  [[nodiscard]] std::string fingerprint() const;

  friend bool operator==(const Extractor& a, const Extractor& b) {
    return a.config_ == b.config_ && a.params_ == b.params_;
  }

 private:
  ExtractorConfig config_;
  ParamLayout layout_;
  std::vector<double> params_;
};

/// Process-wide count of Extractor::embed calls (instrumentation).
std::uint64_t embed_invocations() noexcept;

/// A normalized context plus its normalized continuation.
struct TrainingSample {
  std::vector<double> context;
  std::vector<double> continuation;
};

struct SamplePool {
  std::string id;
  std::vector<TrainingSample> samples;
};

struct LossGrad {
  double loss = 0.0;
  std::vector<double> grad;
};

/// Mean squared error between decoder output and continuation, averaged over
/// samples and steps.
LossGrad loss_reconstruction(const Extractor& ext, std::span<const TrainingSample> batch);

/// Copies of each context with round(mask_ratio * L) randomly chosen points set to 0.
std::vector<std::vector<double>> make_masked_views(std::span<const TrainingSample> batch, double mask_ratio,
                                                   std::mt19937_64& rng);

/// InfoNCE over cosine similarity / temperature. For anchor b the candidates
/// are its masked view (positive) and every other anchor in the batch.
LossGrad loss_contrastive(const Extractor& ext, std::span<const TrainingSample> batch,
                          const std::vector<std::vector<double>>& views, double temperature);
LossGrad loss_contrastive(const Extractor& ext, std::span<const TrainingSample> batch, double mask_ratio,
                          double temperature, std::uint64_t mask_seed);

struct TransferPair {
  std::vector<double> a;
  std::vector<double> b;
  double g = 0.0;
  std::size_t pool_a = 0;
  std::size_t pool_b = 0;
};

struct TransferTargets {
  std::vector<std::string> pool_ids;
  Matrix g;  // pool x pool, g[i][j] = clamp(1 - MSE(proxy_i, pool_j), -1, 1)
  std::vector<TransferPair> pairs;
};

/// Mean over pairs of (g - cos(psi(a), psi(b)))^2. Empty list -> 0.
LossGrad loss_transfer(const Extractor& ext, std::span<const TransferPair> pairs);

/// Proxy for pool i is the first model in `proxy_zoo` whose
/// characterization source equals the pool id.
TransferTargets build_transfer_targets(const std::vector<SamplePool>& pools, const ZooManifest& proxy_zoo,
                                       std::size_t pairs_per_cell, std::uint64_t seed);

struct EpochLoss {
  std::size_t epoch = 0;
  double reconstruction = 0.0;
  double contrastive = 0.0;
  double transfer = 0.0;
  double total = 0.0;
};

struct TrainResult {
  Extractor extractor;
  std::vector<EpochLoss> trace;
};

/// Adam on reconstruction + contrastive + lambda * transfer. Masks and batch
/// order come from config.seed; transfer pairs are drawn from an independent
/// stream so lambda = 0 makes the result independent of `targets`.
TrainResult train(const ExtractorConfig& config, std::span<const TrainingSample> corpus,
                  const TransferTargets& targets);

/// Synthetic extractor-training pools, one per family name.
std::vector<SamplePool> build_training_pools(const std::vector<std::string>& families,
                                             std::size_t samples_per_pool, const ExtractorConfig& config,
                                             std::uint64_t seed);
std::vector<TrainingSample> flatten_pools(const std::vector<SamplePool>& pools);

void save_checkpoint(const std::filesystem::path& path, const Extractor& ext);
Extractor load_checkpoint(const std::filesystem::path& path);
std::string encode_checkpoint(const Extractor& ext);

void write_loss_trace_csv(std::ostream& out, const std::vector<EpochLoss>& trace);

}  // namespace zoosel
