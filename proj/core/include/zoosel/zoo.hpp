#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "zoosel/tscore.hpp"

namespace zoosel {

namespace kind {

struct SeasonalNaive {
  std::size_t period = 1;
};
struct Drift {};
struct HistoricMean {};
struct Autoregressive {
  std::size_t order = 1;
};
/// Simple exponential smoothing.
struct Ses {
  double alpha = 0.5;
};
struct HoltLinear {
  double alpha = 0.5;
  double beta = 0.1;
};
/// One-hidden-layer tanh network mapping the last `lookback` z-normalized
/// points to the next point; rolled forward recursively. The blob holds
/// W1 (hidden x lookback), b1 (hidden), w2 (hidden), b2 (1) in that order.
struct NeuralPatch {
  std::size_t lookback = 1;
  std::size_t hidden = 1;
  std::vector<double> params;
};

}  // namespace kind

using ForecasterKind = std::variant<kind::SeasonalNaive, kind::Drift, kind::HistoricMean,
                                    kind::Autoregressive, kind::Ses, kind::HoltLinear,
                                    kind::NeuralPatch>;

struct ForecasterSpec {
  std::string model_id;
  ForecasterKind kind;
  int release_index = 0;
  double nominal_cost = 1.0;
  /// Sample pool (synthetic family name) the model is characterized on.
  std::string characterization_source;

  [[nodiscard]] std::size_t min_context() const;
  [[nodiscard]] std::string kind_name() const;
};

/// Throws invalid_argument on a spec that violates its invariants.
void validate(const ForecasterSpec& spec);

struct ZooManifest {
  std::vector<ForecasterSpec> models;

  [[nodiscard]] std::size_t size() const noexcept { return models.size(); }
  [[nodiscard]] std::size_t index_of(const std::string& model_id) const;
  /// Model indices sorted by (release_index, manifest position).
  [[nodiscard]] std::vector<std::size_t> release_order() const;
  [[nodiscard]] std::string fingerprint() const;
};

/// Throws on duplicate ids, fewer than `min_models` models or invalid specs.
void validate(const ZooManifest& zoo, std::size_t min_models = 2);

nlohmann::json to_json(const ForecasterSpec& spec);
ForecasterSpec spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ZooManifest& zoo);
ZooManifest manifest_from_json(const nlohmann::json& j);
ZooManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const std::filesystem::path& path, const ZooManifest& zoo);

struct ArFit {
  std::vector<double> coefficients;  // lag 1..p
  double intercept = 0.0;
  bool ridge_fallback = false;
};

/// OLS of x_t on (1, x_{t-1}, ..., x_{t-p}). Falls back to ridge with penalty
/// 1e-6 on the lag coefficients when the normal equations are singular.
ArFit fit_ar(std::span<const double> context, std::size_t order);

struct PointForecast {
  std::vector<double> values;
  bool ridge_fallback = false;
};

/// Pure, deterministic univariate forecast.
PointForecast forecast(const ForecasterSpec& spec, std::span<const double> context, std::size_t horizon);

/// Thread-safe count of forecaster forwards, keyed by model id.
class ForwardCounter {
 public:
  void record(const std::string& model_id);
  [[nodiscard]] std::uint64_t count(const std::string& model_id) const;
  [[nodiscard]] std::uint64_t total() const;
  [[nodiscard]] std::map<std::string, std::uint64_t> snapshot() const;
  void reset();

 private:
  mutable std::mutex mu_;
  std::map<std::string, std::uint64_t> counts_;
};

struct ForwardOptions {
  ForwardCounter* counter = nullptr;
  /// When > 0, each forward busy-waits nominal_cost * this many seconds to
  /// emulate heavyweight forecasters in timing runs.
  double emulate_seconds_per_cost = 0.0;
};

/// Instrumented forecast: counts the call and applies cost emulation.
PointForecast forward(const ForecasterSpec& spec, std::span<const double> context,
                      std::size_t horizon, const ForwardOptions& options = {});

/// Channel-wise forecast of the task's full history for its horizon.
Forecast forecast_task(const ForecasterSpec& spec, const TimeSeriesTask& task,
                       const ForwardOptions& options = {});

/// Five-model zoo with one specialist per synthetic family.
ZooManifest default_zoo();
/// default_zoo plus a HoltLinear model (six models).
ZooManifest extended_zoo();
/// `count` models cycling through kinds with varied parameters, for scaling
/// studies.
ZooManifest scaling_zoo(std::size_t count);

}  // namespace zoosel
