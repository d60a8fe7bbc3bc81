#pragma once

#include <chrono>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "zoosel/matrix.hpp"

namespace zoosel {

/// Multichannel history (C x T) plus a forecast horizon. The unit of
/// selection and forecasting.
class TimeSeriesTask {
 public:
  /// Validates C >= 1, T >= 2, horizon >= 1 and that every value is finite.
  TimeSeriesTask(std::string id, Matrix values, std::size_t horizon,
                 std::optional<std::string> frequency_tag = std::nullopt);

  [[nodiscard]] const std::string& id() const noexcept { return id_; }
  [[nodiscard]] const Matrix& values() const noexcept { return values_; }
  [[nodiscard]] std::size_t channels() const noexcept { return values_.rows(); }
  [[nodiscard]] std::size_t length() const noexcept { return values_.cols(); }
  [[nodiscard]] std::size_t horizon() const noexcept { return horizon_; }
  [[nodiscard]] const std::optional<std::string>& frequency_tag() const noexcept { return frequency_tag_; }
  [[nodiscard]] std::span<const double> channel(std::size_t c) const noexcept { return values_.row(c); }

  /// Leading `length` steps of every channel, as a new task with the same id.
  [[nodiscard]] TimeSeriesTask head(std::size_t length) const;

 private:
  std::string id_;
  Matrix values_;
  std::size_t horizon_;
  std::optional<std::string> frequency_tag_;
};

/// Fixed-length, z-normalized slice of one channel.
struct Segment {
  std::vector<double> data;
  std::string source_task;
  std::size_t source_channel = 0;
  double z_mean = 0.0;
  double z_std = 1.0;
};

struct Forecast {
  Matrix values;  // C x H
  std::string producer_model;
  std::chrono::nanoseconds wall_time{0};
  bool ridge_fallback = false;
};

/// One (context, target) pair cut from a single channel.
struct Window {
  std::size_t channel = 0;
  std::size_t start = 0;
  std::vector<double> context;
  std::vector<double> target;
};

/// Rolling-origin windows ordered by start index, then channel.
std::vector<Window> make_windows(const TimeSeriesTask& task, std::size_t context_len,
                                 std::size_t horizon, std::size_t stride);

/// Number of origins make_windows would produce for a series of `length`.
std::size_t window_origins(std::size_t length, std::size_t context_len, std::size_t horizon,
                           std::size_t stride) noexcept;

/// Per-segment z-score with population std; a constant input becomes all
/// zeros with z_std recorded as 1.
Segment znorm(std::span<const double> raw);
std::vector<double> denormalize(const Segment& seg);

/// Applies an existing segment's (z_mean, z_std) to other values, e.g. the
/// target that follows a normalized context.
std::vector<double> apply_norm(std::span<const double> raw, double z_mean, double z_std);

/// Mean of 2|y - yhat| / (|y| + |yhat|); a term with both magnitudes zero is 0.
double smape(std::span<const double> y, std::span<const double> yhat);
double smape(const Matrix& y, const Matrix& yhat);

double mse(std::span<const double> y, std::span<const double> yhat);
double mse(const Matrix& y, const Matrix& yhat);

/// Forecast MAE scaled by the in-sample seasonal-naive MAE.
double mase(std::span<const double> y, std::span<const double> yhat,
            std::span<const double> insample, std::size_t season);

/// 1-based ranks, lower metric first; ties share the average of their positions.
std::vector<double> rank_scores(std::span<const double> per_model_metric);

double mean(std::span<const double> v);
double population_std(std::span<const double> v);

}  // namespace zoosel
