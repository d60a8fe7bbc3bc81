#include "zoosel/tscore.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace zoosel {

TimeSeriesTask::TimeSeriesTask(std::string id, Matrix values, std::size_t horizon,
                               std::optional<std::string> frequency_tag)
    : id_(std::move(id)),
      values_(std::move(values)),
      horizon_(horizon),
      frequency_tag_(std::move(frequency_tag)) {
  if (values_.rows() < 1) fail(Errc::invalid_argument, "task '" + id_ + "' has no channels");
  if (values_.cols() < 2) fail(Errc::insufficient_length, "task '" + id_ + "' needs at least 2 time steps");
  if (horizon_ < 1) fail(Errc::invalid_argument, "task '" + id_ + "' horizon must be >= 1");
  for (double v : values_.flat()) {
    if (!std::isfinite(v)) fail(Errc::non_finite_value, "task '" + id_ + "' contains NaN/Inf");
  }
}

TimeSeriesTask TimeSeriesTask::head(std::size_t length) const {
  length = std::min(length, this->length());
  Matrix out(channels(), length);
  for (std::size_t c = 0; c < channels(); ++c) {
    std::copy_n(values_.row(c).begin(), length, out.row(c).begin());
  }
  return TimeSeriesTask(id_, std::move(out), horizon_, frequency_tag_);
}

std::size_t window_origins(std::size_t length, std::size_t context_len, std::size_t horizon,
                           std::size_t stride) noexcept {
  if (stride == 0 || context_len + horizon > length) return 0;
  return (length - context_len - horizon) / stride + 1;
}

std::vector<Window> make_windows(const TimeSeriesTask& task, std::size_t context_len,
                                 std::size_t horizon, std::size_t stride) {
  if (stride < 1) fail(Errc::invalid_argument, "window stride must be >= 1");
  if (context_len + horizon > task.length()) {
    fail(Errc::insufficient_length,
         "insufficient length: task '" + task.id() + "' has " + std::to_string(task.length()) +
             " steps, window needs " + std::to_string(context_len + horizon));
  }
  const std::size_t origins = window_origins(task.length(), context_len, horizon, stride);
  std::vector<Window> out;
  out.reserve(origins * task.channels());
  for (std::size_t o = 0; o < origins; ++o) {
    const std::size_t start = o * stride;
    for (std::size_t c = 0; c < task.channels(); ++c) {
      const auto ch = task.channel(c);
      Window w;
      w.channel = c;
      w.start = start;
      w.context.assign(ch.begin() + start, ch.begin() + start + context_len);
      w.target.assign(ch.begin() + start + context_len, ch.begin() + start + context_len + horizon);
      out.push_back(std::move(w));
    }
  }
  return out;
}

double mean(std::span<const double> v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double population_std(std::span<const double> v) {
  if (v.empty()) return 0.0;
  const double m = mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size()));
}

Segment znorm(std::span<const double> raw) {
  Segment seg;
  seg.z_mean = mean(raw);
  const double sd = population_std(raw);
  seg.z_std = sd > 0.0 ? sd : 1.0;
  seg.data.resize(raw.size());
  if (sd > 0.0) {
    for (std::size_t i = 0; i < raw.size(); ++i) seg.data[i] = (raw[i] - seg.z_mean) / seg.z_std;
  }
  return seg;
}

std::vector<double> apply_norm(std::span<const double> raw, double z_mean, double z_std) {
  std::vector<double> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) out[i] = (raw[i] - z_mean) / z_std;
  return out;
}

std::vector<double> denormalize(const Segment& seg) {
  std::vector<double> out(seg.data.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = seg.data[i] * seg.z_std + seg.z_mean;
  return out;
}

namespace {

void require_same_size(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    fail(Errc::shape_mismatch, std::string(what) + ": size " + std::to_string(a) + " vs " + std::to_string(b));
  }
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    fail(Errc::shape_mismatch, std::string(what) + ": matrices differ in shape");
  }
}

}  // namespace

double smape(std::span<const double> y, std::span<const double> yhat) {
  require_same_size(y.size(), yhat.size(), "smape");
  if (y.empty()) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double denom = std::abs(y[i]) + std::abs(yhat[i]);
    if (denom > 0.0) acc += 2.0 * std::abs(y[i] - yhat[i]) / denom;
  }
  return acc / static_cast<double>(y.size());
}

double smape(const Matrix& y, const Matrix& yhat) {
  require_same_shape(y, yhat, "smape");
  return smape(y.flat(), yhat.flat());
}

double mse(std::span<const double> y, std::span<const double> yhat) {
  require_same_size(y.size(), yhat.size(), "mse");
  if (y.empty()) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) acc += (y[i] - yhat[i]) * (y[i] - yhat[i]);
  return acc / static_cast<double>(y.size());
}

double mse(const Matrix& y, const Matrix& yhat) {
  require_same_shape(y, yhat, "mse");
  return mse(y.flat(), yhat.flat());
}

double mase(std::span<const double> y, std::span<const double> yhat,
            std::span<const double> insample, std::size_t season) {
  require_same_size(y.size(), yhat.size(), "mase");
  if (season < 1 || insample.size() <= season) {
    fail(Errc::degenerate_insample, "degenerate insample: need more than `season` in-sample points");
  }
  double naive = 0.0;
  for (std::size_t t = season; t < insample.size(); ++t) naive += std::abs(insample[t] - insample[t - season]);
  naive /= static_cast<double>(insample.size() - season);
  if (!(naive > 0.0)) fail(Errc::degenerate_insample, "degenerate insample: seasonal-naive error is zero");
  double mae = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) mae += std::abs(y[i] - yhat[i]);
  mae /= static_cast<double>(std::max<std::size_t>(y.size(), 1));
  return mae / naive;
}

std::vector<double> rank_scores(std::span<const double> metric) {
  const std::size_t m = metric.size();
  std::vector<std::size_t> idx(m);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return metric[a] < metric[b]; });
  std::vector<double> ranks(m);
  std::size_t i = 0;
  while (i < m) {
    std::size_t j = i;
    while (j + 1 < m && metric[idx[j + 1]] == metric[idx[i]]) ++j;
    // positions i..j (0-based) share rank ((i+1) + (j+1)) / 2
    const double r = 0.5 * static_cast<double>(i + j + 2);
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace zoosel
