#include "zoosel/zoo.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "zoosel/blob_io.hpp"

namespace zoosel {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

std::size_t ForecasterSpec::min_context() const {
  return std::visit(overloaded{
                        [](const kind::SeasonalNaive& k) { return k.period; },
                        [](const kind::Drift&) { return std::size_t{2}; },
                        [](const kind::HistoricMean&) { return std::size_t{1}; },
                        [](const kind::Autoregressive& k) { return 2 * k.order + 1; },
                        [](const kind::Ses&) { return std::size_t{1}; },
                        [](const kind::HoltLinear&) { return std::size_t{2}; },
                        [](const kind::NeuralPatch& k) { return k.lookback; },
                    },
                    kind);
}

std::string ForecasterSpec::kind_name() const {
  return std::visit(overloaded{
                        [](const kind::SeasonalNaive&) { return std::string("seasonal_naive"); },
                        [](const kind::Drift&) { return std::string("drift"); },
                        [](const kind::HistoricMean&) { return std::string("historic_mean"); },
                        [](const kind::Autoregressive&) { return std::string("ar"); },
                        [](const kind::Ses&) { return std::string("ses"); },
                        [](const kind::HoltLinear&) { return std::string("holt_linear"); },
                        [](const kind::NeuralPatch&) { return std::string("neural_patch"); },
                    },
                    kind);
}

namespace {

bool in_unit_interval(double v) { return v > 0.0 && v <= 1.0; }

}  // namespace

void validate(const ForecasterSpec& spec) {
  const auto bad = [&](const std::string& why) {
    fail(Errc::invalid_argument, "model '" + spec.model_id + "': " + why);
  };
  if (spec.model_id.empty()) fail(Errc::invalid_argument, "model id must not be empty");
  if (spec.release_index < 0) bad("release_index must be >= 0");
  if (!(spec.nominal_cost >= 0.0)) bad("nominal_cost must be >= 0");
  std::visit(overloaded{
                 [&](const kind::SeasonalNaive& k) {
                   if (k.period < 1) bad("period must be >= 1");
                 },
                 [](const kind::Drift&) {},
                 [](const kind::HistoricMean&) {},
                 [&](const kind::Autoregressive& k) {
                   if (k.order < 1) bad("AR order must be >= 1");
                 },
                 [&](const kind::Ses& k) {
                   if (!in_unit_interval(k.alpha)) bad("alpha must be in (0,1]");
                 },
                 [&](const kind::HoltLinear& k) {
                   if (!in_unit_interval(k.alpha) || !in_unit_interval(k.beta)) bad("alpha/beta must be in (0,1]");
                 },
                 [&](const kind::NeuralPatch& k) {
                   if (k.lookback < 1 || k.hidden < 1) bad("lookback and hidden must be >= 1");
                   if (k.params.size() != k.hidden * k.lookback + 2 * k.hidden + 1) bad("params blob has wrong size");
                 },
             },
             spec.kind);
}

std::size_t ZooManifest::index_of(const std::string& model_id) const {
  for (std::size_t i = 0; i < models.size(); ++i) {
    if (models[i].model_id == model_id) return i;
  }
  fail(Errc::invalid_argument, "unknown model '" + model_id + "'");
}

std::vector<std::size_t> ZooManifest::release_order() const {
  std::vector<std::size_t> idx(models.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return models[a].release_index < models[b].release_index;
  });
  return idx;
}

std::string ZooManifest::fingerprint() const { return blob::fingerprint(to_json(*this).dump()); }

void validate(const ZooManifest& zoo, std::size_t min_models) {
  if (zoo.models.size() < min_models) {
    fail(Errc::invalid_argument, "zoo needs at least " + std::to_string(min_models) + " models");
  }
  std::set<std::string> seen;
  for (const auto& spec : zoo.models) {
    validate(spec);
    if (!seen.insert(spec.model_id).second) fail(Errc::invalid_argument, "duplicate model id '" + spec.model_id + "'");
  }
}

nlohmann::json to_json(const ForecasterSpec& spec) {
  nlohmann::json j{{"model_id", spec.model_id},
                   {"kind", spec.kind_name()},
                   {"release_index", spec.release_index},
                   {"nominal_cost", spec.nominal_cost},
                   {"pool", spec.characterization_source}};
  std::visit(overloaded{
                 [&](const kind::SeasonalNaive& k) { j["period"] = k.period; },
                 [](const kind::Drift&) {},
                 [](const kind::HistoricMean&) {},
                 [&](const kind::Autoregressive& k) { j["order"] = k.order; },
                 [&](const kind::Ses& k) { j["alpha"] = k.alpha; },
                 [&](const kind::HoltLinear& k) {
                   j["alpha"] = k.alpha;
                   j["beta"] = k.beta;
                 },
                 [&](const kind::NeuralPatch& k) {
                   j["lookback"] = k.lookback;
                   j["hidden"] = k.hidden;
                   j["params"] = k.params;
                 },
             },
             spec.kind);
  return j;
}

ForecasterSpec spec_from_json(const nlohmann::json& j) {
  ForecasterSpec spec;
  try {
    spec.model_id = j.at("model_id").get<std::string>();
    const auto k = j.at("kind").get<std::string>();
    if (k == "seasonal_naive") {
      spec.kind = kind::SeasonalNaive{j.at("period").get<std::size_t>()};
    } else if (k == "drift") {
      spec.kind = kind::Drift{};
    } else if (k == "historic_mean") {
      spec.kind = kind::HistoricMean{};
    } else if (k == "ar") {
      spec.kind = kind::Autoregressive{j.at("order").get<std::size_t>()};
    } else if (k == "ses") {
      spec.kind = kind::Ses{j.at("alpha").get<double>()};
    } else if (k == "holt_linear") {
      spec.kind = kind::HoltLinear{j.at("alpha").get<double>(), j.at("beta").get<double>()};
    } else if (k == "neural_patch") {
      spec.kind = kind::NeuralPatch{j.at("lookback").get<std::size_t>(), j.at("hidden").get<std::size_t>(),
                                    j.at("params").get<std::vector<double>>()};
    } else {
      fail(Errc::parse_error, "unknown forecaster kind '" + k + "'");
    }
    spec.release_index = j.value("release_index", 0);
    spec.nominal_cost = j.value("nominal_cost", 1.0);
    spec.characterization_source = j.value("pool", std::string());
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::parse_error, std::string("forecaster spec: ") + e.what());
  }
  validate(spec);
  return spec;
}

nlohmann::json to_json(const ZooManifest& zoo) {
  auto arr = nlohmann::json::array();
  for (const auto& m : zoo.models) arr.push_back(to_json(m));
  return arr;
}

ZooManifest manifest_from_json(const nlohmann::json& j) {
  if (!j.is_array()) fail(Errc::parse_error, "zoo manifest must be a JSON list of specs");
  ZooManifest zoo;
  for (const auto& item : j) zoo.models.push_back(spec_from_json(item));
  validate(zoo, 1);
  return zoo;
}

ZooManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::io_error, "cannot open " + path.string());
  try {
    return manifest_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::parse_error, path.string() + ": " + e.what());
  }
}

void save_manifest(const std::filesystem::path& path, const ZooManifest& zoo) {
  blob::write_bytes(path, to_json(zoo).dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Forecasters

namespace {

/// Solves the SPD system in place by Cholesky; returns false when a pivot is
/// not safely positive.
bool cholesky_solve(std::vector<double> a, std::vector<double>& b, std::size_t n, double pivot_floor) {
  for (std::size_t j = 0; j < n; ++j) {
    double d = a[j * n + j];
    for (std::size_t k = 0; k < j; ++k) d -= a[j * n + k] * a[j * n + k];
    if (!(d > pivot_floor)) return false;
    d = std::sqrt(d);
    a[j * n + j] = d;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a[i * n + j];
      for (std::size_t k = 0; k < j; ++k) s -= a[i * n + k] * a[j * n + k];
      a[i * n + j] = s / d;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    double s = b[i];
    for (std::size_t k = 0; k < i; ++k) s -= a[i * n + k] * b[k];
    b[i] = s / a[i * n + i];
  }
  for (std::size_t ii = n; ii-- > 0;) {
    double s = b[ii];
    for (std::size_t k = ii + 1; k < n; ++k) s -= a[k * n + ii] * b[k];
    b[ii] = s / a[ii * n + ii];
  }
  return true;
}

std::vector<double> roll_ar(const ArFit& fit, std::span<const double> context, std::size_t horizon) {
  const std::size_t p = fit.coefficients.size();
  std::vector<double> hist(context.end() - static_cast<std::ptrdiff_t>(p), context.end());
  std::vector<double> out;
  out.reserve(horizon);
  for (std::size_t h = 0; h < horizon; ++h) {
    double next = fit.intercept;
    for (std::size_t k = 0; k < p; ++k) next += fit.coefficients[k] * hist[hist.size() - 1 - k];
    out.push_back(next);
    hist.push_back(next);
  }
  return out;
}

std::vector<double> neural_patch_forecast(const kind::NeuralPatch& k, std::span<const double> context,
                                          std::size_t horizon) {
  const Segment seg = znorm(context);
  std::vector<double> hist(seg.data.end() - static_cast<std::ptrdiff_t>(k.lookback), seg.data.end());
  const double* w1 = k.params.data();
  const double* b1 = w1 + k.hidden * k.lookback;
  const double* w2 = b1 + k.hidden;
  const double b2 = w2[k.hidden];
  std::vector<double> out;
  out.reserve(horizon);
  for (std::size_t h = 0; h < horizon; ++h) {
    const double* x = hist.data() + hist.size() - k.lookback;
    double y = b2;
    for (std::size_t j = 0; j < k.hidden; ++j) {
      double a = b1[j];
      for (std::size_t i = 0; i < k.lookback; ++i) a += w1[j * k.lookback + i] * x[i];
      y += w2[j] * std::tanh(a);
    }
    hist.push_back(y);
    out.push_back(y * seg.z_std + seg.z_mean);
  }
  return out;
}

void spin_for(double seconds) {
  if (seconds <= 0.0) return;
  const auto until = std::chrono::steady_clock::now() + std::chrono::duration<double>(seconds);
  while (std::chrono::steady_clock::now() < until) {
  }
}

}  // namespace

ArFit fit_ar(std::span<const double> x, std::size_t p) {
  if (p < 1) fail(Errc::invalid_argument, "AR order must be >= 1");
  if (x.size() < 2 * p + 1) {
    fail(Errc::context_too_short, "AR(" + std::to_string(p) + ") needs at least " + std::to_string(2 * p + 1) + " points");
  }
  const std::size_t rows = x.size() - p;
  // centered design: columns are lags 1..p, target is x_t
  std::vector<double> col_mean(p, 0.0);
  double y_mean = 0.0;
  for (std::size_t t = p; t < x.size(); ++t) {
    y_mean += x[t];
    for (std::size_t k = 0; k < p; ++k) col_mean[k] += x[t - 1 - k];
  }
  y_mean /= static_cast<double>(rows);
  for (auto& m : col_mean) m /= static_cast<double>(rows);

  std::vector<double> gram(p * p, 0.0);
  std::vector<double> rhs(p, 0.0);
  for (std::size_t t = p; t < x.size(); ++t) {
    const double yc = x[t] - y_mean;
    for (std::size_t i = 0; i < p; ++i) {
      const double xi = x[t - 1 - i] - col_mean[i];
      rhs[i] += xi * yc;
      for (std::size_t j = 0; j < p; ++j) gram[i * p + j] += xi * (x[t - 1 - j] - col_mean[j]);
    }
  }
  double trace = 0.0;
  for (std::size_t i = 0; i < p; ++i) trace += gram[i * p + i];
  const double floor = 1e-12 * std::max(trace / static_cast<double>(p), 1e-300);

  ArFit fit;
  std::vector<double> phi = rhs;
  if (trace <= 0.0 || !cholesky_solve(gram, phi, p, floor)) {
    constexpr double kRidge = 1e-6;
    for (std::size_t i = 0; i < p; ++i) gram[i * p + i] += kRidge;
    phi = rhs;
    if (!cholesky_solve(gram, phi, p, 0.0)) fail(Errc::model_failure, "AR ridge fallback failed");
    fit.ridge_fallback = true;
  }
  fit.coefficients = std::move(phi);
  fit.intercept = y_mean;
  for (std::size_t k = 0; k < p; ++k) fit.intercept -= fit.coefficients[k] * col_mean[k];
  return fit;
}

PointForecast forecast(const ForecasterSpec& spec, std::span<const double> context, std::size_t horizon) {
  if (context.size() < spec.min_context()) {
    fail(Errc::context_too_short, "model '" + spec.model_id + "' needs a context of at least " +
                                      std::to_string(spec.min_context()) + " points, got " +
                                      std::to_string(context.size()));
  }
  PointForecast out;
  out.values.reserve(horizon);
  const std::size_t n = context.size();
  std::visit(overloaded{
                 [&](const kind::SeasonalNaive& k) {
                   for (std::size_t h = 0; h < horizon; ++h) out.values.push_back(context[n - k.period + h % k.period]);
                 },
                 [&](const kind::Drift&) {
                   const double slope = (context[n - 1] - context[0]) / static_cast<double>(n - 1);
                   for (std::size_t h = 1; h <= horizon; ++h) {
                     out.values.push_back(context[n - 1] + static_cast<double>(h) * slope);
                   }
                 },
                 [&](const kind::HistoricMean&) { out.values.assign(horizon, mean(context)); },
                 [&](const kind::Autoregressive& k) {
                   const ArFit fit = fit_ar(context, k.order);
                   out.values = roll_ar(fit, context, horizon);
                   out.ridge_fallback = fit.ridge_fallback;
                 },
                 [&](const kind::Ses& k) {
                   double level = context[0];
                   for (std::size_t t = 1; t < n; ++t) level = k.alpha * context[t] + (1.0 - k.alpha) * level;
                   out.values.assign(horizon, level);
                 },
                 [&](const kind::HoltLinear& k) {
                   double level = context[0];
                   double trend = context[1] - context[0];
                   for (std::size_t t = 1; t < n; ++t) {
                     const double prev = level;
                     level = k.alpha * context[t] + (1.0 - k.alpha) * (level + trend);
                     trend = k.beta * (level - prev) + (1.0 - k.beta) * trend;
                   }
                   for (std::size_t h = 1; h <= horizon; ++h) out.values.push_back(level + static_cast<double>(h) * trend);
                 },
                 [&](const kind::NeuralPatch& k) { out.values = neural_patch_forecast(k, context, horizon); },
             },
             spec.kind);
  return out;
}

void ForwardCounter::record(const std::string& model_id) {
  std::lock_guard lock(mu_);
  ++counts_[model_id];
}

std::uint64_t ForwardCounter::count(const std::string& model_id) const {
  std::lock_guard lock(mu_);
  const auto it = counts_.find(model_id);
  return it == counts_.end() ? 0 : it->second;
}

std::uint64_t ForwardCounter::total() const {
  std::lock_guard lock(mu_);
  std::uint64_t sum = 0;
  for (const auto& [id, c] : counts_) sum += c;
  return sum;
}

std::map<std::string, std::uint64_t> ForwardCounter::snapshot() const {
  std::lock_guard lock(mu_);
  return counts_;
}

void ForwardCounter::reset() {
  std::lock_guard lock(mu_);
  counts_.clear();
}

PointForecast forward(const ForecasterSpec& spec, std::span<const double> context, std::size_t horizon,
                      const ForwardOptions& options) {
  if (options.counter != nullptr) options.counter->record(spec.model_id);
  spin_for(spec.nominal_cost * options.emulate_seconds_per_cost);
  return forecast(spec, context, horizon);
}

Forecast forecast_task(const ForecasterSpec& spec, const TimeSeriesTask& task, const ForwardOptions& options) {
  const auto t0 = std::chrono::steady_clock::now();
  Forecast out;
  out.producer_model = spec.model_id;
  out.values = Matrix(task.channels(), task.horizon());
  for (std::size_t c = 0; c < task.channels(); ++c) {
    auto pf = forward(spec, task.channel(c), task.horizon(), options);
    std::copy(pf.values.begin(), pf.values.end(), out.values.row(c).begin());
    out.ridge_fallback = out.ridge_fallback || pf.ridge_fallback;
  }
  out.wall_time = std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - t0);
  return out;
}

// ---------------------------------------------------------------------------
// Built-in zoos

ZooManifest default_zoo() {
  ZooManifest zoo;
  zoo.models = {
      {"seasonal_naive", kind::SeasonalNaive{12}, 0, 1.0, "seasonal"},
      {"drift", kind::Drift{}, 1, 0.6, "trend"},
      {"ar3", kind::Autoregressive{3}, 2, 2.0, "ar"},
      {"ses", kind::Ses{0.3}, 3, 0.8, "spiky"},
      {"historic_mean", kind::HistoricMean{}, 4, 0.4, "noise"},
  };
  return zoo;
}

ZooManifest extended_zoo() {
  ZooManifest zoo = default_zoo();
  zoo.models.push_back({"holt", kind::HoltLinear{0.5, 0.1}, 5, 1.2, "trend"});
  return zoo;
}

ZooManifest scaling_zoo(std::size_t count) {
  ZooManifest zoo;
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t variant = i / 6;
    const int rel = static_cast<int>(i);
    const std::string suffix = "_" + std::to_string(i);
    switch (i % 6) {
      case 0: zoo.models.push_back({"snaive" + suffix, kind::SeasonalNaive{12 / (1 + variant % 2)}, rel, 1.0, "seasonal"}); break;
      case 1: zoo.models.push_back({"drift" + suffix, kind::Drift{}, rel, 0.6, "trend"}); break;
      case 2: zoo.models.push_back({"ar" + suffix, kind::Autoregressive{2 + variant}, rel, 2.0, "ar"}); break;
      case 3: zoo.models.push_back({"ses" + suffix, kind::Ses{0.2 + 0.2 * static_cast<double>(variant % 4)}, rel, 0.8, "spiky"}); break;
      case 4: zoo.models.push_back({"mean" + suffix, kind::HistoricMean{}, rel, 0.4, "noise"}); break;
      default: zoo.models.push_back({"holt" + suffix, kind::HoltLinear{0.5, 0.1 + 0.1 * static_cast<double>(variant % 5)}, rel, 1.2, "trend"}); break;
    }
  }
  return zoo;
}

}  // namespace zoosel
