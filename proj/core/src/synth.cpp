#include "zoosel/synth.hpp"

#include <cmath>
#include <numbers>

namespace zoosel {

std::string_view to_string(Family f) noexcept {
  switch (f) {
    case Family::seasonal: return "seasonal";
    case Family::trend: return "trend";
    case Family::ar: return "ar";
    case Family::spiky: return "spiky";
    case Family::noise: return "noise";
  }
  return "unknown";
}

Family parse_family(std::string_view name) {
  for (Family f : kAllFamilies) {
    if (to_string(f) == name) return f;
  }
  fail(Errc::invalid_argument, "unknown task family '" + std::string(name) + "'");
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) noexcept {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace {

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

double gauss(std::mt19937_64& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }

}  // namespace

std::vector<double> synth_series(Family family, std::size_t length, std::mt19937_64& rng) {
  std::vector<double> x(length);
  const double level = uniform(rng, 20.0, 60.0);
  switch (family) {
    case Family::seasonal: {
      constexpr double kPeriod = 12.0;
      const double amp = uniform(rng, 2.0, 4.0);
      double w[4];
      double phase[4];
      double norm = 0.0;
      for (int k = 0; k < 4; ++k) {
        w[k] = uniform(rng, 0.2, 1.0) / (1.0 + k);
        phase[k] = uniform(rng, 0.0, 2.0 * std::numbers::pi);
        norm += w[k] * w[k] / 2.0;
      }
      const double noise = amp * uniform(rng, 0.65, 0.9);
      for (std::size_t t = 0; t < length; ++t) {
        double v = 0.0;
        for (int k = 0; k < 4; ++k) {
          v += w[k] * std::sin(2.0 * std::numbers::pi * (k + 1) * static_cast<double>(t) / kPeriod + phase[k]);
        }
        x[t] = level + amp * v / std::sqrt(norm) + noise * gauss(rng);
      }
      break;
    }
    case Family::trend: {
      const double sigma = uniform(rng, 0.5, 1.5);
      const double slope = sigma * uniform(rng, 0.3, 0.38) * (uniform(rng, 0.0, 1.0) < 0.5 ? -1.0 : 1.0);
      const double obs = 1.35 * sigma;
      double v = level;
      for (std::size_t t = 0; t < length; ++t) {
        v += slope + sigma * gauss(rng);
        x[t] = v + obs * gauss(rng);
      }
      break;
    }
    case Family::ar: {
      const double r = uniform(rng, 0.4, 0.67);
      const double theta = uniform(rng, 1.17, 1.73);
      const double phi1 = 2.0 * r * std::cos(theta);
      const double phi2 = -r * r;
      const double sigma = uniform(rng, 0.5, 1.5);
      double a = 0.0;
      double b = 0.0;
      for (int burn = 0; burn < 100; ++burn) {
        const double next = phi1 * a + phi2 * b + sigma * gauss(rng);
        b = a;
        a = next;
      }
      for (std::size_t t = 0; t < length; ++t) {
        const double next = phi1 * a + phi2 * b + sigma * gauss(rng);
        b = a;
        a = next;
        x[t] = level + a;
      }
      break;
    }
    case Family::spiky: {
      double lv = level;
      const double obs = uniform(rng, 0.5, 1.5);
      const double drift = 0.45 * obs;
      const double p = 0.09;
      const double mag = 4.0;
      for (std::size_t t = 0; t < length; ++t) {
        lv += drift * gauss(rng);
        double v = lv + obs * gauss(rng);
        if (uniform(rng, 0.0, 1.0) < p) v += mag * obs * (uniform(rng, 0.0, 1.0) < 0.5 ? -1.0 : 1.0);
        x[t] = v;
      }
      break;
    }
    case Family::noise: {
      const double noise = uniform(rng, 1.0, 3.0);
      for (std::size_t t = 0; t < length; ++t) x[t] = level + noise * gauss(rng);
      break;
    }
  }
  return x;
}

std::vector<TimeSeriesTask> synth_task_family(Family family, std::size_t count, std::uint64_t seed,
                                              const SynthOptions& options) {
  if (count < 1) fail(Errc::invalid_argument, "synth_task_family needs count >= 1");
  if (options.min_channels < 1 || options.max_channels < options.min_channels) {
    fail(Errc::invalid_argument, "bad channel range");
  }
  std::vector<TimeSeriesTask> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::mt19937_64 rng(mix_seed(mix_seed(seed, static_cast<std::uint64_t>(family)), i));
    const auto channels = static_cast<std::size_t>(std::uniform_int_distribution<std::size_t>(
        options.min_channels, options.max_channels)(rng));
    Matrix values(channels, options.length);
    for (std::size_t c = 0; c < channels; ++c) {
      const auto series = synth_series(family, options.length, rng);
      std::copy(series.begin(), series.end(), values.row(c).begin());
    }
    out.emplace_back(std::string(to_string(family)) + "_" + std::to_string(seed) + "_" + std::to_string(i),
                     std::move(values), options.horizon, std::string(to_string(family)));
  }
  return out;
}

std::vector<TimeSeriesTask> synth_mixed_suite(std::size_t per_family, std::uint64_t seed,
                                              const SynthOptions& options) {
  std::vector<TimeSeriesTask> out;
  for (Family f : kAllFamilies) {
    auto tasks = synth_task_family(f, per_family, seed, options);
    for (auto& t : tasks) out.push_back(std::move(t));
  }
  return out;
}

std::vector<RawSlice> sample_slices(const std::vector<TimeSeriesTask>& tasks, std::size_t length,
                                    std::size_t count, std::uint64_t seed) {
  if (tasks.empty()) fail(Errc::invalid_argument, "sample_slices needs at least one task");
  std::mt19937_64 rng(seed);
  std::vector<RawSlice> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto& task = tasks[std::uniform_int_distribution<std::size_t>(0, tasks.size() - 1)(rng)];
    if (task.length() < length) {
      fail(Errc::insufficient_length, "task '" + task.id() + "' is shorter than the slice length");
    }
    const auto c = std::uniform_int_distribution<std::size_t>(0, task.channels() - 1)(rng);
    const auto start = std::uniform_int_distribution<std::size_t>(0, task.length() - length)(rng);
    const auto ch = task.channel(c);
    out.push_back({task.id(), c, start, std::vector<double>(ch.begin() + start, ch.begin() + start + length)});
  }
  return out;
}

}  // namespace zoosel
