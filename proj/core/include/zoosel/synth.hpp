#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "zoosel/tscore.hpp"

namespace zoosel {

/// Synthetic task families, each built so one surrogate kind is oracle-best:
/// seasonal -> SeasonalNaive, trend -> Drift, ar -> AR(p), spiky -> SES,
/// noise -> HistoricMean.
enum class Family { seasonal, trend, ar, spiky, noise };

inline constexpr Family kAllFamilies[] = {Family::seasonal, Family::trend, Family::ar, Family::spiky,
                                          Family::noise};

std::string_view to_string(Family f) noexcept;
Family parse_family(std::string_view name);

struct SynthOptions {
  std::size_t length = 144;
  std::size_t horizon = 12;
  std::size_t min_channels = 1;
  std::size_t max_channels = 3;
};

/// Reproducible for a fixed (family, count, seed, options).
std::vector<TimeSeriesTask> synth_task_family(Family family, std::size_t count, std::uint64_t seed,
                                              const SynthOptions& options = {});

/// `per_family` tasks from every family, interleaved family by family.
std::vector<TimeSeriesTask> synth_mixed_suite(std::size_t per_family, std::uint64_t seed,
                                              const SynthOptions& options = {});

/// One univariate series of the family, `length` points long.
std::vector<double> synth_series(Family family, std::size_t length, std::mt19937_64& rng);

struct RawSlice {
  std::string task_id;
  std::size_t channel = 0;
  std::size_t start = 0;
  std::vector<double> values;
};

/// Uniformly random (task, channel, offset) slices of exactly `length` points.
std::vector<RawSlice> sample_slices(const std::vector<TimeSeriesTask>& tasks, std::size_t length,
                                    std::size_t count, std::uint64_t seed);

/// Deterministic seed mixing (splitmix64).
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) noexcept;

}  // namespace zoosel
