#pragma once

#include <chrono>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "zoosel/library.hpp"
#include "zoosel/matrix.hpp"
#include "zoosel/tscore.hpp"
#include "zoosel/zoo.hpp"

namespace zoosel {

/// A set of models that compared equal on the primary key, and the key that
/// separated them ("weight", "sum_sim" or "index").
struct TieGroup {
  std::string stage;                 // "vote" or "consensus"
  std::optional<std::size_t> channel;  // set for vote ties
  std::vector<std::size_t> members;
  std::string resolved_by;
};

struct SimilarityResult {
  Matrix sim;                             // M x C
  std::vector<std::pair<std::size_t, std::size_t>> zero_norm_pairs;  // (m, c)
};

/// sim[m][c] = w[m] * cos(r_zoo[m], r_task[c]); a zero-norm operand gives 0.
SimilarityResult similarity(const ReprLibrary& lib, const TaskRepr& task);
SimilarityResult similarity(const Matrix& r_zoo, std::span<const double> weights, const Matrix& r_task);

struct VoteResult {
  Matrix b;  // C x M, entries 0 or 1
  std::vector<TieGroup> ties;
};

/// Marks the min(r, M) largest entries of each sim column. Boundary ties go
/// to the larger weight, then the lower model index.
VoteResult vote(const Matrix& sim, std::span<const double> weights, std::size_t r = 3);

struct ConsensusResult {
  std::vector<std::size_t> hamming;
  std::vector<std::size_t> order;
  std::vector<TieGroup> ties;
};

/// h[m] = zeros in column m of B; order by h ascending, then larger column
/// sum of sim, then lower index.
ConsensusResult consensus_rank(const Matrix& b, const Matrix& sim);

struct RankingResult {
  Matrix sim;
  Matrix b;
  std::vector<std::size_t> hamming;
  std::vector<std::size_t> order;
  std::vector<TieGroup> tie_break_trace;
  std::vector<std::pair<std::size_t, std::size_t>> zero_norm_pairs;
  std::vector<std::string> model_ids;
  std::string task_id;
};

RankingResult rank_models(const ReprLibrary& lib, const TaskRepr& task, std::size_t r = 3);

nlohmann::json to_json(const TieGroup& t);
nlohmann::json to_json(const RankingResult& r);

/// Channel-wise mean of the first K models' forecasts, summed in order.
Forecast topk_ensemble(const std::vector<ForecasterSpec>& zoo, std::span<const std::size_t> order,
                       const TimeSeriesTask& task, std::size_t k, const ForwardOptions& options = {});

/// Mean of precomputed forecasts (each C x H), summed in the given order.
Matrix average_forecasts(std::span<const Matrix* const> forecasts);

/// 1 - ensemble_loss / min(per_model_losses).
double delta_p(double ensemble_loss, std::span<const double> per_model_losses);

/// mean_delta_p / runtime in seconds.
double eta(double mean_delta_p, std::chrono::duration<double> runtime);

struct StageTimings {
  std::chrono::nanoseconds task_embedding{0};
  std::chrono::nanoseconds similarity{0};
  std::chrono::nanoseconds forecast{0};
};

struct SelectionReport {
  std::string task_id;
  std::vector<std::string> order;
  std::size_t chosen_k = 1;
  Forecast ensemble_forecast;
  std::optional<double> delta_p;
  std::optional<double> eta;
  StageTimings timings;
};

nlohmann::json to_json(const SelectionReport& r);

}  // namespace zoosel
