#include "zoosel/selector.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace zoosel {

namespace {

double norm2(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

SimilarityResult similarity(const Matrix& r_zoo, std::span<const double> weights, const Matrix& r_task) {
  if (r_zoo.cols() != r_task.cols()) {
    fail(Errc::shape_mismatch, "embedding dimension mismatch: library D=" + std::to_string(r_zoo.cols()) +
                                   ", task D=" + std::to_string(r_task.cols()));
  }
  if (weights.size() != r_zoo.rows()) fail(Errc::shape_mismatch, "weights length != model count");
  const std::size_t m = r_zoo.rows();
  const std::size_t c = r_task.rows();
  SimilarityResult out{Matrix(m, c), {}};
  std::vector<double> zn(m), tn(c);
  for (std::size_t i = 0; i < m; ++i) zn[i] = norm2(r_zoo.row(i));
  for (std::size_t j = 0; j < c; ++j) tn[j] = norm2(r_task.row(j));
  for (std::size_t i = 0; i < m; ++i) {
    const auto a = r_zoo.row(i);
    for (std::size_t j = 0; j < c; ++j) {
      if (zn[i] == 0.0 || tn[j] == 0.0) {
        out.zero_norm_pairs.emplace_back(i, j);
        continue;
      }
      const auto b = r_task.row(j);
      double dot = 0.0;
      for (std::size_t k = 0; k < a.size(); ++k) dot += a[k] * b[k];
      out.sim(i, j) = weights[i] * (dot / (zn[i] * tn[j]));
    }
  }
  return out;
}

SimilarityResult similarity(const ReprLibrary& lib, const TaskRepr& task) {
  return similarity(lib.r_zoo, lib.weights, task.r_task);
}

VoteResult vote(const Matrix& sim, std::span<const double> weights, std::size_t r) {
  if (r < 1) fail(Errc::invalid_argument, "r must be >= 1");
  const std::size_t m = sim.rows();
  const std::size_t c = sim.cols();
  if (weights.size() != m) fail(Errc::shape_mismatch, "weights length != model count");
  const std::size_t eff = std::min(r, m);
  VoteResult out{Matrix(c, m), {}};
  std::vector<std::size_t> idx(m);
  for (std::size_t ch = 0; ch < c; ++ch) {
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      if (sim(a, ch) != sim(b, ch)) return sim(a, ch) > sim(b, ch);
      if (weights[a] != weights[b]) return weights[a] > weights[b];
      return a < b;
    });
    for (std::size_t k = 0; k < eff; ++k) out.b(ch, idx[k]) = 1.0;
    if (eff < m && sim(idx[eff - 1], ch) == sim(idx[eff], ch)) {
      const double v = sim(idx[eff - 1], ch);
      TieGroup g{"vote", ch, {}, "index"};
      for (std::size_t k = 0; k < m; ++k) {
        if (sim(idx[k], ch) == v) g.members.push_back(idx[k]);
      }
      // the boundary pair decides which key separated the cut
      if (weights[idx[eff - 1]] != weights[idx[eff]]) g.resolved_by = "weight";
      out.ties.push_back(std::move(g));
    }
  }
  return out;
}

ConsensusResult consensus_rank(const Matrix& b, const Matrix& sim) {
  const std::size_t c = b.rows();
  const std::size_t m = b.cols();
  if (sim.rows() != m || sim.cols() != c) fail(Errc::shape_mismatch, "sim must be M x C for a C x M vote matrix");
  ConsensusResult out;
  out.hamming.assign(m, 0);
  std::vector<double> sum_sim(m, 0.0);
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      if (b(ch, j) == 0.0) ++out.hamming[j];
      sum_sim[j] += sim(j, ch);
    }
  }
  out.order.resize(m);
  std::iota(out.order.begin(), out.order.end(), 0);
  std::sort(out.order.begin(), out.order.end(), [&](std::size_t a, std::size_t bb) {
    if (out.hamming[a] != out.hamming[bb]) return out.hamming[a] < out.hamming[bb];
    if (sum_sim[a] != sum_sim[bb]) return sum_sim[a] > sum_sim[bb];
    return a < bb;
  });
  for (std::size_t i = 0; i < m;) {
    std::size_t j = i + 1;
    while (j < m && out.hamming[out.order[j]] == out.hamming[out.order[i]]) ++j;
    if (j - i > 1) {
      TieGroup g{"consensus", std::nullopt, {out.order.begin() + i, out.order.begin() + j}, "sum_sim"};
      for (std::size_t k = i + 1; k < j; ++k) {
        if (sum_sim[out.order[k]] == sum_sim[out.order[k - 1]]) g.resolved_by = "index";
      }
      out.ties.push_back(std::move(g));
    }
    i = j;
  }
  return out;
}

RankingResult rank_models(const ReprLibrary& lib, const TaskRepr& task, std::size_t r) {
  auto s = similarity(lib, task);
  auto v = vote(s.sim, lib.weights, r);
  auto cr = consensus_rank(v.b, s.sim);
  RankingResult out;
  out.sim = std::move(s.sim);
  out.b = std::move(v.b);
  out.hamming = std::move(cr.hamming);
  out.order = std::move(cr.order);
  out.tie_break_trace = std::move(v.ties);
  out.tie_break_trace.insert(out.tie_break_trace.end(), cr.ties.begin(), cr.ties.end());
  out.zero_norm_pairs = std::move(s.zero_norm_pairs);
  out.model_ids = lib.model_ids;
  out.task_id = task.task_id;
  return out;
}

nlohmann::json to_json(const TieGroup& t) {
  nlohmann::json j = {{"stage", t.stage}, {"members", t.members}, {"resolved_by", t.resolved_by}};
  if (t.channel) j["channel"] = *t.channel;
  return j;
}

nlohmann::json to_json(const RankingResult& r) {
  nlohmann::json models = nlohmann::json::array();
  for (std::size_t pos = 0; pos < r.order.size(); ++pos) {
    const std::size_t m = r.order[pos];
    std::vector<double> sims(r.sim.row(m).begin(), r.sim.row(m).end());
    models.push_back({{"rank", pos + 1},
                      {"model_index", m},
                      {"model_id", m < r.model_ids.size() ? r.model_ids[m] : std::string{}},
                      {"hamming", r.hamming[m]},
                      {"similarity", sims}});
  }
  nlohmann::json b = nlohmann::json::array();
  for (std::size_t c = 0; c < r.b.rows(); ++c) {
    std::vector<int> row;
    for (double x : r.b.row(c)) row.push_back(x != 0.0 ? 1 : 0);
    b.push_back(row);
  }
  nlohmann::json trace = nlohmann::json::array();
  for (const auto& t : r.tie_break_trace) trace.push_back(to_json(t));
  nlohmann::json zero = nlohmann::json::array();
  for (const auto& [m, c] : r.zero_norm_pairs) zero.push_back({m, c});
  return {{"task_id", r.task_id}, {"order", r.order},           {"models", models},
          {"B", b},               {"tie_break_trace", trace}, {"zero_norm_pairs", zero}};
}

Matrix average_forecasts(std::span<const Matrix* const> forecasts) {
  if (forecasts.empty()) fail(Errc::invalid_argument, "nothing to average");
  Matrix out(forecasts.front()->rows(), forecasts.front()->cols());
  for (const Matrix* f : forecasts) {
    if (f->rows() != out.rows() || f->cols() != out.cols()) fail(Errc::shape_mismatch, "forecast shapes differ");
    auto dst = out.flat();
    const auto src = f->flat();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }
  const double k = static_cast<double>(forecasts.size());
  for (auto& v : out.flat()) v /= k;
  return out;
}

Forecast topk_ensemble(const std::vector<ForecasterSpec>& zoo, std::span<const std::size_t> order,
                       const TimeSeriesTask& task, std::size_t k, const ForwardOptions& options) {
  if (k < 1 || k > zoo.size() || k > order.size()) {
    fail(Errc::invalid_argument, "K must satisfy 1 <= K <= M (got " + std::to_string(k) + ")");
  }
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<Forecast> parts;
  parts.reserve(k);
  bool ridge = false;
  std::string producer;
  for (std::size_t i = 0; i < k; ++i) {
    if (order[i] >= zoo.size()) fail(Errc::invalid_argument, "order index out of range");
    const auto& spec = zoo[order[i]];
    try {
      parts.push_back(forecast_task(spec, task, options));
    } catch (const Error& e) {
      fail(Errc::model_failure, "selected model '" + spec.model_id + "' failed on task '" + task.id() +
                                    "': " + e.what());
    }
    ridge = ridge || parts.back().ridge_fallback;
    producer += (i ? "+" : "") + spec.model_id;
  }
  std::vector<const Matrix*> ptrs;
  for (const auto& p : parts) ptrs.push_back(&p.values);
  Forecast out;
  out.values = average_forecasts(ptrs);
  out.producer_model = producer;
  out.ridge_fallback = ridge;
  out.wall_time = std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - t0);
  return out;
}

double delta_p(double ensemble_loss, std::span<const double> per_model_losses) {
  if (per_model_losses.empty()) fail(Errc::invalid_argument, "no per-model losses");
  const double best = *std::min_element(per_model_losses.begin(), per_model_losses.end());
  if (!(best > 0.0)) fail(Errc::degenerate_oracle, "degenerate oracle: best single-model loss is 0");
  return 1.0 - ensemble_loss / best;
}

double eta(double mean_delta_p, std::chrono::duration<double> runtime) {
  if (!(runtime.count() > 0.0)) fail(Errc::invalid_argument, "runtime must be positive");
  return mean_delta_p / runtime.count();
}

nlohmann::json to_json(const SelectionReport& r) {
  nlohmann::json fc = nlohmann::json::array();
  for (std::size_t c = 0; c < r.ensemble_forecast.values.rows(); ++c) {
    const auto row = r.ensemble_forecast.values.row(c);
    fc.push_back(std::vector<double>(row.begin(), row.end()));
  }
  nlohmann::json j = {{"task_id", r.task_id},
                      {"order", r.order},
                      {"chosen_k", r.chosen_k},
                      {"ensemble_forecast", fc},
                      {"producer", r.ensemble_forecast.producer_model},
                      {"timings_ns",
                       {{"task_embedding", r.timings.task_embedding.count()},
                        {"similarity", r.timings.similarity.count()},
                        {"forecast", r.timings.forecast.count()}}}};
  j["delta_p"] = r.delta_p ? nlohmann::json(*r.delta_p) : nlohmann::json(nullptr);
  j["eta"] = r.eta ? nlohmann::json(*r.eta) : nlohmann::json(nullptr);
  return j;
}

}  // namespace zoosel
