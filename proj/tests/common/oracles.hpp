#pragma once

// Independent reference implementations used by unit and acceptance tests.
// Each is written directly from the defining formula, without calling the
// code path it checks.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <random>
#include <vector>

#include "zoosel/embedder.hpp"
#include "zoosel/matrix.hpp"

namespace zoosel::oracle {

/// s[m][i] = (mean_{k != m} E[k][i] - E[m][i]) * (sigma_i - sigma_bar) / sigma_hat.
inline Matrix advantage_scores(const Matrix& E) {
  const std::size_t M = E.rows();
  const std::size_t n = E.cols();
  std::vector<double> sig(n);
  for (std::size_t i = 0; i < n; ++i) {
    double mu = 0.0;
    for (std::size_t k = 0; k < M; ++k) mu += E(k, i) / static_cast<double>(M);
    double var = 0.0;
    for (std::size_t k = 0; k < M; ++k) var += (E(k, i) - mu) * (E(k, i) - mu) / static_cast<double>(M);
    sig[i] = std::sqrt(var);
  }
  double sbar = 0.0;
  for (double s : sig) sbar += s / static_cast<double>(n);
  double svar = 0.0;
  for (double s : sig) svar += (s - sbar) * (s - sbar) / static_cast<double>(n);
  const double shat = std::sqrt(svar);
  Matrix out(M, n, 0.0);
  if (shat == 0.0) return out;
  for (std::size_t m = 0; m < M; ++m) {
    for (std::size_t i = 0; i < n; ++i) {
      double loo = 0.0;
      for (std::size_t k = 0; k < M; ++k) {
        if (k != m) loo += E(k, i);
      }
      loo /= static_cast<double>(M - 1);
      out(m, i) = (loo - E(m, i)) * (sig[i] - sbar) / shat;
    }
  }
  return out;
}

struct ConsensusOracle {
  std::vector<std::size_t> hamming;
  std::vector<std::size_t> order;
};

/// Counts zeros per column, then places each model at the number of models
/// that must precede it under (h asc, column sim sum desc, index asc).
inline ConsensusOracle consensus(const Matrix& b, const Matrix& sim) {
  const std::size_t C = b.rows();
  const std::size_t M = b.cols();
  ConsensusOracle out;
  out.hamming.assign(M, 0);
  std::vector<double> sums(M, 0.0);
  for (std::size_t m = 0; m < M; ++m) {
    for (std::size_t c = 0; c < C; ++c) {
      if (b(c, m) == 0.0) ++out.hamming[m];
      sums[m] += sim(m, c);
    }
  }
  out.order.assign(M, 0);
  for (std::size_t m = 0; m < M; ++m) {
    std::size_t before = 0;
    for (std::size_t k = 0; k < M; ++k) {
      if (k == m) continue;
      const bool precedes = out.hamming[k] < out.hamming[m] ||
                            (out.hamming[k] == out.hamming[m] &&
                             (sums[k] > sums[m] || (sums[k] == sums[m] && k < m)));
      if (precedes) ++before;
    }
    out.order[before] = m;
  }
  return out;
}

struct GradCheck {
  std::size_t checked = 0;
  std::size_t failed = 0;
  double worst_rel = 0.0;
};

/// Central differences with step h on `coords` randomly chosen coordinates.
/// rel = |analytic - numeric| / max(|analytic|, |numeric|, floor).
inline GradCheck check_gradient(Extractor ext, const std::function<double(const Extractor&)>& loss,
                                const std::vector<double>& analytic, std::size_t coords, std::uint64_t seed,
                                double tol = 1e-4, double h = 1e-5, double floor = 1e-6) {
  GradCheck out;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, analytic.size() - 1);
  for (std::size_t k = 0; k < coords; ++k) {
    const std::size_t i = pick(rng);
    auto p = ext.mutable_params();
    const double orig = p[i];
    p[i] = orig + h;
    const double up = loss(ext);
    p[i] = orig - h;
    const double down = loss(ext);
    p[i] = orig;
    const double numeric = (up - down) / (2.0 * h);
    const double rel = std::abs(analytic[i] - numeric) / std::max({std::abs(analytic[i]), std::abs(numeric), floor});
    out.worst_rel = std::max(out.worst_rel, rel);
    ++out.checked;
    if (rel >= tol) ++out.failed;
  }
  return out;
}

}  // namespace zoosel::oracle
