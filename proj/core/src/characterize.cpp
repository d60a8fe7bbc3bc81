#include "zoosel/characterize.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>

#include "zoosel/blob_io.hpp"

namespace zoosel {

std::string CharacterizationSet::fingerprint() const {
  std::uint64_t h = blob::fnv1a(std::to_string(context_len) + "/" + std::to_string(target_len));
  for (std::size_t i = 0; i < contexts.size(); ++i) {
    h = blob::fnv1a(contexts[i].data, h);
    h = blob::fnv1a(targets[i], h);
    h = blob::fnv1a(provenance[i], h);
  }
  return blob::fingerprint(std::string_view(reinterpret_cast<const char*>(&h), sizeof(h)));
}

std::vector<std::string> pools_of(const ZooManifest& zoo) {
  std::vector<std::string> out;
  for (const auto& m : zoo.models) {
    if (std::find(out.begin(), out.end(), m.characterization_source) == out.end()) {
      out.push_back(m.characterization_source);
    }
  }
  return out;
}

CharacterizationSet build_characterization_set(const std::vector<std::string>& pools,
                                               const CharacterizationOptions& options) {
  if (pools.empty()) fail(Errc::invalid_argument, "characterization needs at least one pool");
  if (options.n < 1) fail(Errc::invalid_argument, "characterization size must be >= 1");
  CharacterizationSet dset;
  dset.context_len = options.context_len;
  dset.target_len = options.target_len;
  const std::size_t len = options.context_len + options.target_len;
  for (std::size_t p = 0; p < pools.size(); ++p) {
    const std::size_t count = options.n / pools.size() + (p < options.n % pools.size() ? 1 : 0);
    if (count == 0) continue;
    const Family family = parse_family(pools[p]);
    // distinct seed streams per pool keep pools independent of list order
    const std::uint64_t pool_seed = mix_seed(options.seed, 0x9000 + static_cast<std::uint64_t>(family));
    SynthOptions synth = options.synth;
    synth.length = std::max(synth.length, len);
    const auto tasks = synth_task_family(family, options.pool_tasks, pool_seed, synth);
    for (auto& slice : sample_slices(tasks, len, count, mix_seed(pool_seed, 1))) {
      const std::span<const double> all(slice.values);
      Segment seg = znorm(all.first(options.context_len));
      seg.source_task = slice.task_id;
      seg.source_channel = slice.channel;
      dset.targets.push_back(apply_norm(all.subspan(options.context_len), seg.z_mean, seg.z_std));
      dset.contexts.push_back(std::move(seg));
      dset.provenance.push_back(pools[p]);
    }
  }
  return dset;
}

std::vector<double> error_row(const ForecasterSpec& model, const CharacterizationSet& dset,
                              const ForwardOptions& options) {
  std::vector<double> row(dset.size());
  for (std::size_t i = 0; i < dset.size(); ++i) {
    try {
      const auto pf = forward(model, dset.contexts[i].data, dset.target_len, options);
      row[i] = mse(dset.targets[i], pf.values);
    } catch (const Error& e) {
      fail(Errc::model_failure,
           "model '" + model.model_id + "' failed on characterization sample " + std::to_string(i) + ": " + e.what());
    }
    if (!std::isfinite(row[i])) {
      fail(Errc::model_failure,
           "model '" + model.model_id + "' produced a non-finite error on sample " + std::to_string(i));
    }
  }
  return row;
}

ErrorMatrix build_error_matrix(const std::vector<ForecasterSpec>& models, const CharacterizationSet& dset,
                               const ForwardOptions& options) {
  ErrorMatrix e;
  e.values = Matrix(models.size(), dset.size());
  for (std::size_t m = 0; m < models.size(); ++m) {
    const auto row = error_row(models[m], dset, options);
    std::copy(row.begin(), row.end(), e.values.row(m).begin());
    e.model_ids.push_back(models[m].model_id);
  }
  for (std::size_t i = 0; i < dset.size(); ++i) e.sample_ids.push_back(dset.provenance[i] + "#" + std::to_string(i));
  return e;
}

std::vector<double> column_sigma(const Matrix& errors) {
  const std::size_t m = errors.rows();
  std::vector<double> sigma(errors.cols());
  std::vector<double> col(m);
  for (std::size_t i = 0; i < errors.cols(); ++i) {
    for (std::size_t k = 0; k < m; ++k) col[k] = errors(k, i);
    sigma[i] = population_std(col);
  }
  return sigma;
}

Matrix advantage_scores(const Matrix& errors) {
  const std::size_t m = errors.rows();
  const std::size_t n = errors.cols();
  if (m < 2) fail(Errc::invalid_argument, "advantage scores need at least 2 models");

  const auto sigma = column_sigma(errors);
  const double sigma_mean = mean(sigma);
  const double sigma_sd = population_std(sigma);

  Matrix scores(m, n, 0.0);
  if (!(sigma_sd > 0.0)) return scores;
  for (std::size_t i = 0; i < n; ++i) {
    double col_sum = 0.0;
    for (std::size_t k = 0; k < m; ++k) col_sum += errors(k, i);
    const double factor = (sigma[i] - sigma_mean) / sigma_sd;
    for (std::size_t k = 0; k < m; ++k) {
      const double peers = (col_sum - errors(k, i)) / static_cast<double>(m - 1);
      scores(k, i) = (peers - errors(k, i)) * factor;
    }
  }
  return scores;
}

AdvantageProfile advantage_subsets(const Matrix& scores, double tau) {
  if (!std::isfinite(tau)) fail(Errc::invalid_argument, "tau must be finite");
  AdvantageProfile profile;
  profile.tau = tau;
  profile.models.resize(scores.rows());
  for (std::size_t m = 0; m < scores.rows(); ++m) {
    auto& adv = profile.models[m];
    for (std::size_t i = 0; i < scores.cols(); ++i) {
      if (scores(m, i) > tau) adv.subset.push_back(i);
    }
    adv.size = adv.subset.size();
    adv.empty_fallback = adv.size == 0;
    adv.weight = adv.empty_fallback ? 1.0 : 1.0 / std::sqrt(static_cast<double>(adv.size));
  }
  return profile;
}

std::vector<DecileRow> variance_decile_report(const ErrorMatrix& e) {
  const Matrix& E = e.values;
  const std::size_t n = E.cols();
  if (n < 10) fail(Errc::invalid_argument, "decile report needs at least 10 samples");
  if (E.rows() < 1) fail(Errc::invalid_argument, "decile report needs at least one model");
  const auto sigma = column_sigma(E);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return sigma[a] < sigma[b]; });

  std::vector<DecileRow> rows;
  std::size_t pos = 0;
  for (std::size_t d = 0; d < 10; ++d) {
    DecileRow row;
    row.decile = d + 1;
    row.count = n / 10 + (d < n % 10 ? 1 : 0);
    for (std::size_t j = 0; j < row.count; ++j, ++pos) {
      const std::size_t i = order[pos];
      double lo = E(0, i);
      double sum = 0.0;
      for (std::size_t k = 0; k < E.rows(); ++k) {
        lo = std::min(lo, E(k, i));
        sum += E(k, i);
      }
      row.gap += sum / static_cast<double>(E.rows()) - lo;
      row.mean_sigma += sigma[i];
    }
    row.gap /= static_cast<double>(row.count);
    row.mean_sigma /= static_cast<double>(row.count);
    rows.push_back(row);
  }
  return rows;
}

void save_error_matrix(const std::filesystem::path& path, const ErrorMatrix& e) {
  blob::Blob b;
  b.kind = "error_matrix";
  b.header = {{"model_ids", e.model_ids}, {"sample_ids", e.sample_ids}};
  b.blocks.push_back({"errors", e.values});
  blob::write_file(path, b);
}

ErrorMatrix load_error_matrix(const std::filesystem::path& path) {
  const auto b = blob::read_file(path, "error_matrix");
  ErrorMatrix e;
  try {
    e.model_ids = b.header.at("model_ids").get<std::vector<std::string>>();
    e.sample_ids = b.header.at("sample_ids").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& ex) {
    fail(Errc::malformed_header, std::string("error matrix header: ") + ex.what());
  }
  e.values = b.block("errors");
  if (e.values.rows() != e.model_ids.size() || e.values.cols() != e.sample_ids.size()) {
    fail(Errc::malformed_header, "error matrix shape disagrees with its id lists");
  }
  return e;
}

void write_error_matrix_csv(std::ostream& out, const ErrorMatrix& e) {
  out << "model_id";
  for (const auto& s : e.sample_ids) out << ',' << s;
  out << '\n' << std::setprecision(17);
  for (std::size_t m = 0; m < e.values.rows(); ++m) {
    out << e.model_ids[m];
    for (double v : e.values.row(m)) out << ',' << v;
    out << '\n';
  }
}

}  // namespace zoosel
