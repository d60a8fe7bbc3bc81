#include "zoosel/embedder.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <numeric>
#include <ostream>

#include "zoosel/blob_io.hpp"
#include "zoosel/synth.hpp"

namespace zoosel {

void ExtractorConfig::validate() const {
  if (input_len < 1) fail(Errc::invalid_argument, "input_len must be >= 1");
  if (patch_size < 1 || patch_size > input_len) fail(Errc::invalid_argument, "patch_size must be in [1, input_len]");
  if (encoder_layers < 1) fail(Errc::invalid_argument, "encoder_layers must be >= 1");
  if (hidden_dim < 1 || embed_dim < 1 || pred_len < 1) fail(Errc::invalid_argument, "dimensions must be >= 1");
  if (!(mask_ratio > 0.0 && mask_ratio < 1.0)) fail(Errc::invalid_argument, "mask_ratio must be in (0,1)");
  if (!(lambda >= 0.0)) fail(Errc::invalid_argument, "lambda must be >= 0");
  if (!(temperature > 0.0)) fail(Errc::invalid_argument, "temperature must be > 0");
  if (!(learning_rate > 0.0)) fail(Errc::invalid_argument, "learning_rate must be > 0");
  if (batch_size < 2) fail(Errc::invalid_argument, "batch_size must be >= 2");
}

nlohmann::json to_json(const ExtractorConfig& c) {
  return {{"input_len", c.input_len},     {"pred_len", c.pred_len},
          {"patch_size", c.patch_size},   {"encoder_layers", c.encoder_layers},
          {"hidden_dim", c.hidden_dim},   {"embed_dim", c.embed_dim},
          {"epochs", c.epochs},           {"learning_rate", c.learning_rate},
          {"lambda", c.lambda},           {"mask_ratio", c.mask_ratio},
          {"temperature", c.temperature}, {"batch_size", c.batch_size},
          {"seed", c.seed}};
}

ExtractorConfig extractor_config_from_json(const nlohmann::json& j) {
  ExtractorConfig c;
  try {
    c.input_len = j.value("input_len", c.input_len);
    c.pred_len = j.value("pred_len", c.pred_len);
    c.patch_size = j.value("patch_size", c.patch_size);
    c.encoder_layers = j.value("encoder_layers", c.encoder_layers);
    c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
    c.embed_dim = j.value("embed_dim", c.embed_dim);
    c.epochs = j.value("epochs", c.epochs);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.lambda = j.value("lambda", c.lambda);
    c.mask_ratio = j.value("mask_ratio", c.mask_ratio);
    c.temperature = j.value("temperature", c.temperature);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::parse_error, std::string("extractor config: ") + e.what());
  }
  c.validate();
  return c;
}

ParamLayout ParamLayout::for_config(const ExtractorConfig& c) {
  ParamLayout l;
  auto add = [&](std::string name, std::size_t rows, std::size_t cols) {
    l.slices.push_back({std::move(name), l.total, rows, cols});
    l.total += rows * cols;
  };
  const std::size_t h = c.hidden_dim;
  add("patch_w", h, c.patch_size);
  add("patch_b", 1, h);
  add("pos", c.num_patches(), h);
  for (std::size_t k = 0; k < c.encoder_layers; ++k) {
    add("enc" + std::to_string(k) + "_w", h, h);
    add("enc" + std::to_string(k) + "_b", 1, h);
  }
  add("embed_w", c.embed_dim, h);
  add("embed_b", 1, c.embed_dim);
  add("dec_w", c.pred_len, h);
  add("dec_b", 1, c.pred_len);
  return l;
}

const ParamLayout::Slice& ParamLayout::at(std::string_view name) const {
  for (const auto& s : slices) {
    if (s.name == name) return s;
  }
  fail(Errc::invalid_argument, "no parameter slice '" + std::string(name) + "'");
}

namespace {

std::atomic<std::uint64_t> g_embed_calls{0};

/// Offsets of every parameter group for one config.
struct Offsets {
  std::size_t patch_w, patch_b, pos, embed_w, embed_b, dec_w, dec_b;
  std::vector<std::size_t> enc_w, enc_b;

  explicit Offsets(const ParamLayout& l)
      : patch_w(l.at("patch_w").offset),
        patch_b(l.at("patch_b").offset),
        pos(l.at("pos").offset),
        embed_w(l.at("embed_w").offset),
        embed_b(l.at("embed_b").offset),
        dec_w(l.at("dec_w").offset),
        dec_b(l.at("dec_b").offset) {
    for (std::size_t k = 0;; ++k) {
      const std::string w = "enc" + std::to_string(k) + "_w";
      const auto it = std::find_if(l.slices.begin(), l.slices.end(), [&](const auto& s) { return s.name == w; });
      if (it == l.slices.end()) break;
      enc_w.push_back(it->offset);
      enc_b.push_back(l.at("enc" + std::to_string(k) + "_b").offset);
    }
  }
};

struct Tape {
  std::vector<double> patches;            // N x P
  std::vector<std::vector<double>> acts;  // acts[0] = projected patches, acts[l] = layer l output; each N x H
  std::vector<std::vector<double>> pre;   // pre-activation of encoder layer l, N x H
  std::vector<double> pooled;             // H
  std::vector<double> z;                  // D
  std::vector<double> y;                  // pred_len
};

// exact GELU: a * Phi(a)
double gelu(double a) { return 0.5 * a * (1.0 + std::erf(a / std::numbers::sqrt2)); }

double gelu_grad(double a) {
  const double cdf = 0.5 * (1.0 + std::erf(a / std::numbers::sqrt2));
  const double pdf = std::exp(-0.5 * a * a) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + a * pdf;
}

// out[r] = b[r] + sum_c W[r][c] * x[c]
void affine(const double* w, const double* b, const double* x, double* out, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = b != nullptr ? b[r] : 0.0;
    const double* wr = w + r * cols;
    for (std::size_t c = 0; c < cols; ++c) acc += wr[c] * x[c];
    out[r] = acc;
  }
}

Tape run_forward(const ExtractorConfig& cfg, const Offsets& off, std::span<const double> prm,
                 std::span<const double> x, bool decode) {
  if (x.size() != cfg.input_len) {
    fail(Errc::shape_mismatch, "segment length " + std::to_string(x.size()) + " != input_len " +
                                   std::to_string(cfg.input_len));
  }
  const std::size_t np = cfg.num_patches();
  const std::size_t ps = cfg.patch_size;
  const std::size_t h = cfg.hidden_dim;
  const double* p = prm.data();

  Tape t;
  t.patches.resize(np * ps);
  for (std::size_t j = 0; j < np; ++j) {
    for (std::size_t k = 0; k < ps; ++k) t.patches[j * ps + k] = x[std::min(j * ps + k, x.size() - 1)];
  }
  t.acts.assign(cfg.encoder_layers + 1, std::vector<double>(np * h));
  t.pre.assign(cfg.encoder_layers, std::vector<double>(np * h));
  for (std::size_t j = 0; j < np; ++j) {
    double* u = t.acts[0].data() + j * h;
    affine(p + off.patch_w, p + off.patch_b, t.patches.data() + j * ps, u, h, ps);
    for (std::size_t r = 0; r < h; ++r) u[r] += p[off.pos + j * h + r];
  }
  for (std::size_t l = 0; l < cfg.encoder_layers; ++l) {
    for (std::size_t j = 0; j < np; ++j) {
      double* out = t.acts[l + 1].data() + j * h;
      double* pre = t.pre[l].data() + j * h;
      affine(p + off.enc_w[l], p + off.enc_b[l], t.acts[l].data() + j * h, pre, h, h);
      for (std::size_t r = 0; r < h; ++r) out[r] = gelu(pre[r]);
    }
  }
  t.pooled.assign(h, 0.0);
  const auto& last = t.acts.back();
  for (std::size_t j = 0; j < np; ++j) {
    for (std::size_t r = 0; r < h; ++r) t.pooled[r] += last[j * h + r];
  }
  for (auto& v : t.pooled) v /= static_cast<double>(np);
  t.z.resize(cfg.embed_dim);
  affine(p + off.embed_w, p + off.embed_b, t.pooled.data(), t.z.data(), cfg.embed_dim, h);
  if (decode) {
    t.y.resize(cfg.pred_len);
    affine(p + off.dec_w, p + off.dec_b, t.pooled.data(), t.y.data(), cfg.pred_len, h);
  }
  return t;
}

/// Accumulates d(loss)/d(params) into `grad` given upstream gradients on the
/// embedding (dz) and/or the decoder output (dy); either may be empty.
void run_backward(const ExtractorConfig& cfg, const Offsets& off, std::span<const double> prm, const Tape& t,
                  std::span<const double> dz, std::span<const double> dy, std::vector<double>& grad) {
  const std::size_t np = cfg.num_patches();
  const std::size_t ps = cfg.patch_size;
  const std::size_t h = cfg.hidden_dim;
  const double* p = prm.data();
  double* g = grad.data();

  std::vector<double> dpool(h, 0.0);
  if (!dz.empty()) {
    for (std::size_t r = 0; r < cfg.embed_dim; ++r) {
      const double d = dz[r];
      if (d == 0.0) continue;
      g[off.embed_b + r] += d;
      double* gw = g + off.embed_w + r * h;
      const double* w = p + off.embed_w + r * h;
      for (std::size_t c = 0; c < h; ++c) {
        gw[c] += d * t.pooled[c];
        dpool[c] += w[c] * d;
      }
    }
  }
  if (!dy.empty()) {
    for (std::size_t r = 0; r < cfg.pred_len; ++r) {
      const double d = dy[r];
      if (d == 0.0) continue;
      g[off.dec_b + r] += d;
      double* gw = g + off.dec_w + r * h;
      const double* w = p + off.dec_w + r * h;
      for (std::size_t c = 0; c < h; ++c) {
        gw[c] += d * t.pooled[c];
        dpool[c] += w[c] * d;
      }
    }
  }

  // every patch receives dpool / N at the top encoder output
  std::vector<double> dact(np * h);
  for (std::size_t j = 0; j < np; ++j) {
    for (std::size_t r = 0; r < h; ++r) dact[j * h + r] = dpool[r] / static_cast<double>(np);
  }
  std::vector<double> dprev(np * h);
  for (std::size_t l = cfg.encoder_layers; l-- > 0;) {
    const auto& pre = t.pre[l];
    const auto& in = t.acts[l];
    std::fill(dprev.begin(), dprev.end(), 0.0);
    for (std::size_t j = 0; j < np; ++j) {
      for (std::size_t r = 0; r < h; ++r) {
        const double da = dact[j * h + r] * gelu_grad(pre[j * h + r]);
        if (da == 0.0) continue;
        g[off.enc_b[l] + r] += da;
        double* gw = g + off.enc_w[l] + r * h;
        const double* w = p + off.enc_w[l] + r * h;
        const double* x = in.data() + j * h;
        double* dx = dprev.data() + j * h;
        for (std::size_t c = 0; c < h; ++c) {
          gw[c] += da * x[c];
          dx[c] += w[c] * da;
        }
      }
    }
    dact.swap(dprev);
  }
  // dact now holds d/du_j
  for (std::size_t j = 0; j < np; ++j) {
    const double* patch = t.patches.data() + j * ps;
    for (std::size_t r = 0; r < h; ++r) {
      const double du = dact[j * h + r];
      g[off.patch_b + r] += du;
      g[off.pos + j * h + r] += du;
      double* gw = g + off.patch_w + r * ps;
      for (std::size_t k = 0; k < ps; ++k) gw[k] += du * patch[k];
    }
  }
}

constexpr double kNormFloor = 1e-12;

struct CosGrad {
  double value = 0.0;
  std::vector<double> da;  // d cos / d a
  std::vector<double> db;  // d cos / d b
};

CosGrad cosine_with_grad(std::span<const double> a, std::span<const double> b) {
  CosGrad out;
  out.da.assign(a.size(), 0.0);
  out.db.assign(b.size(), 0.0);
  double dot = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  na = std::sqrt(na);
  nb = std::sqrt(nb);
  if (na < kNormFloor || nb < kNormFloor) return out;  // defined as 0, no gradient
  const double c = dot / (na * nb);
  out.value = c;
  for (std::size_t i = 0; i < a.size(); ++i) {
    out.da[i] = b[i] / (na * nb) - c * a[i] / (na * na);
    out.db[i] = a[i] / (na * nb) - c * b[i] / (nb * nb);
  }
  return out;
}

}  // namespace

std::uint64_t embed_invocations() noexcept { return g_embed_calls.load(); }

Extractor::Extractor(ExtractorConfig config, std::vector<double> params)
    : config_(config), layout_(ParamLayout::for_config(config)), params_(std::move(params)) {
  config_.validate();
  if (params_.size() != layout_.total) {
    fail(Errc::shape_mismatch, "parameter vector has " + std::to_string(params_.size()) + " entries, layout needs " +
                                   std::to_string(layout_.total));
  }
}

Extractor Extractor::zeros(const ExtractorConfig& config) {
  return Extractor(config, std::vector<double>(ParamLayout::for_config(config).total, 0.0));
}

Extractor Extractor::initialize(const ExtractorConfig& config) {
  config.validate();
  const auto layout = ParamLayout::for_config(config);
  std::vector<double> params(layout.total, 0.0);
  std::mt19937_64 rng(mix_seed(config.seed, 0xE1));
  for (const auto& s : layout.slices) {
    const bool bias = s.name.ends_with("_b");
    if (bias) continue;
    const double scale = s.name == "pos" ? 0.02 : 1.0 / std::sqrt(static_cast<double>(s.cols));
    std::uniform_real_distribution<double> dist(-scale, scale);
    for (std::size_t i = 0; i < s.rows * s.cols; ++i) params[s.offset + i] = dist(rng);
  }
  return Extractor(config, std::move(params));
}

std::vector<double> Extractor::embed(std::span<const double> segment) const {
  g_embed_calls.fetch_add(1, std::memory_order_relaxed);
  const Offsets off(layout_);
  return run_forward(config_, off, params_, segment, false).z;
}

std::vector<double> Extractor::reconstruct(std::span<const double> segment) const {
  const Offsets off(layout_);
  return run_forward(config_, off, params_, segment, true).y;
}

std::string Extractor::fingerprint() const { return blob::fingerprint(encode_checkpoint(*this)); }

LossGrad loss_reconstruction(const Extractor& ext, std::span<const TrainingSample> batch) {
  const auto& cfg = ext.config();
  const Offsets off(ext.layout());
  LossGrad out;
  out.grad.assign(ext.params().size(), 0.0);
  if (batch.empty()) return out;
  const double scale = 1.0 / static_cast<double>(batch.size() * cfg.pred_len);
  std::vector<double> dy(cfg.pred_len);
  for (const auto& s : batch) {
    if (s.continuation.size() != cfg.pred_len) fail(Errc::shape_mismatch, "continuation length != pred_len");
    const Tape t = run_forward(cfg, off, ext.params(), s.context, true);
    for (std::size_t k = 0; k < cfg.pred_len; ++k) {
      const double r = t.y[k] - s.continuation[k];
      out.loss += r * r * scale;
      dy[k] = 2.0 * r * scale;
    }
    run_backward(cfg, off, ext.params(), t, {}, dy, out.grad);
  }
  return out;
}

std::vector<std::vector<double>> make_masked_views(std::span<const TrainingSample> batch, double mask_ratio,
                                                   std::mt19937_64& rng) {
  std::vector<std::vector<double>> views;
  views.reserve(batch.size());
  for (const auto& s : batch) {
    std::vector<double> v = s.context;
    const auto drop = static_cast<std::size_t>(std::llround(mask_ratio * static_cast<double>(v.size())));
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    // partial Fisher-Yates: first `drop` entries are the masked positions
    for (std::size_t i = 0; i < drop && i < idx.size(); ++i) {
      const auto j = std::uniform_int_distribution<std::size_t>(i, idx.size() - 1)(rng);
      std::swap(idx[i], idx[j]);
      v[idx[i]] = 0.0;
    }
    views.push_back(std::move(v));
  }
  return views;
}

LossGrad loss_contrastive(const Extractor& ext, std::span<const TrainingSample> batch,
                          const std::vector<std::vector<double>>& views, double temperature) {
  const std::size_t n = batch.size();
  if (n < 2) fail(Errc::invalid_argument, "contrastive loss needs a batch of at least 2");
  if (views.size() != n) fail(Errc::shape_mismatch, "one masked view per anchor is required");
  if (!(temperature > 0.0)) fail(Errc::invalid_argument, "temperature must be > 0");
  const auto& cfg = ext.config();
  const Offsets off(ext.layout());
  const std::size_t d = cfg.embed_dim;

  std::vector<Tape> anchor_tapes;
  std::vector<Tape> view_tapes;
  for (std::size_t b = 0; b < n; ++b) {
    anchor_tapes.push_back(run_forward(cfg, off, ext.params(), batch[b].context, false));
    view_tapes.push_back(run_forward(cfg, off, ext.params(), views[b], false));
  }
  std::vector<std::vector<double>> dz_anchor(n, std::vector<double>(d, 0.0));
  std::vector<std::vector<double>> dz_view(n, std::vector<double>(d, 0.0));

  LossGrad out;
  const double inv_n = 1.0 / static_cast<double>(n);
  std::vector<CosGrad> cands(n);
  std::vector<double> logits(n);
  for (std::size_t b = 0; b < n; ++b) {
    // candidate 0 is the positive view, candidates 1.. are the other anchors
    std::size_t k = 0;
    cands[k] = cosine_with_grad(anchor_tapes[b].z, view_tapes[b].z);
    logits[k++] = cands[0].value / temperature;
    for (std::size_t o = 0; o < n; ++o) {
      if (o == b) continue;
      cands[k] = cosine_with_grad(anchor_tapes[b].z, anchor_tapes[o].z);
      logits[k] = cands[k].value / temperature;
      ++k;
    }
    const double mx = *std::max_element(logits.begin(), logits.end());
    double denom = 0.0;
    for (double l : logits) denom += std::exp(l - mx);
    const double lse = mx + std::log(denom);
    out.loss += (lse - logits[0]) * inv_n;

    k = 0;
    for (std::size_t c = 0; c < n; ++c) {
      const double prob = std::exp(logits[c] - lse);
      const double dlogit = (prob - (c == 0 ? 1.0 : 0.0)) * inv_n / temperature;
      const std::size_t other = c == 0 ? b : (c <= b ? c - 1 : c);
      auto& dother = c == 0 ? dz_view[b] : dz_anchor[other];
      for (std::size_t i = 0; i < d; ++i) {
        dz_anchor[b][i] += dlogit * cands[c].da[i];
        dother[i] += dlogit * cands[c].db[i];
      }
    }
  }
  out.grad.assign(ext.params().size(), 0.0);
  for (std::size_t b = 0; b < n; ++b) {
    run_backward(cfg, off, ext.params(), anchor_tapes[b], dz_anchor[b], {}, out.grad);
    run_backward(cfg, off, ext.params(), view_tapes[b], dz_view[b], {}, out.grad);
  }
  return out;
}

LossGrad loss_contrastive(const Extractor& ext, std::span<const TrainingSample> batch, double mask_ratio,
                          double temperature, std::uint64_t mask_seed) {
  std::mt19937_64 rng(mask_seed);
  return loss_contrastive(ext, batch, make_masked_views(batch, mask_ratio, rng), temperature);
}

LossGrad loss_transfer(const Extractor& ext, std::span<const TransferPair> pairs) {
  LossGrad out;
  out.grad.assign(ext.params().size(), 0.0);
  if (pairs.empty()) return out;
  const auto& cfg = ext.config();
  const Offsets off(ext.layout());
  const double inv = 1.0 / static_cast<double>(pairs.size());
  std::vector<double> dza(cfg.embed_dim);
  std::vector<double> dzb(cfg.embed_dim);
  for (const auto& pr : pairs) {
    const Tape ta = run_forward(cfg, off, ext.params(), pr.a, false);
    const Tape tb = run_forward(cfg, off, ext.params(), pr.b, false);
    const CosGrad cg = cosine_with_grad(ta.z, tb.z);
    const double r = pr.g - cg.value;
    out.loss += r * r * inv;
    const double dc = -2.0 * r * inv;
    for (std::size_t i = 0; i < cfg.embed_dim; ++i) {
      dza[i] = dc * cg.da[i];
      dzb[i] = dc * cg.db[i];
    }
    run_backward(cfg, off, ext.params(), ta, dza, {}, out.grad);
    run_backward(cfg, off, ext.params(), tb, dzb, {}, out.grad);
  }
  return out;
}

TransferTargets build_transfer_targets(const std::vector<SamplePool>& pools, const ZooManifest& proxy_zoo,
                                       std::size_t pairs_per_cell, std::uint64_t seed) {
  TransferTargets out;
  const std::size_t k = pools.size();
  std::vector<const ForecasterSpec*> proxies;
  for (const auto& pool : pools) {
    if (pool.samples.empty()) fail(Errc::invalid_argument, "pool '" + pool.id + "' is empty");
    const auto it = std::find_if(proxy_zoo.models.begin(), proxy_zoo.models.end(),
                                 [&](const ForecasterSpec& s) { return s.characterization_source == pool.id; });
    if (it == proxy_zoo.models.end()) fail(Errc::invalid_argument, "pool '" + pool.id + "' has no proxy model");
    proxies.push_back(&*it);
    out.pool_ids.push_back(pool.id);
  }
  out.g = Matrix(k, k);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      double err = 0.0;
      for (const auto& s : pools[j].samples) {
        err += mse(s.continuation, forecast(*proxies[i], s.context, s.continuation.size()).values);
      }
      err /= static_cast<double>(pools[j].samples.size());
      out.g(i, j) = std::clamp(1.0 - err, -1.0, 1.0);
    }
  }
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      std::uniform_int_distribution<std::size_t> pick_a(0, pools[i].samples.size() - 1);
      std::uniform_int_distribution<std::size_t> pick_b(0, pools[j].samples.size() - 1);
      for (std::size_t p = 0; p < pairs_per_cell; ++p) {
        out.pairs.push_back({pools[i].samples[pick_a(rng)].context, pools[j].samples[pick_b(rng)].context,
                             out.g(i, j), i, j});
      }
    }
  }
  return out;
}

namespace {

struct Adam {
  std::vector<double> m, v;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::size_t step = 0;

  explicit Adam(std::size_t n) : m(n, 0.0), v(n, 0.0) {}

  void update(std::span<double> params, const std::vector<double>& grad, double lr) {
    ++step;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
      params[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
    }
  }
};

}  // namespace

TrainResult train(const ExtractorConfig& config, std::span<const TrainingSample> corpus,
                  const TransferTargets& targets) {
  config.validate();
  if (corpus.size() < 2) fail(Errc::invalid_argument, "training corpus needs at least 2 samples");
  Extractor ext = Extractor::initialize(config);
  Adam adam(ext.params().size());
  std::mt19937_64 rng(mix_seed(config.seed, 0xBA7C));
  std::mt19937_64 pair_rng(mix_seed(config.seed, 0x7A45));

  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<EpochLoss> trace;
  std::vector<TrainingSample> batch;
  std::vector<TransferPair> pair_batch;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    EpochLoss acc;
    acc.epoch = epoch;
    std::size_t steps = 0;
    for (std::size_t start = 0; start + 2 <= order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      if (end - start < 2) break;
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(corpus[order[i]]);
      const auto views = make_masked_views(batch, config.mask_ratio, rng);

      const LossGrad rec = loss_reconstruction(ext, batch);
      const LossGrad con = loss_contrastive(ext, batch, views, config.temperature);
      LossGrad tra;
      if (!targets.pairs.empty()) {
        pair_batch.clear();
        std::uniform_int_distribution<std::size_t> pick(0, targets.pairs.size() - 1);
        for (std::size_t i = 0; i < config.batch_size; ++i) pair_batch.push_back(targets.pairs[pick(pair_rng)]);
        tra = loss_transfer(ext, pair_batch);
      }
      const double total = rec.loss + con.loss + config.lambda * tra.loss;
      if (!std::isfinite(total)) {
        fail(Errc::non_finite_loss, "non-finite loss at epoch " + std::to_string(epoch) + " step " +
                                        std::to_string(steps + 1));
      }
      std::vector<double> grad = rec.grad;
      for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += con.grad[i];
      if (config.lambda != 0.0 && !tra.grad.empty()) {
        for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += config.lambda * tra.grad[i];
      }
      adam.update(ext.mutable_params(), grad, config.learning_rate);

      acc.reconstruction += rec.loss;
      acc.contrastive += con.loss;
      acc.transfer += tra.loss;
      acc.total += total;
      ++steps;
    }
    if (steps > 0) {
      const double s = static_cast<double>(steps);
      acc.reconstruction /= s;
      acc.contrastive /= s;
      acc.transfer /= s;
      acc.total /= s;
    }
    trace.push_back(acc);
  }
  return {std::move(ext), std::move(trace)};
}

std::vector<SamplePool> build_training_pools(const std::vector<std::string>& families,
                                             std::size_t samples_per_pool, const ExtractorConfig& config,
                                             std::uint64_t seed) {
  std::vector<SamplePool> pools;
  const std::size_t len = config.input_len + config.pred_len;
  for (const auto& name : families) {
    const Family family = parse_family(name);
    const std::uint64_t s = mix_seed(seed, 0x5000 + static_cast<std::uint64_t>(family));
    SynthOptions synth;
    synth.length = std::max<std::size_t>(synth.length, len);
    const auto tasks = synth_task_family(family, 40, s, synth);
    SamplePool pool;
    pool.id = name;
    for (const auto& slice : sample_slices(tasks, len, samples_per_pool, mix_seed(s, 1))) {
      const std::span<const double> all(slice.values);
      const Segment seg = znorm(all.first(config.input_len));
      pool.samples.push_back({seg.data, apply_norm(all.subspan(config.input_len), seg.z_mean, seg.z_std)});
    }
    pools.push_back(std::move(pool));
  }
  return pools;
}

std::vector<TrainingSample> flatten_pools(const std::vector<SamplePool>& pools) {
  std::vector<TrainingSample> out;
  for (const auto& p : pools) out.insert(out.end(), p.samples.begin(), p.samples.end());
  return out;
}

std::string encode_checkpoint(const Extractor& ext) {
  blob::Blob b;
  b.kind = "extractor";
  auto layout = nlohmann::json::array();
  for (const auto& s : ext.layout().slices) {
    layout.push_back({{"name", s.name}, {"offset", s.offset}, {"rows", s.rows}, {"cols", s.cols}});
  }
  b.header = {{"config", to_json(ext.config())}, {"layout", layout}, {"seed", ext.config().seed}};
  b.blocks.push_back({"params", Matrix(1, ext.params().size(), std::vector<double>(ext.params().begin(), ext.params().end()))});
  return blob::encode(b);
}

void save_checkpoint(const std::filesystem::path& path, const Extractor& ext) {
  blob::write_bytes(path, encode_checkpoint(ext));
}

Extractor load_checkpoint(const std::filesystem::path& path) {
  const auto b = blob::read_file(path, "extractor");
  if (!b.header.contains("config")) fail(Errc::malformed_header, "checkpoint lacks config");
  const ExtractorConfig cfg = extractor_config_from_json(b.header.at("config"));
  const Matrix& params = b.block("params");
  if (params.size() != ParamLayout::for_config(cfg).total) {
    fail(Errc::malformed_header, "checkpoint parameter count disagrees with its config");
  }
  return Extractor(cfg, params.data());
}

void write_loss_trace_csv(std::ostream& out, const std::vector<EpochLoss>& trace) {
  out << "epoch,recon,contrastive,transfer,total\n" << std::setprecision(17);
  for (const auto& e : trace) {
    out << e.epoch << ',' << e.reconstruction << ',' << e.contrastive << ',' << e.transfer << ',' << e.total << '\n';
  }
}

}  // namespace zoosel
