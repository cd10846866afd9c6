#include "ndgi/trainer.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <mutex>

#include "ndgi/error.hpp"
#include "ndgi/parallel.hpp"

namespace ndgi {

// ---- feature parameters -------------------------------------------------------

namespace {

ModelLayout without_block_maps(ModelLayout l, bool drop_f3d, bool drop_uv) {
  if (drop_f3d) l.f3d.channels = 0;
  if (drop_uv) l.f_uv.channels = 0;
  return l;
}

template <typename Real>
void add_into(std::vector<Real>& dst, const std::vector<Real>& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

template <typename Real>
void push_if(std::vector<std::span<Real>>& out, std::vector<Real>& v) {
  if (!v.empty()) out.emplace_back(v);
}

template <typename Real>
void push_if(std::vector<std::span<const Real>>& out, const std::vector<Real>& v) {
  if (!v.empty()) out.emplace_back(v);
}

template <typename Real>
bool same_shape(const HybridFeatureMaps<Real>& m, const ModelLayout& l) {
  return m.f3d.data.size() == l.f3d.values() && m.f_uv.data.size() == l.f_uv.values() &&
         m.f_ut.data.size() == l.f_ut.values() && m.f_vt.data.size() == l.f_vt.values() &&
         m.f3d.channels == l.f3d.channels && m.f_uv.channels == l.f_uv.channels &&
         m.f_ut.channels == l.f_ut.channels && m.f_vt.channels == l.f_vt.channels;
}

}  // namespace

template <typename Real>
FeatureParameters<Real>::FeatureParameters(const ModelLayout& l, bool block_parameters)
    : layout(l),
      bc_f3d(block_parameters && l.f3d.present()),
      bc_uv(block_parameters && l.f_uv.present()),
      plain(without_block_maps(l, bc_f3d, bc_uv)) {
  if (bc_f3d) {
    for (int z = 0; z < l.f3d.depth; ++z) {
      for (int layer = 0; layer < l.f3d.channels / 4; ++layer) {
        f3d_layers.emplace_back(l.f3d.width, l.f3d.height, 4);
      }
    }
  }
  if (bc_uv) {
    for (int layer = 0; layer < l.f_uv.channels / 4; ++layer) {
      uv_layers.emplace_back(l.f_uv.width, l.f_uv.height, 4);
    }
  }
}

template <typename Real>
void FeatureParameters<Real>::init(Rng& rng) {
  for (auto* layers : {&f3d_layers, &uv_layers}) {
    for (auto& g : *layers) {
      for (int b = 0; b < g.block_count(); ++b) {
        for (int c = 0; c < g.channels; ++c) {
          g.e1(b)[c] = Real(0.4);
          g.e2(b)[c] = Real(0.6);
        }
      }
      std::fill(g.weights.begin(), g.weights.end(), Real(0.5));
    }
  }
  for (auto* v : {&plain.f3d.data, &plain.f_uv.data, &plain.f_ut.data, &plain.f_vt.data}) {
    for (auto& x : *v) x = static_cast<Real>(uniform(rng, 0.45, 0.55));
  }
}

template <typename Real>
FeatureParameters<Real> FeatureParameters<Real>::from_dense(const HybridFeatureMaps<Real>& maps,
                                                            const ModelLayout& l) {
  if (!same_shape(maps, l)) {
    throw Error(ErrorCode::kDimensionMismatch, "dense maps do not match the layout");
  }
  FeatureParameters p(l, false);
  p.plain = maps;
  return p;
}

template <typename Real>
void FeatureParameters<Real>::set_zero() {
  for (auto t : tensors()) std::fill(t.begin(), t.end(), Real(0));
}

template <typename Real>
void FeatureParameters<Real>::materialize(HybridFeatureMaps<Real>& dense) const {
  if (!same_shape(dense, layout)) dense = HybridFeatureMaps<Real>(layout);
  if (bc_f3d) {
    const int layers = layout.f3d.channels / 4;
    for (int z = 0; z < layout.f3d.depth; ++z) {
      for (int l = 0; l < layers; ++l) {
        reconstruct_bc(f3d_layers[static_cast<std::size_t>(z * layers + l)], dense.f3d.slice(z),
                       layout.f3d.channels, l * 4);
      }
    }
  } else {
    dense.f3d.data = plain.f3d.data;
  }
  if (bc_uv) {
    for (std::size_t l = 0; l < uv_layers.size(); ++l) {
      reconstruct_bc(uv_layers[l], std::span<Real>(dense.f_uv.data), layout.f_uv.channels,
                     static_cast<int>(l) * 4);
    }
  } else {
    dense.f_uv.data = plain.f_uv.data;
  }
  dense.f_ut.data = plain.f_ut.data;
  dense.f_vt.data = plain.f_vt.data;
}

template <typename Real>
void FeatureParameters<Real>::backpropagate(const HybridFeatureMaps<Real>& dense_grad,
                                            FeatureParameters& grad) const {
  if (bc_f3d) {
    const int layers = layout.f3d.channels / 4;
    for (int z = 0; z < layout.f3d.depth; ++z) {
      for (int l = 0; l < layers; ++l) {
        const auto i = static_cast<std::size_t>(z * layers + l);
        backward_bc(f3d_layers[i], dense_grad.f3d.slice(z), layout.f3d.channels, l * 4,
                    grad.f3d_layers[i]);
      }
    }
  } else {
    add_into(grad.plain.f3d.data, dense_grad.f3d.data);
  }
  if (bc_uv) {
    for (std::size_t l = 0; l < uv_layers.size(); ++l) {
      backward_bc(uv_layers[l], std::span<const Real>(dense_grad.f_uv.data), layout.f_uv.channels,
                  static_cast<int>(l) * 4, grad.uv_layers[l]);
    }
  } else {
    add_into(grad.plain.f_uv.data, dense_grad.f_uv.data);
  }
  add_into(grad.plain.f_ut.data, dense_grad.f_ut.data);
  add_into(grad.plain.f_vt.data, dense_grad.f_vt.data);
}

template <typename Real>
std::vector<std::span<Real>> FeatureParameters<Real>::tensors() {
  std::vector<std::span<Real>> out;
  for (auto* layers : {&f3d_layers, &uv_layers}) {
    for (auto& g : *layers) {
      push_if(out, g.endpoints);
      push_if(out, g.weights);
    }
  }
  push_if(out, plain.f3d.data);
  push_if(out, plain.f_uv.data);
  push_if(out, plain.f_ut.data);
  push_if(out, plain.f_vt.data);
  return out;
}

template <typename Real>
std::vector<std::span<const Real>> FeatureParameters<Real>::tensors() const {
  std::vector<std::span<const Real>> out;
  for (const auto* layers : {&f3d_layers, &uv_layers}) {
    for (const auto& g : *layers) {
      push_if(out, g.endpoints);
      push_if(out, g.weights);
    }
  }
  push_if(out, plain.f3d.data);
  push_if(out, plain.f_uv.data);
  push_if(out, plain.f_ut.data);
  push_if(out, plain.f_vt.data);
  return out;
}

template <typename Real>
std::vector<std::span<Real>> ModelParameters<Real>::tensors(bool with_features) {
  std::vector<std::span<Real>> out;
  if (with_features) out = features.tensors();
  for (auto t : mlp.tensors()) out.push_back(t);
  return out;
}

template <typename Real>
std::vector<std::span<const Real>> ModelParameters<Real>::tensors(bool with_features) const {
  std::vector<std::span<const Real>> out;
  if (with_features) out = features.tensors();
  for (auto t : mlp.tensors()) out.push_back(t);
  return out;
}

// ---- forward / backward ---------------------------------------------------------

template <typename Real>
std::array<Real, 3> forward_train(const HybridFeatureMaps<Real>& dense, const DecoderMLP<Real>& mlp,
                                  Real u, Real v, Real t, std::span<const Real> noise,
                                  TrainWorkspace<Real>& ws) {
  ws.input.resize(static_cast<std::size_t>(mlp.inputs));
  gather_features(dense, u, v, t, std::span<Real>(ws.input));
  for (std::size_t i = 0; i < noise.size(); ++i) ws.input[i] += noise[i];
  mlp.forward(std::span<const Real>(ws.input), ws.trace, true);
  return ws.trace.output;
}

template <typename Real>
Real loss_and_gradient(const ModelParameters<Real>& params, const TrainBatch<Real>& batch,
                       ModelParameters<Real>* grads, TrainWorkspace<Real>& ws,
                       bool features_frozen) {
  const auto& layout = params.features.layout;
  params.features.materialize(ws.dense);
  const std::size_t n = batch.size();
  if (n == 0) throw Error(ErrorCode::kInvalidArgument, "empty training batch");
  const int fw = ws.dense.feature_width();
  if (!batch.noise.empty() && batch.noise.size() != n * static_cast<std::size_t>(fw)) {
    throw Error(ErrorCode::kSizeMismatch, "noise buffer does not match the batch");
  }
  const bool want_features = grads != nullptr && !features_frozen;
  if (grads) {
    if (grads->mlp.inputs != params.mlp.inputs || grads->mlp.hidden != params.mlp.hidden) {
      grads->mlp = params.mlp;
    }
    grads->mlp.set_zero();
    if (want_features) {
      if (grads->features.tensors().size() != params.features.tensors().size() ||
          !(grads->features.layout == layout) || grads->features.bc_f3d != params.features.bc_f3d ||
          grads->features.bc_uv != params.features.bc_uv) {
        grads->features = params.features;
      }
      grads->features.set_zero();
      if (!same_shape(ws.dense_grad, layout)) ws.dense_grad = HybridFeatureMaps<Real>(layout);
      ws.dense_grad.fill(Real(0));
    }
  }
  constexpr std::size_t kChunk = 64;
  const std::size_t in = static_cast<std::size_t>(params.mlp.inputs);
  ws.batch.input.resize(kChunk * in);
  ws.input_grad.resize(kChunk * in);
  ws.output_grad.resize(kChunk * 3);
  const Real scale = Real(1) / static_cast<Real>(3 * n);
  double total = 0.0;
  for (std::size_t start = 0; start < n; start += kChunk) {
    const std::size_t count = std::min(kChunk, n - start);
    for (std::size_t c = 0; c < count; ++c) {
      const std::size_t i = start + c;
      Real* x = &ws.batch.input[c * in];
      gather_features(ws.dense, batch.u[i], batch.v[i], batch.t[i], std::span<Real>(x, in));
      if (!batch.noise.empty()) {
        const Real* noise = &batch.noise[i * static_cast<std::size_t>(fw)];
        for (int k = 0; k < fw; ++k) x[k] += noise[k];
      }
    }
    params.mlp.forward_batch(ws.batch, static_cast<int>(count), grads != nullptr);
    for (std::size_t c = 0; c < count; ++c) {
      for (int k = 0; k < 3; ++k) {
        const Real r = ws.batch.output[c * 3 + k] - batch.target[start + c][k];
        total += static_cast<double>(r) * static_cast<double>(r);
        ws.output_grad[c * 3 + k] = Real(2) * r * scale;
      }
    }
    if (!grads) continue;
    params.mlp.backward_batch(ws.batch, ws.output_grad.data(), grads->mlp,
                              want_features ? ws.input_grad.data() : nullptr);
    if (want_features) {
      for (std::size_t c = 0; c < count; ++c) {
        const std::size_t i = start + c;
        scatter_feature_grad(ws.dense_grad, batch.u[i], batch.v[i], batch.t[i],
                             std::span<const Real>(&ws.input_grad[c * in], in));
      }
    }
  }
  if (want_features) params.features.backpropagate(ws.dense_grad, grads->features);
  return static_cast<Real>(total / static_cast<double>(3 * n));
}

// ---- optimizer ----------------------------------------------------------------

template <typename Real>
AdamOptimizer<Real>::AdamOptimizer(std::vector<std::size_t> sizes, double learning_rate,
                                   double beta1, double beta2, double epsilon)
    : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon) {
  for (std::size_t s : sizes) {
    m_.emplace_back(s, Real(0));
    v_.emplace_back(s, Real(0));
  }
}

template <typename Real>
void AdamOptimizer<Real>::step(std::span<const std::span<Real>> params,
                               std::span<const std::span<const Real>> grads) {
  if (params.size() != m_.size() || grads.size() != m_.size()) {
    throw Error(ErrorCode::kSizeMismatch, "optimizer tensor list changed shape");
  }
  ++t_;
  const Real b1 = static_cast<Real>(beta1_), b2 = static_cast<Real>(beta2_);
  const Real c1 = static_cast<Real>(1.0 / (1.0 - std::pow(beta1_, static_cast<double>(t_))));
  const Real c2 = static_cast<Real>(1.0 / (1.0 - std::pow(beta2_, static_cast<double>(t_))));
  const Real lr = static_cast<Real>(lr_), eps = static_cast<Real>(eps_);
  for (std::size_t k = 0; k < m_.size(); ++k) {
    auto p = params[k];
    auto g = grads[k];
    auto& m = m_[k];
    auto& v = v_[k];
    if (p.size() != m.size() || g.size() != m.size()) {
      throw Error(ErrorCode::kSizeMismatch, "optimizer tensor changed size");
    }
    for (std::size_t i = 0; i < m.size(); ++i) {
      m[i] = b1 * m[i] + (1 - b1) * g[i];
      v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
      p[i] -= lr * (m[i] * c1) / (std::sqrt(v[i] * c2) + eps);
    }
  }
}

// ---- sampling -------------------------------------------------------------------

TileSamples make_tile_samples(const TemporalLightmapSet& processed) {
  TileSamples s;
  s.processed = processed;
  const auto& mask = processed.mask();
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) s.valid.push_back(static_cast<std::uint32_t>(i));
  }
  if (s.valid.empty()) throw Error(ErrorCode::kEmptyMask, "tile has no valid texels");
  return s;
}

TrainBatch<float> sample_batch(const TileSamples& samples, int count, Rng& rng,
                               const std::array<float, 4>* noise_alpha,
                               const ModelLayout& layout) {
  if (count <= 0) throw Error(ErrorCode::kInvalidArgument, "batch size must be positive");
  const auto& set = samples.processed;
  const int w = set.width();
  const float inv_w = 1.0f / static_cast<float>(w);
  const float inv_h = 1.0f / static_cast<float>(set.height());
  TrainBatch<float> b;
  b.u.resize(static_cast<std::size_t>(count));
  b.v.resize(b.u.size());
  b.t.resize(b.u.size());
  b.target.resize(b.u.size());
  const int fw = layout.feature_width();
  if (noise_alpha) b.noise.resize(b.u.size() * static_cast<std::size_t>(fw));
  const int widths[4] = {layout.f3d.channels, layout.f_uv.channels, layout.f_ut.channels,
                         layout.f_vt.channels};
  for (std::size_t i = 0; i < b.u.size(); ++i) {
    const std::uint32_t texel = samples.valid[uniform_index(rng, samples.valid.size())];
    const int frame = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(set.frame_count())));
    const int x = static_cast<int>(texel % static_cast<std::uint32_t>(w));
    const int y = static_cast<int>(texel / static_cast<std::uint32_t>(w));
    b.u[i] = (static_cast<float>(x) + 0.5f) * inv_w;
    b.v[i] = (static_cast<float>(y) + 0.5f) * inv_h;
    b.t[i] = set.time(frame);
    const float* px = set.pixels(frame).data() + static_cast<std::size_t>(texel) * 3;
    b.target[i] = {px[0], px[1], px[2]};
    if (noise_alpha) {
      float* n = &b.noise[i * static_cast<std::size_t>(fw)];
      for (int m = 0; m < 4; ++m) {
        for (int c = 0; c < widths[m]; ++c) {
          *n++ = static_cast<float>(uniform(rng, -0.5, 0.5)) * (*noise_alpha)[m];
        }
      }
    }
  }
  return b;
}

static std::array<float, 3> target_mean(const TileSamples& samples) {
  std::array<double, 3> sum{};
  std::size_t n = 0;
  for (int f = 0; f < samples.processed.frame_count(); ++f) {
    const auto px = samples.processed.pixels(f);
    for (std::uint32_t i : samples.valid) {
      for (int c = 0; c < 3; ++c) sum[static_cast<std::size_t>(c)] += px[i * 3 + static_cast<std::size_t>(c)];
    }
    n += samples.valid.size();
  }
  std::array<float, 3> mean{};
  if (n == 0) return mean;
  for (int c = 0; c < 3; ++c) mean[static_cast<std::size_t>(c)] = static_cast<float>(sum[static_cast<std::size_t>(c)] / n);
  return mean;
}

double normalized_psnr(const HybridTileModel<float>& model, const TileSamples& samples) {
  const auto& set = samples.processed;
  const int w = set.width();
  MlpTrace<float> trace;
  std::vector<float> scratch;
  double se = 0.0, peak = 0.0;
  std::size_t count = 0;
  for (int f = 0; f < set.frame_count(); ++f) {
    const float t = set.time(f);
    const auto px = set.pixels(f);
    for (std::uint32_t texel : samples.valid) {
      const int x = static_cast<int>(texel % static_cast<std::uint32_t>(w));
      const int y = static_cast<int>(texel / static_cast<std::uint32_t>(w));
      const auto out = model.predict((x + 0.5f) / w, (y + 0.5f) / set.height(), t, trace, scratch);
      for (int c = 0; c < 3; ++c) {
        const double target = px[static_cast<std::size_t>(texel) * 3 + c];
        const double d = out[c] - target;
        se += d * d;
        peak = std::max(peak, std::abs(target));
      }
      count += 3;
    }
  }
  const double mse = se / static_cast<double>(count);
  peak = std::max(peak, 1e-6);
  if (mse <= 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

// ---- tile training -----------------------------------------------------------

TrainConfig TrainConfig::for_profile(ProfileId id) {
  TrainConfig c;
  c.profile = id;
  c.layout = ndgi::profile(id).layout;
  return c;
}

namespace {

template <typename Real>
std::vector<std::size_t> tensor_sizes(const std::vector<std::span<Real>>& ts) {
  std::vector<std::size_t> out;
  for (const auto& t : ts) out.push_back(t.size());
  return out;
}

template <typename Real>
std::vector<std::span<const Real>> const_views(const std::vector<std::span<Real>>& ts) {
  return {ts.begin(), ts.end()};
}

void check_loss(float loss, int stage, int step) {
  if (!std::isfinite(loss)) {
    throw Error(ErrorCode::kNonFiniteLoss, "training loss became non-finite at stage " +
                                               std::to_string(stage) + " step " +
                                               std::to_string(step));
  }
}

}  // namespace

TrainedTile train_tile(const LightmapTile& tile, const TrainConfig& config) {
  const auto start = std::chrono::steady_clock::now();
  if (config.steps < 0 || config.finetune_steps < 0) {
    throw Error(ErrorCode::kInvalidArgument, "step counts must be non-negative");
  }
  const ModelLayout layout = scale_layout(config.layout, tile.descriptor.core_size);
  layout.validate();
  const PreprocessResult pre = preprocess(tile.data, config.gamma);
  const TileSamples samples = make_tile_samples(pre.set);
  Rng rng(derive_seed(config.seed, static_cast<std::uint64_t>(tile.descriptor.tile_id())));

  TrainedTile result;
  ModelParameters<float> params{FeatureParameters<float>(layout, config.bc_simulation),
                                DecoderMLP<float>(layout.input_width(), layout.hidden,
                                                  layout.activation)};
  params.features.init(rng);
  params.mlp.init_glorot(rng);
  // Start the output at the tile average; Adam moves a bias by about one learning rate per step.
  const auto mean = target_mean(samples);
  std::copy(mean.begin(), mean.end(), params.mlp.b3.begin());
  ModelParameters<float> grads = params;
  TrainWorkspace<float> ws;
  const std::array<float, 4>* noise = config.quantization_noise ? &config.noise_alpha : nullptr;

  {
    auto p = params.tensors();
    AdamOptimizer<float> adam(tensor_sizes(p), config.learning_rate);
    result.report.loss.reserve(static_cast<std::size_t>(config.steps));
    for (int step = 0; step < config.steps; ++step) {
      const auto batch = sample_batch(samples, config.batch_size, rng, noise, layout);
      const float loss = loss_and_gradient(params, batch, &grads, ws);
      check_loss(loss, 0, step);
      adam.step(params.tensors(), const_views(grads.tensors()));
      result.report.loss.push_back(loss);
      if (config.on_progress && (step % std::max(config.progress_every, 1) == 0 ||
                                 step + 1 == config.steps)) {
        config.on_progress({0, step, loss});
      }
    }
  }

  params.features.materialize(ws.dense);
  result.model = compress_model(ws.dense, params.mlp, layout, config.profile, tile.descriptor,
                                pre.record, config.noise_alpha, config.mlp_precision);

  ModelParameters<float> tuned{FeatureParameters<float>::from_dense(decode_features(result.model),
                                                                    layout),
                               params.mlp};
  {
    ModelParameters<float> tuned_grads = tuned;
    TrainWorkspace<float> tuned_ws;
    AdamOptimizer<float> adam(tensor_sizes(tuned.tensors(false)), config.learning_rate);
    result.report.finetune_loss.reserve(static_cast<std::size_t>(config.finetune_steps));
    for (int step = 0; step < config.finetune_steps; ++step) {
      const auto batch = sample_batch(samples, config.batch_size, rng, nullptr, layout);
      const float loss = loss_and_gradient(tuned, batch, &tuned_grads, tuned_ws, true);
      check_loss(loss, 1, step);
      adam.step(tuned.tensors(false), const_views(tuned_grads.tensors(false)));
      result.report.finetune_loss.push_back(loss);
      if (config.on_progress && (step % std::max(config.progress_every, 1) == 0 ||
                                 step + 1 == config.finetune_steps)) {
        config.on_progress({1, step, loss});
      }
    }
  }
  store_mlp(tuned.mlp, result.model);

  result.report.train_psnr_db = normalized_psnr(decode_model(result.model), samples);
  result.report.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

std::vector<TrainedTile> train_tiles(std::span<const LightmapTile> tiles, const TrainConfig& config,
                                     int threads) {
  std::vector<TrainedTile> out(tiles.size());
  std::mutex progress_mutex;
  TrainConfig local = config;
  if (config.on_progress) {
    local.on_progress = [&](const TrainProgress& p) {
      std::lock_guard<std::mutex> lock(progress_mutex);
      config.on_progress(p);
    };
  }
  parallel_for(tiles.size(), resolve_threads(threads),
               [&](std::size_t i) { out[i] = train_tile(tiles[i], local); });
  return out;
}

template struct FeatureParameters<float>;
template struct FeatureParameters<double>;
template struct ModelParameters<float>;
template struct ModelParameters<double>;
template class AdamOptimizer<float>;
template class AdamOptimizer<double>;
template std::array<float, 3> forward_train(const HybridFeatureMaps<float>&,
                                            const DecoderMLP<float>&, float, float, float,
                                            std::span<const float>, TrainWorkspace<float>&);
template std::array<double, 3> forward_train(const HybridFeatureMaps<double>&,
                                             const DecoderMLP<double>&, double, double, double,
                                             std::span<const double>, TrainWorkspace<double>&);
template float loss_and_gradient(const ModelParameters<float>&, const TrainBatch<float>&,
                                 ModelParameters<float>*, TrainWorkspace<float>&, bool);
template double loss_and_gradient(const ModelParameters<double>&, const TrainBatch<double>&,
                                  ModelParameters<double>*, TrainWorkspace<double>&, bool);

}  // namespace ndgi
