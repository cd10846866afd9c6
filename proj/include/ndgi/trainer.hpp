#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "ndgi/codec.hpp"
#include "ndgi/hybrid.hpp"
#include "ndgi/lightmap.hpp"
#include "ndgi/profiles.hpp"
#include "ndgi/random.hpp"

namespace ndgi {

// Trainable form of the four feature maps. f3d and f_uv are either held as
// block parameters (endpoints + weights, one BCBlockGrid per 4-channel layer
// and per depth slice) or as plain dense values; f_ut and f_vt are always plain.
template <typename Real>
struct FeatureParameters {
  ModelLayout layout;
  bool bc_f3d = false;
  bool bc_uv = false;
  std::vector<BCBlockGrid<Real>> f3d_layers;  // [slice * layers + layer]
  std::vector<BCBlockGrid<Real>> uv_layers;
  HybridFeatureMaps<Real> plain;  // maps that are not block-parameterized

  FeatureParameters() = default;
  FeatureParameters(const ModelLayout& layout, bool block_parameters);

  // Endpoints 0.4 / 0.6 with weights 0.5; plain values uniform in [0.45, 0.55].
  void init(Rng& rng);

  // Plain (non-block) parameters holding exactly the given dense maps.
  static FeatureParameters from_dense(const HybridFeatureMaps<Real>& maps, const ModelLayout& l);

  void set_zero();
  void materialize(HybridFeatureMaps<Real>& dense) const;
  // Adds the chain-rule image of dense-map gradients to `grad`.
  void backpropagate(const HybridFeatureMaps<Real>& dense_grad, FeatureParameters& grad) const;

  std::vector<std::span<Real>> tensors();
  std::vector<std::span<const Real>> tensors() const;
};

template <typename Real>
struct ModelParameters {
  FeatureParameters<Real> features;
  DecoderMLP<Real> mlp;

  std::vector<std::span<Real>> tensors(bool with_features = true);
  std::vector<std::span<const Real>> tensors(bool with_features = true) const;
};

template <typename Real>
struct TrainBatch {
  std::vector<Real> u, v, t;
  std::vector<std::array<Real, 3>> target;
  // Per-sample additive offsets on the sampled features (feature_width values
  // per sample); empty disables the noise.
  std::vector<Real> noise;

  std::size_t size() const { return u.size(); }
};

template <typename Real>
struct TrainWorkspace {
  HybridFeatureMaps<Real> dense;
  HybridFeatureMaps<Real> dense_grad;
  MlpTrace<Real> trace;
  MlpBatch<Real> batch;
  std::vector<Real> input;
  std::vector<Real> input_grad;
  std::vector<Real> output_grad;
};

// Prediction for one sample with optional feature noise, in normalized space.
template <typename Real>
std::array<Real, 3> forward_train(const HybridFeatureMaps<Real>& dense, const DecoderMLP<Real>& mlp,
                                  Real u, Real v, Real t, std::span<const Real> noise,
                                  TrainWorkspace<Real>& ws);

// Uniform offsets in [-alpha_m / 2, alpha_m / 2] for every sampled feature,
// map by map in decoder input order (f3d, f_uv, f_ut, f_vt).
template <typename Real>
void draw_feature_noise(const HybridFeatureMaps<Real>& dense, const std::array<float, 4>& alpha,
                        Rng& rng, std::span<Real> out) {
  const int widths[4] = {dense.f3d.channels, dense.f_uv.channels, dense.f_ut.channels,
                         dense.f_vt.channels};
  std::size_t k = 0;
  for (int m = 0; m < 4; ++m) {
    for (int c = 0; c < widths[m]; ++c) {
      out[k++] = static_cast<Real>(static_cast<float>(uniform(rng, -0.5, 0.5)) * alpha[m]);
    }
  }
}

// forward_train with the noise drawn from `rng`.
template <typename Real>
std::array<Real, 3> forward_train(const HybridFeatureMaps<Real>& dense, const DecoderMLP<Real>& mlp,
                                  Real u, Real v, Real t, const std::array<float, 4>& alpha,
                                  Rng& rng, TrainWorkspace<Real>& ws) {
  std::vector<Real> noise(static_cast<std::size_t>(dense.feature_width()));
  draw_feature_noise(dense, alpha, rng, std::span<Real>(noise));
  return forward_train(dense, mlp, u, v, t, std::span<const Real>(noise), ws);
}

// Mean squared error over batch and channels. When `grads` is non-null it is
// overwritten with the gradient; `features_frozen` skips feature gradients.
template <typename Real>
Real loss_and_gradient(const ModelParameters<Real>& params, const TrainBatch<Real>& batch,
                       ModelParameters<Real>* grads, TrainWorkspace<Real>& ws,
                       bool features_frozen = false);

// Adam with bias correction over a fixed list of tensors.
template <typename Real>
class AdamOptimizer {
 public:
  AdamOptimizer(std::vector<std::size_t> sizes, double learning_rate, double beta1 = 0.9,
                double beta2 = 0.999, double epsilon = 1e-8);
  void step(std::span<const std::span<Real>> params, std::span<const std::span<const Real>> grads);
  long long steps_taken() const { return t_; }

 private:
  std::vector<std::vector<Real>> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  long long t_ = 0;
};

struct TrainProgress {
  int stage = 0;  // 0 = feature + decoder training, 1 = decoder fine-tuning
  int step = 0;
  float loss = 0.0f;
};

struct TrainConfig {
  ProfileId profile = ProfileId::kM;
  ModelLayout layout;  // for a 128-texel tile core; scaled to the actual core
  int steps = 30000;
  int finetune_steps = 3000;
  int batch_size = 4096;
  double learning_rate = 1e-3;
  std::array<float, 4> noise_alpha{1.0f / 256, 1.0f / 256, 1.0f / 256, 1.0f / 256};
  bool quantization_noise = true;
  bool bc_simulation = true;
  float gamma = 2.2f;
  std::uint64_t seed = 1;
  MlpPrecision mlp_precision = MlpPrecision::kF16;
  std::function<void(const TrainProgress&)> on_progress;
  int progress_every = 100;

  static TrainConfig for_profile(ProfileId id);
};

struct TrainReport {
  std::vector<float> loss;           // stage-one minibatch losses, one per step
  std::vector<float> finetune_loss;  // decoder fine-tuning losses
  double train_psnr_db = 0.0;        // compressed model vs. normalized targets
  double seconds = 0.0;
};

struct TrainedTile {
  CompressedTileModel model;
  TrainReport report;
};

// Training set view of one preprocessed tile.
struct TileSamples {
  TemporalLightmapSet processed;
  std::vector<std::uint32_t> valid;  // flat texel indices with mask set
};

TileSamples make_tile_samples(const TemporalLightmapSet& processed);

// Draws `count` (texel, frame) pairs uniformly from the valid texels and frames.
TrainBatch<float> sample_batch(const TileSamples& samples, int count, Rng& rng,
                               const std::array<float, 4>* noise_alpha,
                               const ModelLayout& layout);

// PSNR of a dense model against every valid texel of every frame, in
// normalized space with peak = largest target magnitude.
double normalized_psnr(const HybridTileModel<float>& model, const TileSamples& samples);

TrainedTile train_tile(const LightmapTile& tile, const TrainConfig& config);
std::vector<TrainedTile> train_tiles(std::span<const LightmapTile> tiles, const TrainConfig& config,
                                     int threads = 0);

}  // namespace ndgi
