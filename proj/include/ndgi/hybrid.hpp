#pragma once

#include <array>
#include <span>

#include "ndgi/decoder.hpp"
#include "ndgi/feature_grid.hpp"
#include "ndgi/profiles.hpp"

namespace ndgi {

// The four dense feature maps of one tile. Absent maps have zero channels.
template <typename Real>
struct HybridFeatureMaps {
  Grid3D<Real> f3d;
  Grid2D<Real> f_uv;
  Grid2D<Real> f_ut;  // x = u, y = t
  Grid2D<Real> f_vt;  // x = v, y = t

  HybridFeatureMaps() = default;
  explicit HybridFeatureMaps(const ModelLayout& layout, Real fill = Real(0))
      : f3d(layout.f3d.width, layout.f3d.height, layout.f3d.depth, layout.f3d.channels, fill),
        f_uv(layout.f_uv.width, layout.f_uv.height, layout.f_uv.channels, PlaneRole::kUV, fill),
        f_ut(layout.f_ut.width, layout.f_ut.height, layout.f_ut.channels, PlaneRole::kUT, fill),
        f_vt(layout.f_vt.width, layout.f_vt.height, layout.f_vt.channels, PlaneRole::kVT, fill) {}

  int feature_width() const { return f3d.channels + f_uv.channels + f_ut.channels + f_vt.channels; }

  void fill(Real v) {
    std::fill(f3d.data.begin(), f3d.data.end(), v);
    std::fill(f_uv.data.begin(), f_uv.data.end(), v);
    std::fill(f_ut.data.begin(), f_ut.data.end(), v);
    std::fill(f_vt.data.begin(), f_vt.data.end(), v);
  }
};

// Decoder input offsets of each map inside the concatenated vector
// [f3d | f_uv | f_ut | f_vt | time encoding].
struct FeatureOffsets {
  int f3d = 0, f_uv = 0, f_ut = 0, f_vt = 0, time = 0;

  template <typename Real>
  explicit FeatureOffsets(const HybridFeatureMaps<Real>& m)
      : f3d(0),
        f_uv(m.f3d.channels),
        f_ut(f_uv + m.f_uv.channels),
        f_vt(f_ut + m.f_ut.channels),
        time(f_vt + m.f_vt.channels) {}
};

template <typename Real>
void gather_features(const HybridFeatureMaps<Real>& m, Real u, Real v, Real t,
                     std::span<Real> out) {
  const FeatureOffsets off(m);
  if (!m.f3d.empty()) sample_3d(m.f3d, u, v, t, out.subspan(off.f3d, m.f3d.channels));
  if (!m.f_uv.empty()) sample_2d(m.f_uv, u, v, out.subspan(off.f_uv, m.f_uv.channels));
  if (!m.f_ut.empty()) sample_2d(m.f_ut, u, t, out.subspan(off.f_ut, m.f_ut.channels));
  if (!m.f_vt.empty()) sample_2d(m.f_vt, v, t, out.subspan(off.f_vt, m.f_vt.channels));
  const auto enc = encode_time(t);
  for (int i = 0; i < kTimeEncodingWidth; ++i) out[off.time + i] = enc[i];
}

// Scatters d(loss)/d(input) back into per-texel gradients of every map.
template <typename Real>
void scatter_feature_grad(HybridFeatureMaps<Real>& grad, Real u, Real v, Real t,
                          std::span<const Real> input_grad) {
  const FeatureOffsets off(grad);
  if (!grad.f3d.empty()) {
    backward_sample_3d(grad.f3d, u, v, t, input_grad.subspan(off.f3d, grad.f3d.channels));
  }
  if (!grad.f_uv.empty()) {
    backward_sample_2d(grad.f_uv, u, v, input_grad.subspan(off.f_uv, grad.f_uv.channels));
  }
  if (!grad.f_ut.empty()) {
    backward_sample_2d(grad.f_ut, u, t, input_grad.subspan(off.f_ut, grad.f_ut.channels));
  }
  if (!grad.f_vt.empty()) {
    backward_sample_2d(grad.f_vt, v, t, input_grad.subspan(off.f_vt, grad.f_vt.channels));
  }
}

// Dense maps plus decoder: everything needed to evaluate a tile in
// normalized (mean-divided, gamma-encoded) space.
template <typename Real>
struct HybridTileModel {
  HybridFeatureMaps<Real> maps;
  DecoderMLP<Real> mlp;

  std::array<Real, 3> predict(Real u, Real v, Real t, MlpTrace<Real>& trace,
                              std::vector<Real>& scratch) const {
    scratch.resize(static_cast<std::size_t>(mlp.inputs));
    gather_features(maps, u, v, t, std::span<Real>(scratch));
    mlp.forward(std::span<const Real>(scratch), trace);
    return trace.output;
  }

  std::array<Real, 3> predict(Real u, Real v, Real t) const {
    MlpTrace<Real> trace;
    std::vector<Real> scratch;
    return predict(u, v, t, trace, scratch);
  }
};

}  // namespace ndgi
