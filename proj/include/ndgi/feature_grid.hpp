#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace ndgi {

enum class PlaneRole { kUV, kUT, kVT };

// Dense 2D feature grid, texels stored [y][x][c]. Feature values live in
// [0, 1]; the same type doubles as a gradient buffer.
template <typename Real>
struct Grid2D {
  int width = 0;
  int height = 0;
  int channels = 0;
  PlaneRole role = PlaneRole::kUV;
  std::vector<Real> data;

  Grid2D() = default;
  Grid2D(int w, int h, int c, PlaneRole r = PlaneRole::kUV, Real fill = Real(0))
      : width(w), height(h), channels(c), role(r),
        data(static_cast<std::size_t>(w) * h * c, fill) {}

  bool empty() const { return channels == 0; }
  std::size_t texel_index(int x, int y) const {
    return (static_cast<std::size_t>(y) * width + x) * channels;
  }
  Real& at(int x, int y, int c) { return data[texel_index(x, y) + c]; }
  Real at(int x, int y, int c) const { return data[texel_index(x, y) + c]; }
};

// Dense 3D feature grid with depth as the temporal axis, stored [z][y][x][c].
template <typename Real>
struct Grid3D {
  int width = 0;
  int height = 0;
  int depth = 0;
  int channels = 0;
  std::vector<Real> data;

  Grid3D() = default;
  Grid3D(int w, int h, int d, int c, Real fill = Real(0))
      : width(w), height(h), depth(d), channels(c),
        data(static_cast<std::size_t>(w) * h * d * c, fill) {}

  bool empty() const { return channels == 0; }
  std::size_t slice_size() const { return static_cast<std::size_t>(width) * height * channels; }
  std::span<Real> slice(int z) { return {data.data() + slice_size() * z, slice_size()}; }
  std::span<const Real> slice(int z) const {
    return {data.data() + slice_size() * z, slice_size()};
  }
  std::size_t texel_index(int x, int y, int z) const {
    return ((static_cast<std::size_t>(z) * height + y) * width + x) * channels;
  }
  Real at(int x, int y, int z, int c) const { return data[texel_index(x, y, z) + c]; }
};

// One axis of a linear-interpolation footprint under the texel-center
// convention with edge clamping.
template <typename Real>
struct AxisTap {
  int i0 = 0;
  int i1 = 0;
  Real w1 = 0;  // weight of i1; i0 gets 1 - w1
};

template <typename Real>
inline AxisTap<Real> axis_tap(Real coord, int n) {
  Real p = coord * static_cast<Real>(n) - Real(0.5);
  p = std::clamp(p, Real(0), static_cast<Real>(n - 1));
  AxisTap<Real> tap;
  tap.i0 = std::min(static_cast<int>(p), n - 1);
  tap.i1 = std::min(tap.i0 + 1, n - 1);
  tap.w1 = p - static_cast<Real>(tap.i0);
  return tap;
}

// Bilinear sample at continuous coordinates (x, y) in [0, 1].
template <typename Real>
void sample_2d(const Grid2D<Real>& grid, Real x, Real y, std::span<Real> out) {
  assert(out.size() >= static_cast<std::size_t>(grid.channels));
  const auto tx = axis_tap(x, grid.width);
  const auto ty = axis_tap(y, grid.height);
  const Real w00 = (1 - tx.w1) * (1 - ty.w1), w10 = tx.w1 * (1 - ty.w1);
  const Real w01 = (1 - tx.w1) * ty.w1, w11 = tx.w1 * ty.w1;
  const Real* p00 = &grid.data[grid.texel_index(tx.i0, ty.i0)];
  const Real* p10 = &grid.data[grid.texel_index(tx.i1, ty.i0)];
  const Real* p01 = &grid.data[grid.texel_index(tx.i0, ty.i1)];
  const Real* p11 = &grid.data[grid.texel_index(tx.i1, ty.i1)];
  for (int c = 0; c < grid.channels; ++c) {
    out[c] = w00 * p00[c] + w10 * p10[c] + w01 * p01[c] + w11 * p11[c];
  }
}

template <typename Real>
std::vector<Real> sample_2d(const Grid2D<Real>& grid, Real x, Real y) {
  std::vector<Real> out(static_cast<std::size_t>(grid.channels));
  sample_2d(grid, x, y, std::span<Real>(out));
  return out;
}

// Accumulates d(loss)/d(texel) into `grad` for one bilinear sample.
template <typename Real>
void backward_sample_2d(Grid2D<Real>& grad, Real x, Real y, std::span<const Real> upstream) {
  const auto tx = axis_tap(x, grad.width);
  const auto ty = axis_tap(y, grad.height);
  const Real w00 = (1 - tx.w1) * (1 - ty.w1), w10 = tx.w1 * (1 - ty.w1);
  const Real w01 = (1 - tx.w1) * ty.w1, w11 = tx.w1 * ty.w1;
  Real* p00 = &grad.data[grad.texel_index(tx.i0, ty.i0)];
  Real* p10 = &grad.data[grad.texel_index(tx.i1, ty.i0)];
  Real* p01 = &grad.data[grad.texel_index(tx.i0, ty.i1)];
  Real* p11 = &grad.data[grad.texel_index(tx.i1, ty.i1)];
  for (int c = 0; c < grad.channels; ++c) {
    const Real g = upstream[c];
    p00[c] += w00 * g;
    p10[c] += w10 * g;
    p01[c] += w01 * g;
    p11[c] += w11 * g;
  }
}

// Trilinear sample; t maps linearly onto the depth axis.
template <typename Real>
void sample_3d(const Grid3D<Real>& grid, Real x, Real y, Real t, std::span<Real> out) {
  const auto tx = axis_tap(x, grid.width);
  const auto ty = axis_tap(y, grid.height);
  const auto tz = axis_tap(t, grid.depth);
  const int xs[2] = {tx.i0, tx.i1}, ys[2] = {ty.i0, ty.i1}, zs[2] = {tz.i0, tz.i1};
  const Real wx[2] = {1 - tx.w1, tx.w1}, wy[2] = {1 - ty.w1, ty.w1}, wz[2] = {1 - tz.w1, tz.w1};
  for (int c = 0; c < grid.channels; ++c) out[c] = 0;
  for (int k = 0; k < 2; ++k) {
    for (int j = 0; j < 2; ++j) {
      for (int i = 0; i < 2; ++i) {
        const Real w = wx[i] * wy[j] * wz[k];
        const Real* p = &grid.data[grid.texel_index(xs[i], ys[j], zs[k])];
        for (int c = 0; c < grid.channels; ++c) out[c] += w * p[c];
      }
    }
  }
}

template <typename Real>
std::vector<Real> sample_3d(const Grid3D<Real>& grid, Real x, Real y, Real t) {
  std::vector<Real> out(static_cast<std::size_t>(grid.channels));
  sample_3d(grid, x, y, t, std::span<Real>(out));
  return out;
}

template <typename Real>
void backward_sample_3d(Grid3D<Real>& grad, Real x, Real y, Real t,
                        std::span<const Real> upstream) {
  const auto tx = axis_tap(x, grad.width);
  const auto ty = axis_tap(y, grad.height);
  const auto tz = axis_tap(t, grad.depth);
  const int xs[2] = {tx.i0, tx.i1}, ys[2] = {ty.i0, ty.i1}, zs[2] = {tz.i0, tz.i1};
  const Real wx[2] = {1 - tx.w1, tx.w1}, wy[2] = {1 - ty.w1, ty.w1}, wz[2] = {1 - tz.w1, tz.w1};
  for (int k = 0; k < 2; ++k) {
    for (int j = 0; j < 2; ++j) {
      for (int i = 0; i < 2; ++i) {
        const Real w = wx[i] * wy[j] * wz[k];
        Real* p = &grad.data[grad.texel_index(xs[i], ys[j], zs[k])];
        for (int c = 0; c < grad.channels; ++c) p[c] += w * upstream[c];
      }
    }
  }
}

// Block-compression parameterization of a 2D feature layer: every 4x4 block
// holds two k-channel endpoints and 16 interpolation weights. Stored values
// are unconstrained; the forward pass clamps them to [0, 1] and the backward
// pass treats the clamp as identity (straight-through).
template <typename Real>
struct BCBlockGrid {
  static constexpr int kBlock = 4;
  static constexpr int kTexelsPerBlock = 16;

  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<Real> endpoints;  // [block][2][channels]
  std::vector<Real> weights;    // [block][16], texel raster order inside the block

  BCBlockGrid() = default;
  BCBlockGrid(int w, int h, int k)
      : width(w), height(h), channels(k),
        endpoints(static_cast<std::size_t>(w / 4) * (h / 4) * 2 * k, Real(0)),
        weights(static_cast<std::size_t>(w / 4) * (h / 4) * 16, Real(0)) {
    assert(w % 4 == 0 && h % 4 == 0);
  }

  int blocks_x() const { return width / kBlock; }
  int blocks_y() const { return height / kBlock; }
  int block_count() const { return blocks_x() * blocks_y(); }
  Real* e1(int block) { return &endpoints[static_cast<std::size_t>(block) * 2 * channels]; }
  Real* e2(int block) { return e1(block) + channels; }
  const Real* e1(int block) const {
    return &endpoints[static_cast<std::size_t>(block) * 2 * channels];
  }
  const Real* e2(int block) const { return e1(block) + channels; }
  Real* w(int block) { return &weights[static_cast<std::size_t>(block) * kTexelsPerBlock]; }
  const Real* w(int block) const {
    return &weights[static_cast<std::size_t>(block) * kTexelsPerBlock];
  }
};

template <typename Real>
inline Real clamp01(Real v) {
  return std::clamp(v, Real(0), Real(1));
}

// Writes f_p = (1 - w_p) e1 + w_p e2 for every texel into a dense texel array
// with `out_channels` interleaved channels, starting at `channel_offset`.
template <typename Real>
void reconstruct_bc(const BCBlockGrid<Real>& params, std::span<Real> out, int out_channels,
                    int channel_offset) {
  const int k = params.channels;
  for (int by = 0; by < params.blocks_y(); ++by) {
    for (int bx = 0; bx < params.blocks_x(); ++bx) {
      const int b = by * params.blocks_x() + bx;
      const Real* e1 = params.e1(b);
      const Real* e2 = params.e2(b);
      const Real* w = params.w(b);
      for (int p = 0; p < 16; ++p) {
        const int x = bx * 4 + (p & 3);
        const int y = by * 4 + (p >> 2);
        const Real wp = clamp01(w[p]);
        Real* dst = &out[(static_cast<std::size_t>(y) * params.width + x) * out_channels +
                         channel_offset];
        for (int c = 0; c < k; ++c) dst[c] = (1 - wp) * clamp01(e1[c]) + wp * clamp01(e2[c]);
      }
    }
  }
}

template <typename Real>
Grid2D<Real> reconstruct_bc(const BCBlockGrid<Real>& params) {
  Grid2D<Real> out(params.width, params.height, params.channels);
  reconstruct_bc(params, std::span<Real>(out.data), params.channels, 0);
  return out;
}

// Chain rule through the block interpolation:
//   df/de1 = 1 - w_p, df/de2 = w_p, df/dw_p = e2 - e1.
template <typename Real>
void backward_bc(const BCBlockGrid<Real>& params, std::span<const Real> dense_grad,
                 int grad_channels, int channel_offset, BCBlockGrid<Real>& param_grad) {
  const int k = params.channels;
  for (int by = 0; by < params.blocks_y(); ++by) {
    for (int bx = 0; bx < params.blocks_x(); ++bx) {
      const int b = by * params.blocks_x() + bx;
      const Real* e1 = params.e1(b);
      const Real* e2 = params.e2(b);
      const Real* w = params.w(b);
      Real* g1 = param_grad.e1(b);
      Real* g2 = param_grad.e2(b);
      Real* gw = param_grad.w(b);
      for (int p = 0; p < 16; ++p) {
        const int x = bx * 4 + (p & 3);
        const int y = by * 4 + (p >> 2);
        const Real wp = clamp01(w[p]);
        const Real* g = &dense_grad[(static_cast<std::size_t>(y) * params.width + x) *
                                        grad_channels +
                                    channel_offset];
        Real dw = 0;
        for (int c = 0; c < k; ++c) {
          g1[c] += (1 - wp) * g[c];
          g2[c] += wp * g[c];
          dw += (clamp01(e2[c]) - clamp01(e1[c])) * g[c];
        }
        gw[p] += dw;
      }
    }
  }
}

}  // namespace ndgi
