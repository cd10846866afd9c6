#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <type_traits>
#include <span>
#include <string>
#include <vector>

#include "ndgi/random.hpp"

namespace ndgi {

enum class Activation : std::uint8_t {
  kGeluTanh = 0,  // 0.5 z (1 + tanh(sqrt(2/pi) (z + 0.044715 z^3)))
  kGeluErf = 1,   // z * Phi(z)
  kIdentity = 2,  // test hook: turns the decoder into a linear map
};

const char* to_string(Activation a);

namespace detail {
template <typename Real>
inline constexpr Real kSqrt2OverPi = static_cast<Real>(0.79788456080286535588);
template <typename Real>
inline constexpr Real kGeluCubic = static_cast<Real>(0.044715);

// exp(y) for y in [0, 18]: power-of-two split plus a degree-6 polynomial
// (relative error ~1e-7). Branch-free so loops over it vectorize.
inline float exp_nonneg(float y) {
  const int k = static_cast<int>(y * 1.44269504f + 0.5f);
  const float kf = static_cast<float>(k);
  const float r = (y - kf * 0.693145751953125f) - kf * 1.428606765330187045e-06f;
  float p = 1.0f / 720.0f;
  p = p * r + 1.0f / 120.0f;
  p = p * r + 1.0f / 24.0f;
  p = p * r + 1.0f / 6.0f;
  p = p * r + 0.5f;
  p = p * r + 1.0f;
  p = p * r + 1.0f;
  return p * std::bit_cast<float>((k + 127) << 23);
}

template <typename Real>
inline Real tanh_fn(Real x) {
  if constexpr (std::is_same_v<Real, float>) {
    const float ax = std::min(std::fabs(x), 9.0f);
    const float t = 1.0f - 2.0f / (exp_nonneg(2.0f * ax) + 1.0f);
    return std::copysign(t, x);
  } else {
    return std::tanh(x);
  }
}
}  // namespace detail

// Activation value; writes the derivative into *grad when non-null.
template <typename Real>
inline Real activate(Real z, Activation a, Real* grad = nullptr) {
  switch (a) {
    case Activation::kGeluTanh: {
      const Real inner = detail::kSqrt2OverPi<Real> * (z + detail::kGeluCubic<Real> * z * z * z);
      const Real th = detail::tanh_fn(inner);
      if (grad) {
        const Real dinner =
            detail::kSqrt2OverPi<Real> * (Real(1) + Real(3) * detail::kGeluCubic<Real> * z * z);
        *grad = Real(0.5) * (Real(1) + th) + Real(0.5) * z * (Real(1) - th * th) * dinner;
      }
      return Real(0.5) * z * (Real(1) + th);
    }
    case Activation::kGeluErf: {
      const Real cdf =
          Real(0.5) * (Real(1) + std::erf(z * static_cast<Real>(std::numbers::sqrt2 / 2)));
      if (grad) {
        const Real pdf = std::exp(Real(-0.5) * z * z) *
                         static_cast<Real>(0.39894228040143267794);  // 1/sqrt(2 pi)
        *grad = cdf + z * pdf;
      }
      return z * cdf;
    }
    case Activation::kIdentity:
      if (grad) *grad = Real(1);
      return z;
  }
  return z;
}

template <typename Real>
inline Real activate_grad(Real z, Activation a) {
  Real g;
  activate(z, a, &g);
  return g;
}

inline constexpr int kTimeEncodingWidth = 4;

// [sin(pi t), cos(pi t), sin(2 pi t), cos(2 pi t)]
template <typename Real>
std::array<Real, kTimeEncodingWidth> encode_time(Real t);

// Per-sample intermediate values recorded by forward() for backward().
template <typename Real>
struct MlpTrace {
  std::vector<Real> input;
  std::vector<Real> z1, a1, z2, a2;
  std::vector<Real> g1, g2;  // activation derivatives, recorded for backward
  std::array<Real, 3> output{};
  std::vector<Real> dz1, dz2;  // backward scratch
};

// Row-major activations of a batch of samples, for the batched passes.
template <typename Real>
struct MlpBatch {
  int count = 0;
  std::vector<Real> input;   // [count][inputs], filled by the caller
  std::vector<Real> a1, g1, a2, g2;  // [count][hidden] activations and derivatives
  std::vector<Real> output;  // [count][3]
  std::vector<Real> d1, d2, w1t, w2t;  // backward scratch
};

// inputs -> hidden -> hidden -> 3, activation on hidden layers only.
// Weight matrices are stored [fan_in][fan_out].
template <typename Real>
struct DecoderMLP {
  static constexpr int kOutputs = 3;

  int inputs = 0;
  int hidden = 0;
  Activation activation = Activation::kGeluTanh;
  std::vector<Real> w1, b1, w2, b2, w3, b3;

  DecoderMLP() = default;
  DecoderMLP(int in, int hid, Activation act = Activation::kGeluTanh);

  std::size_t parameter_count() const;
  static std::size_t parameter_count(int in, int hid) {
    return static_cast<std::size_t>(in) * hid + hid + static_cast<std::size_t>(hid) * hid +
           hid + static_cast<std::size_t>(hid) * kOutputs + kOutputs;
  }

  // Uniform in +-sqrt(6 / (fan_in + fan_out)), zero biases.
  void init_glorot(Rng& rng);
  void set_zero();

  // Views over every parameter array, in serialization order.
  std::array<std::span<Real>, 6> tensors();
  std::array<std::span<const Real>, 6> tensors() const;

  std::array<Real, 3> forward(std::span<const Real> features) const;
  // With record_grad set, also stores what backward() needs.
  void forward(std::span<const Real> features, MlpTrace<Real>& trace,
               bool record_grad = false) const;

  // Requires a trace recorded with record_grad. Accumulates parameter gradients into `grads` (same shape) and writes
  // d(loss)/d(input) into `input_grad` when it is non-empty.
  void backward(MlpTrace<Real>& trace, const std::array<Real, 3>& upstream,
                DecoderMLP<Real>& grads, std::span<Real> input_grad) const;

  // Batched equivalents; `batch.input` must hold count * inputs values.
  void forward_batch(MlpBatch<Real>& batch, int count, bool record_grad) const;
  // d_output is [count][3]; d_input ([count][inputs]) may be null.
  void backward_batch(MlpBatch<Real>& batch, const Real* d_output, DecoderMLP<Real>& grads,
                      Real* d_input) const;

  template <typename Other>
  DecoderMLP<Other> cast() const {
    DecoderMLP<Other> out;
    out.inputs = inputs;
    out.hidden = hidden;
    out.activation = activation;
    auto conv = [](const std::vector<Real>& v) { return std::vector<Other>(v.begin(), v.end()); };
    out.w1 = conv(w1);
    out.b1 = conv(b1);
    out.w2 = conv(w2);
    out.b2 = conv(b2);
    out.w3 = conv(w3);
    out.b3 = conv(b3);
    return out;
  }
};

extern template struct DecoderMLP<float>;
extern template struct DecoderMLP<double>;

}  // namespace ndgi
