#include "ndgi/decoder.hpp"

#include <cmath>
#include <numbers>

#include "ndgi/error.hpp"

namespace ndgi {

const char* to_string(Activation a) {
  switch (a) {
    case Activation::kGeluTanh: return "gelu_tanh";
    case Activation::kGeluErf: return "gelu_erf";
    case Activation::kIdentity: return "identity";
  }
  return "unknown";
}

template <typename Real>
std::array<Real, kTimeEncodingWidth> encode_time(Real t) {
  const Real a = static_cast<Real>(std::numbers::pi) * t;
  return {std::sin(a), std::cos(a), std::sin(2 * a), std::cos(2 * a)};
}

template <typename Real>
DecoderMLP<Real>::DecoderMLP(int in, int hid, Activation act)
    : inputs(in),
      hidden(hid),
      activation(act),
      w1(static_cast<std::size_t>(in) * hid, Real(0)),
      b1(static_cast<std::size_t>(hid), Real(0)),
      w2(static_cast<std::size_t>(hid) * hid, Real(0)),
      b2(static_cast<std::size_t>(hid), Real(0)),
      w3(static_cast<std::size_t>(hid) * kOutputs, Real(0)),
      b3(kOutputs, Real(0)) {
  if (in <= 0 || hid <= 0) throw Error(ErrorCode::kInvalidArgument, "decoder sizes must be positive");
}

template <typename Real>
std::size_t DecoderMLP<Real>::parameter_count() const {
  return parameter_count(inputs, hidden);
}

template <typename Real>
void DecoderMLP<Real>::init_glorot(Rng& rng) {
  auto fill = [&rng](std::vector<Real>& w, int fan_in, int fan_out) {
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    for (auto& v : w) v = static_cast<Real>(uniform(rng, -limit, limit));
  };
  fill(w1, inputs, hidden);
  fill(w2, hidden, hidden);
  fill(w3, hidden, kOutputs);
  std::fill(b1.begin(), b1.end(), Real(0));
  std::fill(b2.begin(), b2.end(), Real(0));
  std::fill(b3.begin(), b3.end(), Real(0));
}

template <typename Real>
void DecoderMLP<Real>::set_zero() {
  for (auto t : tensors()) std::fill(t.begin(), t.end(), Real(0));
}

template <typename Real>
std::array<std::span<Real>, 6> DecoderMLP<Real>::tensors() {
  return {std::span<Real>(w1), std::span<Real>(b1), std::span<Real>(w2),
          std::span<Real>(b2), std::span<Real>(w3), std::span<Real>(b3)};
}

template <typename Real>
std::array<std::span<const Real>, 6> DecoderMLP<Real>::tensors() const {
  return {std::span<const Real>(w1), std::span<const Real>(b1), std::span<const Real>(w2),
          std::span<const Real>(b2), std::span<const Real>(w3), std::span<const Real>(b3)};
}

namespace {

// out[j] = bias[j] + sum_i in[i] * w[i][j]
template <typename Real>
void affine(const Real* in, int n_in, const Real* w, const Real* bias, int n_out, Real* out) {
  for (int j = 0; j < n_out; ++j) out[j] = bias[j];
  for (int i = 0; i < n_in; ++i) {
    const Real x = in[i];
    const Real* row = w + static_cast<std::size_t>(i) * n_out;
    for (int j = 0; j < n_out; ++j) out[j] += x * row[j];
  }
}

}  // namespace

template <typename Real>
void DecoderMLP<Real>::forward(std::span<const Real> features, MlpTrace<Real>& trace,
                               bool record_grad) const {
  if (features.size() != static_cast<std::size_t>(inputs)) {
    throw Error(ErrorCode::kWidthMismatch, "decoder expects " + std::to_string(inputs) +
                                               " inputs, got " +
                                               std::to_string(features.size()));
  }
  trace.input.assign(features.begin(), features.end());
  trace.z1.resize(hidden);
  trace.a1.resize(hidden);
  trace.z2.resize(hidden);
  trace.a2.resize(hidden);
  if (record_grad) {
    trace.g1.resize(hidden);
    trace.g2.resize(hidden);
  }
  Real* g1 = record_grad ? trace.g1.data() : nullptr;
  Real* g2 = record_grad ? trace.g2.data() : nullptr;
  affine(features.data(), inputs, w1.data(), b1.data(), hidden, trace.z1.data());
  for (int j = 0; j < hidden; ++j) {
    trace.a1[j] = activate(trace.z1[j], activation, g1 ? g1 + j : nullptr);
  }
  affine(trace.a1.data(), hidden, w2.data(), b2.data(), hidden, trace.z2.data());
  for (int j = 0; j < hidden; ++j) {
    trace.a2[j] = activate(trace.z2[j], activation, g2 ? g2 + j : nullptr);
  }
  affine(trace.a2.data(), hidden, w3.data(), b3.data(), kOutputs, trace.output.data());
}

template <typename Real>
std::array<Real, 3> DecoderMLP<Real>::forward(std::span<const Real> features) const {
  MlpTrace<Real> trace;
  forward(features, trace);
  return trace.output;
}

template <typename Real>
void DecoderMLP<Real>::backward(MlpTrace<Real>& trace, const std::array<Real, 3>& upstream,
                                DecoderMLP<Real>& grads, std::span<Real> input_grad) const {
  const int h = hidden;
  trace.dz1.resize(static_cast<std::size_t>(h));
  trace.dz2.resize(static_cast<std::size_t>(h));
  Real* dz1 = trace.dz1.data();
  Real* dz2 = trace.dz2.data();

  for (int c = 0; c < kOutputs; ++c) grads.b3[c] += upstream[c];
  for (int i = 0; i < h; ++i) {
    Real* g = &grads.w3[static_cast<std::size_t>(i) * kOutputs];
    const Real* w = &w3[static_cast<std::size_t>(i) * kOutputs];
    Real da = 0;
    for (int c = 0; c < kOutputs; ++c) {
      g[c] += trace.a2[i] * upstream[c];
      da += w[c] * upstream[c];
    }
    dz2[i] = da * trace.g2[i];
  }

  for (int j = 0; j < h; ++j) grads.b2[j] += dz2[j];
  for (int i = 0; i < h; ++i) {
    Real* g = &grads.w2[static_cast<std::size_t>(i) * h];
    const Real* w = &w2[static_cast<std::size_t>(i) * h];
    const Real a = trace.a1[i];
    Real da = 0;
    for (int j = 0; j < h; ++j) {
      g[j] += a * dz2[j];
      da += w[j] * dz2[j];
    }
    dz1[i] = da * trace.g1[i];
  }

  for (int j = 0; j < h; ++j) grads.b1[j] += dz1[j];
  const bool want_input = !input_grad.empty();
  for (int i = 0; i < inputs; ++i) {
    Real* g = &grads.w1[static_cast<std::size_t>(i) * h];
    const Real* w = &w1[static_cast<std::size_t>(i) * h];
    const Real x = trace.input[i];
    Real dx = 0;
    for (int j = 0; j < h; ++j) {
      g[j] += x * dz1[j];
      dx += w[j] * dz1[j];
    }
    if (want_input) input_grad[i] = dx;
  }
}

namespace {

// In-place activation over a contiguous array; derivatives into g when non-null.
template <typename Real>
void activate_span(Real* z, std::size_t n, Activation a, Real* g) {
  if (a == Activation::kGeluTanh) {
    constexpr Real k0 = detail::kSqrt2OverPi<Real>;
    constexpr Real k1 = detail::kGeluCubic<Real>;
    if (g) {
      for (std::size_t i = 0; i < n; ++i) {
        const Real x = z[i];
        const Real th = detail::tanh_fn(k0 * (x + k1 * x * x * x));
        g[i] = Real(0.5) * (Real(1) + th) +
               Real(0.5) * x * (Real(1) - th * th) * (k0 * (Real(1) + Real(3) * k1 * x * x));
        z[i] = Real(0.5) * x * (Real(1) + th);
      }
    } else {
      for (std::size_t i = 0; i < n; ++i) {
        const Real x = z[i];
        const Real th = detail::tanh_fn(k0 * (x + k1 * x * x * x));
        z[i] = Real(0.5) * x * (Real(1) + th);
      }
    }
    return;
  }
  for (std::size_t i = 0; i < n; ++i) z[i] = activate(z[i], a, g ? g + i : nullptr);
}

}  // namespace

template <typename Real>
void DecoderMLP<Real>::forward_batch(MlpBatch<Real>& b, int count, bool record_grad) const {
  if (b.input.size() < static_cast<std::size_t>(count) * inputs) {
    throw Error(ErrorCode::kWidthMismatch, "batch input buffer is too small");
  }
  const int h = hidden;
  const std::size_t hn = static_cast<std::size_t>(count) * h;
  b.count = count;
  b.a1.resize(hn);
  b.a2.resize(hn);
  b.g1.resize(hn);
  b.g2.resize(hn);
  b.output.resize(static_cast<std::size_t>(count) * kOutputs);
  for (int c = 0; c < count; ++c) {
    affine(&b.input[static_cast<std::size_t>(c) * inputs], inputs, w1.data(), b1.data(), h,
           &b.a1[static_cast<std::size_t>(c) * h]);
  }
  activate_span(b.a1.data(), hn, activation, record_grad ? b.g1.data() : nullptr);
  for (int c = 0; c < count; ++c) {
    affine(&b.a1[static_cast<std::size_t>(c) * h], h, w2.data(), b2.data(), h,
           &b.a2[static_cast<std::size_t>(c) * h]);
  }
  activate_span(b.a2.data(), hn, activation, record_grad ? b.g2.data() : nullptr);
  for (int c = 0; c < count; ++c) {
    const Real* a = &b.a2[static_cast<std::size_t>(c) * h];
    Real* out = &b.output[static_cast<std::size_t>(c) * kOutputs];
    Real o0 = b3[0], o1 = b3[1], o2 = b3[2];
    for (int i = 0; i < h; ++i) {
      o0 += a[i] * w3[static_cast<std::size_t>(i) * 3];
      o1 += a[i] * w3[static_cast<std::size_t>(i) * 3 + 1];
      o2 += a[i] * w3[static_cast<std::size_t>(i) * 3 + 2];
    }
    out[0] = o0;
    out[1] = o1;
    out[2] = o2;
  }
}

namespace {

// dst[j][i] = src[i][j] for an rows x cols source.
template <typename Real>
void transpose(const std::vector<Real>& src, int rows, int cols, std::vector<Real>& dst) {
  dst.resize(static_cast<std::size_t>(rows) * cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      dst[static_cast<std::size_t>(j) * rows + i] = src[static_cast<std::size_t>(i) * cols + j];
    }
  }
}

}  // namespace

template <typename Real>
void DecoderMLP<Real>::backward_batch(MlpBatch<Real>& b, const Real* d_output,
                                      DecoderMLP<Real>& grads, Real* d_input) const {
  const int h = hidden;
  const int count = b.count;
  b.d1.resize(static_cast<std::size_t>(count) * h);
  b.d2.resize(static_cast<std::size_t>(count) * h);
  transpose(w2, h, h, b.w2t);
  if (d_input) transpose(w1, inputs, h, b.w1t);

  // Output layer.
  for (int c = 0; c < count; ++c) {
    const Real* g = d_output + static_cast<std::size_t>(c) * kOutputs;
    const Real* a = &b.a2[static_cast<std::size_t>(c) * h];
    const Real* deriv = &b.g2[static_cast<std::size_t>(c) * h];
    Real* dz = &b.d2[static_cast<std::size_t>(c) * h];
    for (int k = 0; k < kOutputs; ++k) grads.b3[k] += g[k];
    for (int i = 0; i < h; ++i) {
      Real* gw = &grads.w3[static_cast<std::size_t>(i) * kOutputs];
      const Real* w = &w3[static_cast<std::size_t>(i) * kOutputs];
      gw[0] += a[i] * g[0];
      gw[1] += a[i] * g[1];
      gw[2] += a[i] * g[2];
      dz[i] = (w[0] * g[0] + w[1] * g[1] + w[2] * g[2]) * deriv[i];
    }
  }

  // Second hidden layer.
  for (int c = 0; c < count; ++c) {
    const Real* dz = &b.d2[static_cast<std::size_t>(c) * h];
    const Real* a = &b.a1[static_cast<std::size_t>(c) * h];
    Real* da = &b.d1[static_cast<std::size_t>(c) * h];
    for (int j = 0; j < h; ++j) grads.b2[j] += dz[j];
    for (int i = 0; i < h; ++i) {
      Real* gw = &grads.w2[static_cast<std::size_t>(i) * h];
      const Real ai = a[i];
      for (int j = 0; j < h; ++j) gw[j] += ai * dz[j];
    }
    std::fill(da, da + h, Real(0));
    for (int j = 0; j < h; ++j) {
      const Real* wt = &b.w2t[static_cast<std::size_t>(j) * h];
      const Real g = dz[j];
      for (int i = 0; i < h; ++i) da[i] += wt[i] * g;
    }
    const Real* deriv = &b.g1[static_cast<std::size_t>(c) * h];
    for (int i = 0; i < h; ++i) da[i] *= deriv[i];
  }

  // First layer.
  for (int c = 0; c < count; ++c) {
    const Real* dz = &b.d1[static_cast<std::size_t>(c) * h];
    const Real* x = &b.input[static_cast<std::size_t>(c) * inputs];
    for (int j = 0; j < h; ++j) grads.b1[j] += dz[j];
    for (int i = 0; i < inputs; ++i) {
      Real* gw = &grads.w1[static_cast<std::size_t>(i) * h];
      const Real xi = x[i];
      for (int j = 0; j < h; ++j) gw[j] += xi * dz[j];
    }
    if (d_input) {
      Real* dx = d_input + static_cast<std::size_t>(c) * inputs;
      std::fill(dx, dx + inputs, Real(0));
      for (int j = 0; j < h; ++j) {
        const Real* wt = &b.w1t[static_cast<std::size_t>(j) * inputs];
        const Real g = dz[j];
        for (int i = 0; i < inputs; ++i) dx[i] += wt[i] * g;
      }
    }
  }
}

template std::array<float, 4> encode_time<float>(float);
template std::array<double, 4> encode_time<double>(double);
template struct DecoderMLP<float>;
template struct DecoderMLP<double>;

}  // namespace ndgi
