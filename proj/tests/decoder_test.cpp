#include <gtest/gtest.h>

#include <cmath>

#include "ndgi/decoder.hpp"
#include "ndgi/random.hpp"

using namespace ndgi;

namespace {

DecoderMLP<double> random_mlp(Rng& rng, int in, int hid, Activation act) {
  DecoderMLP<double> m(in, hid, act);
  for (auto t : m.tensors()) {
    for (auto& v : t) v = uniform(rng, -0.8, 0.8);
  }
  return m;
}

double gelu_tanh_reference(double z) {
  return 0.5 * z * (1.0 + std::tanh(std::sqrt(2.0 / M_PI) * (z + 0.044715 * z * z * z)));
}

}  // namespace

TEST(TimeEncoding, ExactValues) {
  const double r = std::sqrt(2.0) / 2;
  auto e = encode_time(0.0);
  EXPECT_NEAR(e[0], 0.0, 1e-15);
  EXPECT_NEAR(e[1], 1.0, 1e-15);
  EXPECT_NEAR(e[2], 0.0, 1e-15);
  EXPECT_NEAR(e[3], 1.0, 1e-15);
  e = encode_time(0.5);
  EXPECT_NEAR(e[0], 1.0, 1e-15);
  EXPECT_NEAR(e[1], 0.0, 1e-15);
  EXPECT_NEAR(e[2], 0.0, 1e-15);
  EXPECT_NEAR(e[3], -1.0, 1e-15);
  e = encode_time(0.25);
  EXPECT_NEAR(e[0], r, 1e-15);
  EXPECT_NEAR(e[1], r, 1e-15);
  EXPECT_NEAR(e[2], 1.0, 1e-15);
  EXPECT_NEAR(e[3], 0.0, 1e-15);
}

TEST(Activation, GeluValues) {
  EXPECT_EQ(activate(0.0, Activation::kGeluTanh), 0.0);
  EXPECT_NEAR(activate(3.0, Activation::kGeluTanh), 2.99636, 1e-5);
  EXPECT_NEAR(activate(3.0f, Activation::kGeluTanh), 2.99636f, 1e-5f);
  EXPECT_NEAR(activate(3.0, Activation::kGeluErf), 2.99595, 1e-5);
  Rng rng(1);
  for (int i = 0; i < 2000; ++i) {
    const double z = uniform(rng, -12.0, 12.0);
    ASSERT_NEAR(activate(z, Activation::kGeluTanh), gelu_tanh_reference(z), 1e-12);
    ASSERT_NEAR(activate(static_cast<float>(z), Activation::kGeluTanh),
                gelu_tanh_reference(static_cast<float>(z)), 2e-6 * std::max(1.0, std::abs(z)));
  }
}

TEST(Activation, DerivativesMatchFiniteDifferences) {
  Rng rng(2);
  const double h = 1e-5;
  for (auto act : {Activation::kGeluTanh, Activation::kGeluErf, Activation::kIdentity}) {
    for (int i = 0; i < 500; ++i) {
      const double z = uniform(rng, -6.0, 6.0);
      const double fd = (activate(z + h, act) - activate(z - h, act)) / (2 * h);
      ASSERT_NEAR(activate_grad(z, act), fd, 1e-7);
    }
  }
}

TEST(Decoder, ParameterCount) {
  EXPECT_EQ(DecoderMLP<float>(16, 16).parameter_count(), 595u);
  EXPECT_EQ(DecoderMLP<float>::parameter_count(16, 16), 595u);
  EXPECT_EQ(DecoderMLP<float>::parameter_count(16, 64), 16u * 64 + 64 + 64 * 64 + 64 + 64 * 3 + 3);
}

TEST(Decoder, ZeroNetworkOutputsZero) {
  DecoderMLP<double> m(16, 16);
  Rng rng(3);
  std::vector<double> x(16);
  for (auto& v : x) v = uniform(rng, -5, 5);
  const auto y = m.forward(x);
  for (double v : y) EXPECT_EQ(v, 0.0);
}

TEST(Decoder, GlorotInitStaysInRange) {
  DecoderMLP<double> m(16, 16);
  Rng rng(4);
  m.init_glorot(rng);
  const double l1 = std::sqrt(6.0 / 32), l3 = std::sqrt(6.0 / 19);
  for (double v : m.w1) ASSERT_LE(std::abs(v), l1);
  for (double v : m.w3) ASSERT_LE(std::abs(v), l3);
  for (double v : m.b2) ASSERT_EQ(v, 0.0);
}

TEST(Decoder, IdentityConfiguredNetworkPassesAChannelThrough) {
  // One hidden unit per layer copies input channel 5 to every output. GELU is
  // not the identity, so use the linear test hook.
  DecoderMLP<double> m(8, 1, Activation::kIdentity);
  m.w1[5 * 1 + 0] = 1.0;
  m.w2[0] = 1.0;
  for (int o = 0; o < 3; ++o) m.w3[o] = 1.0;
  std::vector<double> x{0.1, 0.2, 0.3, 0.4, 0.5, 0.625, 0.7, 0.8};
  const auto y = m.forward(x);
  for (double v : y) EXPECT_EQ(v, 0.625);
}

TEST(Decoder, ForwardIsDeterministic) {
  Rng rng(5);
  const auto m = random_mlp(rng, 16, 16, Activation::kGeluTanh).cast<float>();
  std::vector<float> x(16);
  for (auto& v : x) v = static_cast<float>(uniform01(rng));
  const auto a = m.forward(x);
  const auto b = m.forward(x);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(std::bit_cast<std::uint32_t>(a[i]), std::bit_cast<std::uint32_t>(b[i]));
}

TEST(Decoder, BackwardMatchesFiniteDifferences) {
  Rng rng(6);
  const double h = 1e-6;
  int checked = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int in = 3 + static_cast<int>(uniform_index(rng, 14));
    const int hid = 2 + static_cast<int>(uniform_index(rng, 7));
    auto m = random_mlp(rng, in, hid, trial % 2 ? Activation::kGeluErf : Activation::kGeluTanh);
    std::vector<double> x(static_cast<std::size_t>(in));
    for (auto& v : x) v = uniform(rng, -1, 1);
    const std::array<double, 3> up{uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1)};
    auto loss = [&](const DecoderMLP<double>& mm, const std::vector<double>& xx) {
      const auto y = mm.forward(xx);
      return y[0] * up[0] + y[1] * up[1] + y[2] * up[2];
    };
    MlpTrace<double> trace;
    m.forward(x, trace, true);
    DecoderMLP<double> grads(in, hid);
    std::vector<double> dx(x.size());
    m.backward(trace, up, grads, dx);

    auto params = m.tensors();
    auto gparams = grads.tensors();
    for (std::size_t t = 0; t < params.size(); ++t) {
      for (std::size_t i = 0; i < params[t].size(); ++i) {
        const double keep = params[t][i];
        params[t][i] = keep + h;
        const double lp = loss(m, x);
        params[t][i] = keep - h;
        const double lm = loss(m, x);
        params[t][i] = keep;
        const double fd = (lp - lm) / (2 * h);
        ASSERT_LT(std::abs(gparams[t][i] - fd) / std::max(1.0, std::abs(fd)), 1e-4);
        ++checked;
      }
    }
    for (std::size_t i = 0; i < x.size(); ++i) {
      auto xp = x, xm = x;
      xp[i] += h;
      xm[i] -= h;
      const double fd = (loss(m, xp) - loss(m, xm)) / (2 * h);
      ASSERT_LT(std::abs(dx[i] - fd) / std::max(1.0, std::abs(fd)), 1e-4);
    }
  }
  EXPECT_GT(checked, 1000);
}

TEST(Decoder, ZeroUpstreamGivesZeroGradients) {
  Rng rng(7);
  auto m = random_mlp(rng, 10, 6, Activation::kGeluTanh);
  std::vector<double> x(10, 0.3), dx(10, 99.0);
  MlpTrace<double> trace;
  m.forward(x, trace, true);
  DecoderMLP<double> grads(10, 6);
  m.backward(trace, {0.0, 0.0, 0.0}, grads, dx);
  for (auto t : grads.tensors()) {
    for (double v : t) EXPECT_EQ(v, 0.0);
  }
  for (double v : dx) EXPECT_EQ(v, 0.0);
}

TEST(Decoder, LinearNetworkGradientMatchesClosedForm) {
  // y = W3^T (W2^T (W1^T x + b1) + b2) + b3 with [fan_in][fan_out] storage, so
  // dL/dx = W1 W2 W3 up and dL/dW1[i][j] = x_i (W2 W3 up)_j.
  Rng rng(8);
  const int in = 5, hid = 4;
  auto m = random_mlp(rng, in, hid, Activation::kIdentity);
  std::vector<double> x(in);
  for (auto& v : x) v = uniform(rng, -1, 1);
  const std::array<double, 3> up{0.3, -0.7, 1.1};
  MlpTrace<double> trace;
  m.forward(x, trace, true);
  DecoderMLP<double> grads(in, hid, Activation::kIdentity);
  std::vector<double> dx(in);
  m.backward(trace, up, grads, dx);

  std::vector<double> d2(hid, 0.0), d1(hid, 0.0), want_dx(in, 0.0);
  for (int j = 0; j < hid; ++j) {
    for (int o = 0; o < 3; ++o) d2[j] += m.w3[j * 3 + o] * up[o];
  }
  for (int i = 0; i < hid; ++i) {
    for (int j = 0; j < hid; ++j) d1[i] += m.w2[i * hid + j] * d2[j];
  }
  for (int i = 0; i < in; ++i) {
    for (int j = 0; j < hid; ++j) want_dx[i] += m.w1[i * hid + j] * d1[j];
  }
  for (int i = 0; i < in; ++i) EXPECT_NEAR(dx[i], want_dx[i], 1e-12);
  for (int i = 0; i < in; ++i) {
    for (int j = 0; j < hid; ++j) EXPECT_NEAR(grads.w1[i * hid + j], x[i] * d1[j], 1e-12);
  }
  for (int j = 0; j < hid; ++j) EXPECT_NEAR(grads.b2[j], d2[j], 1e-12);
  for (int o = 0; o < 3; ++o) EXPECT_NEAR(grads.b3[o], up[o], 1e-12);
}

TEST(Decoder, BatchedPassesMatchPerSamplePasses) {
  Rng rng(9);
  const auto md = random_mlp(rng, 16, 16, Activation::kGeluTanh);
  const auto m = md.cast<float>();
  const int n = 37;
  MlpBatch<float> batch;
  batch.input.resize(static_cast<std::size_t>(n) * 16);
  for (auto& v : batch.input) v = static_cast<float>(uniform(rng, -1, 1));
  std::vector<float> dout(static_cast<std::size_t>(n) * 3);
  for (auto& v : dout) v = static_cast<float>(uniform(rng, -1, 1));

  m.forward_batch(batch, n, true);
  DecoderMLP<float> gb(16, 16), gs(16, 16);
  std::vector<float> dinb(static_cast<std::size_t>(n) * 16);
  m.backward_batch(batch, dout.data(), gb, dinb.data());

  MlpTrace<float> trace;
  for (int s = 0; s < n; ++s) {
    std::span<const float> x(&batch.input[static_cast<std::size_t>(s) * 16], 16);
    m.forward(x, trace, true);
    for (int o = 0; o < 3; ++o) {
      EXPECT_NEAR(trace.output[o], batch.output[static_cast<std::size_t>(s) * 3 + o], 1e-5);
    }
    std::vector<float> dx(16);
    m.backward(trace, {dout[s * 3], dout[s * 3 + 1], dout[s * 3 + 2]}, gs, dx);
    for (int i = 0; i < 16; ++i) EXPECT_NEAR(dx[i], dinb[static_cast<std::size_t>(s) * 16 + i], 1e-5);
  }
  const auto a = gb.tensors(), b = gs.tensors();
  for (std::size_t t = 0; t < a.size(); ++t) {
    for (std::size_t i = 0; i < a[t].size(); ++i) EXPECT_NEAR(a[t][i], b[t][i], 1e-4);
  }
}
