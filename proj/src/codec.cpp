#include "ndgi/codec.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "ndgi/bytes.hpp"
#include "ndgi/error.hpp"
#include "ndgi/half.hpp"

namespace ndgi {

// ---- quantization ------------------------------------------------------------

std::vector<std::uint8_t> quantize_u8(std::span<const float> values, int channels,
                                      const QuantParams& params) {
  if (channels <= 0 || values.size() % static_cast<std::size_t>(channels) != 0 ||
      params.scale.size() != static_cast<std::size_t>(channels) ||
      params.offset.size() != static_cast<std::size_t>(channels)) {
    throw Error(ErrorCode::kInvalidArgument, "quantization parameters do not match channels");
  }
  std::vector<std::uint8_t> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::size_t c = i % static_cast<std::size_t>(channels);
    const double scale = params.scale[c];
    const double unit = scale > 0.0 ? (static_cast<double>(values[i]) - params.offset[c]) / scale : 0.0;
    out[i] = static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(unit, 0.0, 1.0)));
  }
  return out;
}

std::vector<float> dequantize_u8(std::span<const std::uint8_t> levels, int channels,
                                 const QuantParams& params) {
  if (channels <= 0 || levels.size() % static_cast<std::size_t>(channels) != 0 ||
      params.scale.size() != static_cast<std::size_t>(channels) ||
      params.offset.size() != static_cast<std::size_t>(channels)) {
    throw Error(ErrorCode::kInvalidArgument, "quantization parameters do not match channels");
  }
  std::vector<float> out(levels.size());
  for (std::size_t i = 0; i < levels.size(); ++i) {
    const std::size_t c = i % static_cast<std::size_t>(channels);
    out[i] = static_cast<float>(params.offset[c] + static_cast<double>(params.scale[c]) * levels[i] / 255.0);
  }
  return out;
}

// ---- block compression ---------------------------------------------------------

namespace {

using Endpoint = std::array<int, 4>;
using Palette = std::array<Endpoint, 16>;

Palette palette(const Endpoint& a, const Endpoint& b) {
  Palette p;
  for (int i = 0; i < 16; ++i) {
    for (int c = 0; c < 4; ++c) p[i][c] = ((15 - i) * a[c] + i * b[c] + 7) / 15;
  }
  return p;
}

int texel_distance(const std::array<std::uint8_t, 4>& t, const Endpoint& e) {
  int d = 0;
  for (int c = 0; c < 4; ++c) {
    const int diff = static_cast<int>(t[c]) - e[c];
    d += diff * diff;
  }
  return d;
}

struct Fit {
  std::uint32_t error = std::numeric_limits<std::uint32_t>::max();
  Endpoint a{}, b{};
  std::array<std::uint8_t, 16> index{};
};

// Nearest palette entries (ties to the smaller index) for endpoints in
// canonical order.
Fit assign(const BlockTexels& px, Endpoint a, Endpoint b) {
  if (b < a) std::swap(a, b);
  const Palette pal = palette(a, b);
  Fit f;
  f.a = a;
  f.b = b;
  f.error = 0;
  for (int p = 0; p < 16; ++p) {
    int best = 0;
    int best_d = texel_distance(px[p], pal[0]);
    for (int i = 1; i < 16 && best_d > 0; ++i) {
      const int d = texel_distance(px[p], pal[i]);
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    f.index[p] = static_cast<std::uint8_t>(best);
    f.error += static_cast<std::uint32_t>(best_d);
  }
  return f;
}

// assign(), then pulls the endpoints onto the extreme palette entries in use
// for as long as that does not increase the error.
Fit fit_endpoints(const BlockTexels& px, Endpoint a, Endpoint b) {
  Fit f = assign(px, a, b);
  for (;;) {
    const Palette pal = palette(f.a, f.b);
    const auto [lo, hi] = std::minmax_element(f.index.begin(), f.index.end());
    if (pal[*lo] == f.a && pal[*hi] == f.b) return f;
    const Fit shrunk = assign(px, pal[*lo], pal[*hi]);
    if (shrunk.error > f.error) return f;
    f = shrunk;
  }
}

Endpoint clamp_endpoint(const std::array<double, 4>& v) {
  Endpoint e;
  for (int c = 0; c < 4; ++c) {
    e[c] = static_cast<int>(std::clamp(std::floor(v[c] + 0.5), 0.0, 255.0));
  }
  return e;
}

Endpoint to_endpoint(const std::array<std::uint8_t, 4>& t) { return {t[0], t[1], t[2], t[3]}; }

// Least-squares endpoints for fixed interpolation weights, rounded channel by
// channel to the integer pair (within +-2 of the real solution) with the
// smallest exact decode error.
bool least_squares(const BlockTexels& px, const Fit& f, Endpoint& a, Endpoint& b) {
  double s00 = 0, s01 = 0, s11 = 0;
  std::array<double, 4> r0{}, r1{};
  for (int p = 0; p < 16; ++p) {
    const double w = f.index[p] / 15.0;
    const double w0 = 1.0 - w;
    s00 += w0 * w0;
    s01 += w0 * w;
    s11 += w * w;
    for (int c = 0; c < 4; ++c) {
      r0[c] += w0 * px[p][c];
      r1[c] += w * px[p][c];
    }
  }
  const double det = s00 * s11 - s01 * s01;
  if (std::abs(det) < 1e-9) return false;
  for (int c = 0; c < 4; ++c) {
    const double ea = (s11 * r0[c] - s01 * r1[c]) / det;
    const double eb = (s00 * r1[c] - s01 * r0[c]) / det;
    const int ca = static_cast<int>(std::clamp(std::floor(ea + 0.5), 0.0, 255.0));
    const int cb = static_cast<int>(std::clamp(std::floor(eb + 0.5), 0.0, 255.0));
    int best_err = std::numeric_limits<int>::max();
    for (int da : {0, -1, 1, -2, 2}) {
      for (int db : {0, -1, 1, -2, 2}) {
        const int va = ca + da, vb = cb + db;
        if (va < 0 || va > 255 || vb < 0 || vb > 255) continue;
        int err = 0;
        for (int p = 0; p < 16; ++p) {
          const int i = f.index[p];
          const int d = static_cast<int>(px[p][c]) - ((15 - i) * va + i * vb + 7) / 15;
          err += d * d;
        }
        if (err < best_err) {
          best_err = err;
          a[c] = va;
          b[c] = vb;
        }
      }
    }
  }
  return true;
}

// Endpoints at the extreme projections onto the principal axis.
void principal_extremes(const BlockTexels& px, Endpoint& a, Endpoint& b) {
  std::array<double, 4> mean{};
  for (const auto& t : px) {
    for (int c = 0; c < 4; ++c) mean[c] += t[c] / 16.0;
  }
  double cov[4][4] = {};
  for (const auto& t : px) {
    double d[4];
    for (int c = 0; c < 4; ++c) d[c] = t[c] - mean[c];
    for (int i = 0; i < 4; ++i) {
      for (int j = 0; j < 4; ++j) cov[i][j] += d[i] * d[j];
    }
  }
  std::array<double, 4> axis{1.0, 1.0, 1.0, 1.0};
  for (int it = 0; it < 16; ++it) {
    std::array<double, 4> next{};
    for (int i = 0; i < 4; ++i) {
      for (int j = 0; j < 4; ++j) next[i] += cov[i][j] * axis[j];
    }
    double norm = 0;
    for (double v : next) norm += v * v;
    norm = std::sqrt(norm);
    if (norm < 1e-12) break;
    for (int i = 0; i < 4; ++i) axis[i] = next[i] / norm;
  }
  double lo = std::numeric_limits<double>::max(), hi = std::numeric_limits<double>::lowest();
  for (const auto& t : px) {
    double proj = 0;
    for (int c = 0; c < 4; ++c) proj += (t[c] - mean[c]) * axis[c];
    lo = std::min(lo, proj);
    hi = std::max(hi, proj);
  }
  std::array<double, 4> pa{}, pb{};
  for (int c = 0; c < 4; ++c) {
    pa[c] = mean[c] + lo * axis[c];
    pb[c] = mean[c] + hi * axis[c];
  }
  a = clamp_endpoint(pa);
  b = clamp_endpoint(pb);
}

BlockBytes pack(const Fit& f) {
  BlockBytes out{};
  for (int c = 0; c < 4; ++c) {
    out[c] = static_cast<std::uint8_t>(f.a[c]);
    out[4 + c] = static_cast<std::uint8_t>(f.b[c]);
  }
  for (int p = 0; p < 16; ++p) {
    out[8 + p / 2] |= static_cast<std::uint8_t>(f.index[p] << ((p & 1) * 4));
  }
  return out;
}

void consider(const BlockTexels& px, const Endpoint& a, const Endpoint& b, Fit& best) {
  Fit f = fit_endpoints(px, a, b);
  if (f.error < best.error) best = f;
}

}  // namespace

namespace {

Fit search_block(const BlockTexels& px) {
  // Farthest texel pair first: exact for any block whose palette extremes are
  // both in use.
  int fa = 0, fb = 0, far = -1;
  for (int i = 0; i < 16; ++i) {
    for (int j = i + 1; j < 16; ++j) {
      const int d = texel_distance(px[i], to_endpoint(px[j]));
      if (d > far) {
        far = d;
        fa = i;
        fb = j;
      }
    }
  }
  Fit best = fit_endpoints(px, to_endpoint(px[fa]), to_endpoint(px[fb]));
  if (best.error == 0) return best;

  // The farthest pair may sit at inner palette positions i < j; extrapolate
  // the endpoints for every such placement.
  for (int i = 0; i < 16 && best.error > 0; ++i) {
    for (int j = i + 1; j < 16 && best.error > 0; ++j) {
      if (i == 0 && j == 15) continue;
      std::array<double, 4> ea, eb;
      for (int c = 0; c < 4; ++c) {
        const double d = (static_cast<double>(px[fb][c]) - px[fa][c]) * 15.0 / (j - i);
        ea[c] = px[fa][c] - d * i / 15.0;
        eb[c] = ea[c] + d;
      }
      // Rounding the extrapolation can miss by a level; refit with its indices.
      const Fit f = fit_endpoints(px, clamp_endpoint(ea), clamp_endpoint(eb));
      if (f.error < best.error) best = f;
      Endpoint ra, rb;
      if (f.error > 0 && least_squares(px, f, ra, rb)) consider(px, ra, rb, best);
    }
  }
  if (best.error == 0) return best;

  Endpoint a, b;
  principal_extremes(px, a, b);
  consider(px, a, b, best);

  for (int round = 0; round < 4; ++round) {
    const std::uint32_t before = best.error;
    if (least_squares(px, best, a, b)) consider(px, a, b, best);
    if (best.error >= before) break;
  }

  // Coordinate descent on single endpoint channels.
  for (int round = 0; round < 64 && best.error > 0; ++round) {
    const Fit start = best;
    for (int which = 0; which < 2; ++which) {
      for (int c = 0; c < 4; ++c) {
        for (int step : {-2, -1, 1, 2}) {
          Endpoint na = start.a, nb = start.b;
          int& v = which == 0 ? na[c] : nb[c];
          v += step;
          if (v < 0 || v > 255) continue;
          consider(px, na, nb, best);
        }
      }
    }
    if (best.error >= start.error) break;
    if (least_squares(px, best, a, b)) consider(px, a, b, best);
  }
  return best;
}

}  // namespace

BlockBytes encode_block(const BlockTexels& px) {
  const Fit first = search_block(px);
  if (first.error == 0) return pack(first);
  // Re-encode what the block decodes to; when that search reproduces the same
  // texels, its answer is a fixed point of the encoder, so re-encoding
  // decoded data gives identical bytes.
  const BlockBytes packed = pack(first);
  const BlockTexels decoded = decode_block(packed);
  const Fit again = search_block(decoded);
  return again.error == 0 ? pack(again) : packed;
}

BlockTexels decode_block(const BlockBytes& block) {
  Endpoint a, b;
  for (int c = 0; c < 4; ++c) {
    a[c] = block[c];
    b[c] = block[4 + c];
  }
  const Palette pal = palette(a, b);
  BlockTexels out;
  for (int p = 0; p < 16; ++p) {
    const int idx = (block[8 + p / 2] >> ((p & 1) * 4)) & 0xf;
    for (int c = 0; c < 4; ++c) out[p][c] = static_cast<std::uint8_t>(pal[idx][c]);
  }
  return out;
}

std::uint32_t block_error(const BlockTexels& texels, const BlockBytes& block) {
  const BlockTexels d = decode_block(block);
  std::uint32_t err = 0;
  for (int p = 0; p < 16; ++p) {
    err += static_cast<std::uint32_t>(texel_distance(texels[p], to_endpoint(d[p])));
  }
  return err;
}

namespace {

void check_bc_shape(int width, int height, int channels) {
  if (width <= 0 || height <= 0 || channels <= 0 || width % 4 != 0 || height % 4 != 0 ||
      channels % 4 != 0) {
    throw Error(ErrorCode::kInvalidArgument,
                "block compression needs positive 4-aligned sizes and a multiple of 4 channels");
  }
}

}  // namespace

std::vector<std::uint8_t> bc_encode(std::span<const std::uint8_t> levels, int width, int height,
                                    int channels) {
  check_bc_shape(width, height, channels);
  if (levels.size() != static_cast<std::size_t>(width) * height * channels) {
    throw Error(ErrorCode::kSizeMismatch, "level buffer does not match image size");
  }
  std::vector<std::uint8_t> out;
  out.reserve(bc_payload_size(width, height, channels));
  const int bw = (width + 3) / 4, bh = (height + 3) / 4;
  for (int layer = 0; layer < channels / 4; ++layer) {
    for (int by = 0; by < bh; ++by) {
      for (int bx = 0; bx < bw; ++bx) {
        BlockTexels px;
        for (int p = 0; p < 16; ++p) {
          const int x = std::min(bx * 4 + (p & 3), width - 1);
          const int y = std::min(by * 4 + (p >> 2), height - 1);
          const std::size_t base =
              (static_cast<std::size_t>(y) * width + x) * channels + layer * 4;
          for (int c = 0; c < 4; ++c) px[p][c] = levels[base + c];
        }
        const BlockBytes block = encode_block(px);
        out.insert(out.end(), block.begin(), block.end());
      }
    }
  }
  return out;
}

std::vector<std::uint8_t> bc_decode(std::span<const std::uint8_t> payload, int width, int height,
                                    int channels) {
  check_bc_shape(width, height, channels);
  if (payload.size() != bc_payload_size(width, height, channels)) {
    throw Error(ErrorCode::kSizeMismatch, "block payload does not match image size");
  }
  std::vector<std::uint8_t> out(static_cast<std::size_t>(width) * height * channels);
  const int bw = (width + 3) / 4, bh = (height + 3) / 4;
  std::size_t offset = 0;
  for (int layer = 0; layer < channels / 4; ++layer) {
    for (int by = 0; by < bh; ++by) {
      for (int bx = 0; bx < bw; ++bx) {
        BlockBytes block;
        std::memcpy(block.data(), payload.data() + offset, kBlockBytes);
        offset += kBlockBytes;
        const BlockTexels px = decode_block(block);
        for (int p = 0; p < 16; ++p) {
          const int x = bx * 4 + (p & 3);
          const int y = by * 4 + (p >> 2);
          if (x >= width || y >= height) continue;
          const std::size_t base =
              (static_cast<std::size_t>(y) * width + x) * channels + layer * 4;
          for (int c = 0; c < 4; ++c) out[base + c] = px[p][c];
        }
      }
    }
  }
  return out;
}

// ---- tile model packing -----------------------------------------------------

namespace {

QuantParams fit_range(std::span<const float> values, int channels) {
  QuantParams q = QuantParams::unit(channels);
  if (values.empty()) return q;
  for (int c = 0; c < channels; ++c) {
    float lo = std::numeric_limits<float>::max(), hi = std::numeric_limits<float>::lowest();
    for (std::size_t i = static_cast<std::size_t>(c); i < values.size();
         i += static_cast<std::size_t>(channels)) {
      lo = std::min(lo, values[i]);
      hi = std::max(hi, values[i]);
    }
    if (!std::isfinite(lo) || !std::isfinite(hi)) {
      throw Error(ErrorCode::kInvalidArgument, "feature map contains non-finite values");
    }
    q.offset[static_cast<std::size_t>(c)] = lo;
    q.scale[static_cast<std::size_t>(c)] = hi - lo > 1e-8f ? hi - lo : 1.0f;
  }
  return q;
}

std::vector<std::uint8_t> compress_bc_map(std::span<const float> values, const GridSpec& g,
                                          QuantParams& q) {
  q = fit_range(values, g.channels);
  const std::vector<std::uint8_t> levels = quantize_u8(values, g.channels, q);
  std::vector<std::uint8_t> out;
  const std::size_t slice = static_cast<std::size_t>(g.width) * g.height * g.channels;
  for (int z = 0; z < g.depth; ++z) {
    const auto part = bc_encode(std::span<const std::uint8_t>(levels).subspan(z * slice, slice),
                                g.width, g.height, g.channels);
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

std::vector<float> decode_bc_map(std::span<const std::uint8_t> payload, const GridSpec& g,
                                 const QuantParams& q) {
  std::vector<std::uint8_t> levels;
  levels.reserve(g.values());
  const std::size_t slice = bc_payload_size(g.width, g.height, g.channels);
  for (int z = 0; z < g.depth; ++z) {
    const auto part = bc_decode(payload.subspan(z * slice, slice), g.width, g.height, g.channels);
    levels.insert(levels.end(), part.begin(), part.end());
  }
  return dequantize_u8(levels, g.channels, q);
}

std::size_t bc_map_bytes(const GridSpec& g) {
  return g.present() ? bc_payload_size(g.width, g.height, g.channels) * g.depth : 0;
}

std::size_t mlp_bytes(const ModelLayout& layout, MlpPrecision p) {
  return layout.mlp_parameters() * (p == MlpPrecision::kF16 ? 2 : 4);
}

}  // namespace

std::uint64_t CompressedTileModel::payload_bits() const {
  return 8ull * (f3d_payload.size() + uv_payload.size() + ut_payload.size() +
                 vt_payload.size() + mlp_payload.size());
}

void compress_features(const HybridFeatureMaps<float>& maps, CompressedTileModel& model) {
  const ModelLayout& l = model.layout;
  model.q_f3d = QuantParams::unit(l.f3d.channels);
  model.q_uv = QuantParams::unit(l.f_uv.channels);
  model.q_ut = QuantParams::unit(l.f_ut.channels);
  model.q_vt = QuantParams::unit(l.f_vt.channels);
  model.f3d_payload.clear();
  model.uv_payload.clear();
  model.ut_payload.clear();
  model.vt_payload.clear();
  if (l.f3d.present()) model.f3d_payload = compress_bc_map(maps.f3d.data, l.f3d, model.q_f3d);
  if (l.f_uv.present()) model.uv_payload = compress_bc_map(maps.f_uv.data, l.f_uv, model.q_uv);
  if (l.f_ut.present()) {
    model.q_ut = fit_range(maps.f_ut.data, l.f_ut.channels);
    model.ut_payload = quantize_u8(maps.f_ut.data, l.f_ut.channels, model.q_ut);
  }
  if (l.f_vt.present()) {
    model.q_vt = fit_range(maps.f_vt.data, l.f_vt.channels);
    model.vt_payload = quantize_u8(maps.f_vt.data, l.f_vt.channels, model.q_vt);
  }
}

void store_mlp(const DecoderMLP<float>& mlp, CompressedTileModel& model) {
  if (mlp.inputs != model.layout.input_width() || mlp.hidden != model.layout.hidden) {
    throw Error(ErrorCode::kWidthMismatch, "decoder shape does not match the layout");
  }
  detail::ByteWriter w;
  for (auto t : mlp.tensors()) {
    for (float v : t) {
      if (model.mlp_precision == MlpPrecision::kF16) {
        w.u16(float_to_half(v));
      } else {
        w.f32(v);
      }
    }
  }
  model.mlp_payload = w.take();
}

CompressedTileModel compress_model(const HybridFeatureMaps<float>& maps,
                                   const DecoderMLP<float>& mlp, const ModelLayout& layout,
                                   ProfileId profile, const TileDescriptor& tile,
                                   const NormalizationRecord& norm,
                                   const std::array<float, 4>& noise_alpha,
                                   MlpPrecision precision) {
  layout.validate();
  CompressedTileModel m;
  m.profile = profile;
  m.tile = tile;
  m.layout = layout;
  m.noise_alpha = noise_alpha;
  m.mlp_precision = precision;
  m.norm = norm;
  compress_features(maps, m);
  store_mlp(mlp, m);
  return m;
}

HybridFeatureMaps<float> decode_features(const CompressedTileModel& model) {
  const ModelLayout& l = model.layout;
  HybridFeatureMaps<float> maps(l);
  if (l.f3d.present()) maps.f3d.data = decode_bc_map(model.f3d_payload, l.f3d, model.q_f3d);
  if (l.f_uv.present()) maps.f_uv.data = decode_bc_map(model.uv_payload, l.f_uv, model.q_uv);
  if (l.f_ut.present()) maps.f_ut.data = dequantize_u8(model.ut_payload, l.f_ut.channels, model.q_ut);
  if (l.f_vt.present()) maps.f_vt.data = dequantize_u8(model.vt_payload, l.f_vt.channels, model.q_vt);
  return maps;
}

DecoderMLP<float> decode_mlp(const CompressedTileModel& model) {
  DecoderMLP<float> mlp(model.layout.input_width(), model.layout.hidden, model.layout.activation);
  if (model.mlp_payload.size() != mlp_bytes(model.layout, model.mlp_precision)) {
    throw Error(ErrorCode::kSizeMismatch, "decoder payload has the wrong size");
  }
  detail::ByteReader r(model.mlp_payload, ErrorCode::kCorruptPayload);
  for (auto t : mlp.tensors()) {
    for (float& v : t) v = model.mlp_precision == MlpPrecision::kF16 ? half_to_float(r.u16()) : r.f32();
  }
  return mlp;
}

HybridTileModel<float> decode_model(const CompressedTileModel& model) {
  return {decode_features(model), decode_mlp(model)};
}

// ---- serialization ------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'N', 'D', 'G', 'I'};

void write_grid(detail::ByteWriter& w, const GridSpec& g) {
  w.u32(static_cast<std::uint32_t>(g.width));
  w.u32(static_cast<std::uint32_t>(g.height));
  w.u32(static_cast<std::uint32_t>(g.depth));
  w.u32(static_cast<std::uint32_t>(g.channels));
}

GridSpec read_grid(detail::ByteReader& r) {
  GridSpec g;
  const std::uint32_t v[4] = {r.u32(), r.u32(), r.u32(), r.u32()};
  for (std::uint32_t x : v) {
    if (x > (1u << 16)) throw Error(ErrorCode::kCorruptPayload, "implausible grid dimension");
  }
  g.width = static_cast<int>(v[0]);
  g.height = static_cast<int>(v[1]);
  g.depth = static_cast<int>(v[2]);
  g.channels = static_cast<int>(v[3]);
  return g;
}

void write_quant(detail::ByteWriter& w, const QuantParams& q) {
  for (std::size_t c = 0; c < q.scale.size(); ++c) {
    w.f32(q.scale[c]);
    w.f32(q.offset[c]);
  }
}

QuantParams read_quant(detail::ByteReader& r, int channels) {
  QuantParams q;
  for (int c = 0; c < channels; ++c) {
    const float s = r.f32();
    const float o = r.f32();
    if (!std::isfinite(s) || !std::isfinite(o)) {
      throw Error(ErrorCode::kCorruptPayload, "non-finite quantization parameters");
    }
    q.scale.push_back(s);
    q.offset.push_back(o);
  }
  return q;
}

void write_section(detail::ByteWriter& w, std::span<const std::uint8_t> bytes) {
  w.u64(bytes.size());
  w.bytes(bytes);
}

std::vector<std::uint8_t> read_section(detail::ByteReader& r, std::size_t expected,
                                       const char* what) {
  const std::uint64_t len = r.u64();
  if (len > r.remaining()) {
    throw Error(ErrorCode::kCorruptPayload, std::string(what) + " section is truncated");
  }
  if (len != expected) {
    throw Error(ErrorCode::kSizeMismatch, std::string(what) + " section holds " +
                                              std::to_string(len) + " bytes, expected " +
                                              std::to_string(expected));
  }
  const auto b = r.bytes(static_cast<std::size_t>(len));
  return {b.begin(), b.end()};
}

bool known_profile(std::uint8_t id) {
  return id <= static_cast<std::uint8_t>(ProfileId::kM64) ||
         id == static_cast<std::uint8_t>(ProfileId::kCustom);
}

CompressedTileModel read_model(detail::ByteReader& r) {
  const auto magic = r.bytes(4);
  if (std::memcmp(magic.data(), kMagic, 4) != 0) {
    throw Error(ErrorCode::kVersionMismatch, "not an NDGI model record");
  }
  const std::uint16_t version = r.u16();
  if (version != kModelVersion) {
    throw Error(ErrorCode::kVersionMismatch,
                "unsupported model version " + std::to_string(version));
  }
  CompressedTileModel m;
  const std::uint8_t profile = r.u8();
  if (!known_profile(profile)) throw Error(ErrorCode::kCorruptPayload, "unknown profile id");
  m.profile = static_cast<ProfileId>(profile);
  const std::uint8_t act = r.u8();
  if (act > static_cast<std::uint8_t>(Activation::kIdentity)) {
    throw Error(ErrorCode::kCorruptPayload, "unknown activation");
  }
  m.layout.activation = static_cast<Activation>(act);
  const std::uint8_t precision = r.u8();
  if (precision > 1) throw Error(ErrorCode::kCorruptPayload, "unknown decoder precision");
  m.mlp_precision = static_cast<MlpPrecision>(precision);
  r.u8();  // reserved

  m.tile.tile_x = static_cast<int>(r.u32());
  m.tile.tile_y = static_cast<int>(r.u32());
  m.tile.core_size = static_cast<int>(r.u32());
  m.tile.border = static_cast<int>(r.u32());
  m.tile.parent_width = static_cast<int>(r.u32());
  m.tile.parent_height = static_cast<int>(r.u32());
  if (m.tile.core_size <= 0 || m.tile.border < 0 || m.tile.parent_width <= 0 ||
      m.tile.parent_height <= 0 || m.tile.tile_x < 0 || m.tile.tile_y < 0 ||
      m.tile.tile_x >= m.tile.tiles_x() || m.tile.tile_y >= m.tile.tiles_y()) {
    throw Error(ErrorCode::kCorruptPayload, "invalid tile descriptor");
  }

  m.layout.f3d = read_grid(r);
  m.layout.f_uv = read_grid(r);
  m.layout.f_ut = read_grid(r);
  m.layout.f_vt = read_grid(r);
  m.layout.hidden = static_cast<int>(r.u32());
  if (m.layout.hidden > 4096) throw Error(ErrorCode::kCorruptPayload, "implausible hidden width");
  try {
    m.layout.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::kCorruptPayload, std::string("invalid layout: ") + e.what());
  }
  for (float& a : m.noise_alpha) a = r.f32();
  m.norm.gamma = r.f32();
  if (!(m.norm.gamma > 0.0f) || !std::isfinite(m.norm.gamma)) {
    throw Error(ErrorCode::kCorruptPayload, "invalid gamma");
  }
  m.q_f3d = read_quant(r, m.layout.f3d.channels);
  m.q_uv = read_quant(r, m.layout.f_uv.channels);
  m.q_ut = read_quant(r, m.layout.f_ut.channels);
  m.q_vt = read_quant(r, m.layout.f_vt.channels);

  m.f3d_payload = read_section(r, bc_map_bytes(m.layout.f3d), "f3d");
  m.uv_payload = read_section(r, bc_map_bytes(m.layout.f_uv), "f_uv");
  m.ut_payload = read_section(r, m.layout.f_ut.values(), "f_ut");
  m.vt_payload = read_section(r, m.layout.f_vt.values(), "f_vt");
  m.mlp_payload = read_section(r, mlp_bytes(m.layout, m.mlp_precision), "decoder");

  const std::uint64_t means_len = r.u64();
  if (means_len > r.remaining()) throw Error(ErrorCode::kCorruptPayload, "means section is truncated");
  if (means_len == 0 || means_len % 16 != 0) {
    throw Error(ErrorCode::kSizeMismatch, "means section has the wrong size");
  }
  for (std::uint64_t i = 0; i < means_len / 16; ++i) {
    m.norm.times.push_back(r.f32());
    Rgb mean{r.f32(), r.f32(), r.f32()};
    m.norm.means.push_back(mean);
  }
  return m;
}

void write_model(detail::ByteWriter& w, const CompressedTileModel& m) {
  w.tag(std::string_view(kMagic, 4));
  w.u16(kModelVersion);
  w.u8(static_cast<std::uint8_t>(m.profile));
  w.u8(static_cast<std::uint8_t>(m.layout.activation));
  w.u8(static_cast<std::uint8_t>(m.mlp_precision));
  w.u8(0);
  for (int v : {m.tile.tile_x, m.tile.tile_y, m.tile.core_size, m.tile.border,
                m.tile.parent_width, m.tile.parent_height}) {
    w.u32(static_cast<std::uint32_t>(v));
  }
  write_grid(w, m.layout.f3d);
  write_grid(w, m.layout.f_uv);
  write_grid(w, m.layout.f_ut);
  write_grid(w, m.layout.f_vt);
  w.u32(static_cast<std::uint32_t>(m.layout.hidden));
  for (float a : m.noise_alpha) w.f32(a);
  w.f32(m.norm.gamma);
  write_quant(w, m.q_f3d);
  write_quant(w, m.q_uv);
  write_quant(w, m.q_ut);
  write_quant(w, m.q_vt);
  write_section(w, m.f3d_payload);
  write_section(w, m.uv_payload);
  write_section(w, m.ut_payload);
  write_section(w, m.vt_payload);
  write_section(w, m.mlp_payload);
  w.u64(m.norm.times.size() * 16);
  for (std::size_t i = 0; i < m.norm.times.size(); ++i) {
    w.f32(m.norm.times[i]);
    for (float v : m.norm.means[i]) w.f32(v);
  }
}

}  // namespace

std::vector<std::uint8_t> serialize(const CompressedTileModel& model) {
  if (model.norm.times.size() != model.norm.means.size() || model.norm.times.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "model normalization record is incomplete");
  }
  detail::ByteWriter w;
  write_model(w, model);
  return w.take();
}

CompressedTileModel deserialize(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes, ErrorCode::kCorruptPayload);
  CompressedTileModel m = read_model(r);
  if (!r.done()) throw Error(ErrorCode::kCorruptPayload, "trailing bytes after model record");
  return m;
}

std::vector<std::uint8_t> serialize_models(std::span<const CompressedTileModel> models) {
  std::vector<std::uint8_t> out;
  for (const auto& m : models) {
    const auto rec = serialize(m);
    out.insert(out.end(), rec.begin(), rec.end());
  }
  return out;
}

std::vector<CompressedTileModel> deserialize_models(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes, ErrorCode::kCorruptPayload);
  std::vector<CompressedTileModel> out;
  while (!r.done()) out.push_back(read_model(r));
  if (out.empty()) throw Error(ErrorCode::kCorruptPayload, "model file is empty");
  return out;
}

void save_models(std::span<const CompressedTileModel> models, const std::string& path) {
  detail::write_file(path, serialize_models(models));
}

std::vector<CompressedTileModel> load_models(const std::string& path) {
  return deserialize_models(detail::read_file(path));
}

// ---- storage arithmetic ----------------------------------------------------

std::uint64_t layout_payload_bits(const ModelLayout& layout, StorageMode mode) {
  const std::uint64_t mlp = 16ull * layout.mlp_parameters();
  const std::uint64_t all_values =
      layout.f3d.values() + layout.f_uv.values() + layout.f_ut.values() + layout.f_vt.values();
  switch (mode) {
    case StorageMode::kHalf: return 16ull * all_values + mlp;
    case StorageMode::kQuant8: return 8ull * all_values + mlp;
    case StorageMode::kQuant8BC:
      return 8ull * (bc_map_bytes(layout.f3d) + bc_map_bytes(layout.f_uv) + layout.f_ut.values() +
                     layout.f_vt.values()) +
             mlp;
  }
  return 0;
}

double bits_per_pixel(std::uint64_t bits, int frames, int width, int height) {
  if (frames <= 0 || width <= 0 || height <= 0) {
    throw Error(ErrorCode::kInvalidArgument, "pixel count must be positive");
  }
  return static_cast<double>(bits) /
         (static_cast<double>(frames) * static_cast<double>(width) * height);
}

double compute_bpp(std::span<const CompressedTileModel> models, int frames, int width,
                   int height) {
  std::uint64_t bits = 0;
  for (const auto& m : models) bits += m.payload_bits();
  return bits_per_pixel(bits, frames, width, height);
}

}  // namespace ndgi
