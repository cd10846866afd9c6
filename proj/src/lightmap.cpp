#include "ndgi/lightmap.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <nlohmann/json.hpp>

#include "ndgi/bytes.hpp"
#include "ndgi/error.hpp"

namespace ndgi {
namespace {

constexpr char kNlmMagic[] = "NLM1";

std::string frame_label(int i) { return "frame " + std::to_string(i); }

}  // namespace

TemporalLightmapSet::TemporalLightmapSet(std::string name, int width, int height,
                                         std::vector<std::uint8_t> mask,
                                         std::vector<LightmapFrame> frames)
    : name_(std::move(name)),
      width_(width),
      height_(height),
      mask_(std::move(mask)),
      frames_(std::move(frames)) {
  if (width_ <= 0 || height_ <= 0) {
    throw Error(ErrorCode::kDimensionMismatch, "lightmap dimensions must be positive");
  }
  if (frames_.size() < 2) {
    throw Error(ErrorCode::kInvalidArgument, "a lightmap set needs at least two frames");
  }
  const std::size_t texels = texel_count();
  if (mask_.size() != texels) {
    throw Error(ErrorCode::kDimensionMismatch, "mask size does not match resolution");
  }
  for (auto& m : mask_) m = m ? 1 : 0;
  for (int i = 0; i < frame_count(); ++i) {
    const auto& f = frames_[i];
    if (f.pixels.size() != texels * 3) {
      throw Error(ErrorCode::kDimensionMismatch,
                  frame_label(i) + " has " + std::to_string(f.pixels.size() / 3) +
                      " texels, expected " + std::to_string(texels));
    }
    if (!std::isfinite(f.time) || f.time < 0.0f || f.time >= 1.0f) {
      throw Error(ErrorCode::kOutOfRange, frame_label(i) + " time outside [0, 1)");
    }
    if (i > 0 && !(f.time > frames_[i - 1].time)) {
      throw Error(ErrorCode::kInvalidArgument, "frame times must be strictly increasing");
    }
    for (float v : f.pixels) {
      if (!std::isfinite(v)) {
        throw Error(ErrorCode::kNonFinitePixel, frame_label(i) + " contains a non-finite pixel");
      }
      if (v < 0.0f) {
        throw Error(ErrorCode::kNonFinitePixel, frame_label(i) + " contains a negative pixel");
      }
    }
  }
}

std::vector<float> TemporalLightmapSet::times() const {
  std::vector<float> out;
  out.reserve(frames_.size());
  for (const auto& f : frames_) out.push_back(f.time);
  return out;
}

std::size_t TemporalLightmapSet::valid_count() const {
  return static_cast<std::size_t>(std::count(mask_.begin(), mask_.end(), std::uint8_t{1}));
}

bool operator==(const TemporalLightmapSet& a, const TemporalLightmapSet& b) {
  if (a.width_ != b.width_ || a.height_ != b.height_ || a.mask_ != b.mask_ ||
      a.frames_.size() != b.frames_.size()) {
    return false;
  }
  for (std::size_t i = 0; i < a.frames_.size(); ++i) {
    if (std::bit_cast<std::uint32_t>(a.frames_[i].time) !=
        std::bit_cast<std::uint32_t>(b.frames_[i].time)) {
      return false;
    }
    // Bitwise comparison: round trips must preserve every pixel exactly.
    if (std::memcmp(a.frames_[i].pixels.data(), b.frames_[i].pixels.data(),
                    a.frames_[i].pixels.size() * sizeof(float)) != 0) {
      return false;
    }
  }
  return true;
}

std::vector<std::uint8_t> encode_lightmap_frames(int width, int height,
                                                 std::span<const std::uint8_t> mask,
                                                 std::span<const LightmapFrame> frames) {
  const std::size_t texels = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  if (mask.size() != texels) throw Error(ErrorCode::kDimensionMismatch, "mask size mismatch");
  detail::ByteWriter w;
  w.tag(kNlmMagic);
  w.u32(static_cast<std::uint32_t>(frames.size()));
  w.u32(static_cast<std::uint32_t>(height));
  w.u32(static_cast<std::uint32_t>(width));
  for (const auto& f : frames) w.f32(f.time);
  w.bytes(mask);
  for (const auto& f : frames) {
    if (f.pixels.size() != texels * 3) {
      throw Error(ErrorCode::kDimensionMismatch, "frame size mismatch");
    }
    for (float v : f.pixels) w.f32(v);
  }
  return w.take();
}

std::vector<std::uint8_t> encode_lightmap_set(const TemporalLightmapSet& set) {
  return encode_lightmap_frames(set.width(), set.height(), set.mask(), set.frames());
}

TemporalLightmapSet decode_lightmap_set(std::span<const std::uint8_t> bytes, std::string name) {
  detail::ByteReader r(bytes, ErrorCode::kMalformedHeader);
  if (r.tag(4) != kNlmMagic) {
    throw Error(ErrorCode::kMalformedHeader, "not an NLM1 file");
  }
  const std::uint32_t n = r.u32();
  const std::uint32_t h = r.u32();
  const std::uint32_t w = r.u32();
  if (n < 2 || h == 0 || w == 0 || h > 65536 || w > 65536) {
    throw Error(ErrorCode::kMalformedHeader, "implausible NLM header");
  }
  const std::size_t texels = static_cast<std::size_t>(h) * w;
  const std::size_t expected = 16 + 4ull * n + texels + 12ull * texels * n;
  if (bytes.size() != expected) {
    throw Error(ErrorCode::kMalformedHeader,
                "NLM payload is " + std::to_string(bytes.size()) + " bytes, expected " +
                    std::to_string(expected));
  }
  std::vector<LightmapFrame> frames(n);
  for (auto& f : frames) f.time = r.f32();
  auto mask_bytes = r.bytes(texels);
  std::vector<std::uint8_t> mask(mask_bytes.begin(), mask_bytes.end());
  for (auto& f : frames) {
    f.pixels.resize(texels * 3);
    for (auto& v : f.pixels) v = r.f32();
  }
  return TemporalLightmapSet(std::move(name), static_cast<int>(w), static_cast<int>(h),
                             std::move(mask), std::move(frames));
}

TemporalLightmapSet load_lightmap_set(const std::string& path) {
  const auto bytes = detail::read_file(path);
  return decode_lightmap_set(bytes, std::filesystem::path(path).stem().string());
}

void save_lightmap_set(const TemporalLightmapSet& set, const std::string& path) {
  detail::write_file(path, encode_lightmap_set(set));
}

std::string scene_config_json(const TemporalLightmapSet& set) {
  nlohmann::json j;
  j["name"] = set.name();
  j["width"] = set.width();
  j["height"] = set.height();
  j["frames"] = set.frame_count();
  j["times"] = set.times();
  j["valid_texels"] = set.valid_count();
  return j.dump(2);
}

void write_scene_config(const TemporalLightmapSet& set, const std::string& path) {
  const std::string text = scene_config_json(set) + "\n";
  detail::write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()),
                                     text.size()));
}

PreprocessResult preprocess(const TemporalLightmapSet& set, float gamma) {
  if (!(gamma > 0.0f)) throw Error(ErrorCode::kInvalidArgument, "gamma must be positive");
  const std::size_t texels = set.texel_count();
  const auto& mask = set.mask();
  const std::size_t valid = set.valid_count();
  if (valid == 0) throw Error(ErrorCode::kEmptyMask, "frame has zero valid texels");

  NormalizationRecord record;
  record.gamma = gamma;
  std::vector<LightmapFrame> out_frames;
  out_frames.reserve(set.frames().size());
  const double inv_gamma = 1.0 / gamma;
  for (const auto& f : set.frames()) {
    double sum[3] = {0.0, 0.0, 0.0};
    for (std::size_t i = 0; i < texels; ++i) {
      if (!mask[i]) continue;
      for (int c = 0; c < 3; ++c) sum[c] += f.pixels[i * 3 + c];
    }
    Rgb mean;
    for (int c = 0; c < 3; ++c) {
      mean[c] = std::max(static_cast<float>(sum[c] / static_cast<double>(valid)),
                         NormalizationRecord::kMinMean);
    }
    LightmapFrame g;
    g.time = f.time;
    g.pixels.assign(texels * 3, 0.0f);
    for (std::size_t i = 0; i < texels; ++i) {
      if (!mask[i]) continue;
      for (int c = 0; c < 3; ++c) {
        const double x = static_cast<double>(f.pixels[i * 3 + c]) / mean[c];
        g.pixels[i * 3 + c] = static_cast<float>(std::pow(x, inv_gamma));
      }
    }
    record.times.push_back(f.time);
    record.means.push_back(mean);
    out_frames.push_back(std::move(g));
  }
  return {TemporalLightmapSet(set.name(), set.width(), set.height(), set.mask(),
                              std::move(out_frames)),
          std::move(record)};
}

Rgb interpolate_means(const NormalizationRecord& record, double t) {
  const auto& ts = record.times;
  if (ts.empty()) throw Error(ErrorCode::kInvalidArgument, "empty normalization record");
  if (t <= ts.front()) return record.means.front();
  if (t >= ts.back()) return record.means.back();
  const auto it = std::upper_bound(ts.begin(), ts.end(), static_cast<float>(t),
                                   [](float a, float b) { return a < b; });
  std::size_t hi = static_cast<std::size_t>(it - ts.begin());
  // upper_bound on a float-rounded key can land one past an exact hit.
  while (hi > 1 && static_cast<double>(ts[hi - 1]) > t) --hi;
  const std::size_t lo = hi - 1;
  const double span = static_cast<double>(ts[hi]) - ts[lo];
  const double a = (t - ts[lo]) / span;
  Rgb out;
  for (int c = 0; c < 3; ++c) {
    out[c] = static_cast<float>((1.0 - a) * record.means[lo][c] + a * record.means[hi][c]);
  }
  return out;
}

Rgb postprocess(const Rgb& values, const NormalizationRecord& record, double t) {
  if (record.times.empty() || t < record.times.front() || t > record.times.back()) {
    throw Error(ErrorCode::kOutOfRange, "time " + std::to_string(t) +
                                            " outside the normalization record range");
  }
  return postprocess_clamped(values, record, t);
}

Rgb postprocess_clamped(const Rgb& values, const NormalizationRecord& record, double t) {
  const Rgb mean = interpolate_means(record, t);
  Rgb out;
  for (int c = 0; c < 3; ++c) {
    // Decoder outputs may dip below zero; the gamma curve is only defined for x >= 0.
    const double x = std::max(0.0f, values[c]);
    out[c] = static_cast<float>(std::pow(x, static_cast<double>(record.gamma)) * mean[c]);
  }
  return out;
}

int mirror_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  int m = i % period;
  if (m < 0) m += period;
  return m < n ? m : period - m;
}

std::vector<LightmapTile> tile_set(const TemporalLightmapSet& set, int core_size, int border) {
  if (core_size <= 0 || border < 0) {
    throw Error(ErrorCode::kInvalidArgument, "tile core must be positive and border >= 0");
  }
  if (set.width() % core_size != 0 || set.height() % core_size != 0) {
    throw Error(ErrorCode::kNotDivisible,
                std::to_string(set.width()) + "x" + std::to_string(set.height()) +
                    " is not divisible by tile core " + std::to_string(core_size));
  }
  const int tiles_x = set.width() / core_size;
  const int tiles_y = set.height() / core_size;
  const int padded = core_size + 2 * border;
  const std::size_t ptexels = static_cast<std::size_t>(padded) * padded;

  std::vector<LightmapTile> tiles;
  tiles.reserve(static_cast<std::size_t>(tiles_x) * tiles_y);
  for (int ty = 0; ty < tiles_y; ++ty) {
    for (int tx = 0; tx < tiles_x; ++tx) {
      TileDescriptor d{tx, ty, core_size, border, set.width(), set.height()};
      std::vector<int> src_x(padded), src_y(padded);
      for (int k = 0; k < padded; ++k) {
        src_x[k] = mirror_index(tx * core_size - border + k, set.width());
        src_y[k] = mirror_index(ty * core_size - border + k, set.height());
      }
      std::vector<std::uint8_t> mask(ptexels);
      for (int y = 0; y < padded; ++y) {
        for (int x = 0; x < padded; ++x) {
          mask[static_cast<std::size_t>(y) * padded + x] = set.valid(src_x[x], src_y[y]) ? 1 : 0;
        }
      }
      std::vector<LightmapFrame> frames;
      frames.reserve(set.frames().size());
      for (int f = 0; f < set.frame_count(); ++f) {
        LightmapFrame out;
        out.time = set.time(f);
        out.pixels.resize(ptexels * 3);
        for (int y = 0; y < padded; ++y) {
          for (int x = 0; x < padded; ++x) {
            const Rgb v = set.texel(f, src_x[x], src_y[y]);
            float* dst = &out.pixels[(static_cast<std::size_t>(y) * padded + x) * 3];
            dst[0] = v[0];
            dst[1] = v[1];
            dst[2] = v[2];
          }
        }
        frames.push_back(std::move(out));
      }
      tiles.push_back({d, TemporalLightmapSet(set.name() + "/" + std::to_string(tx) + "_" +
                                                  std::to_string(ty),
                                              padded, padded, std::move(mask),
                                              std::move(frames))});
    }
  }
  return tiles;
}

TemporalLightmapSet reassemble(std::span<const LightmapTile> tiles, const std::string& name) {
  if (tiles.empty()) throw Error(ErrorCode::kInvalidArgument, "no tiles to reassemble");
  const TileDescriptor& d0 = tiles.front().descriptor;
  const int width = d0.parent_width;
  const int height = d0.parent_height;
  const int n = tiles.front().data.frame_count();
  if (tiles.size() != static_cast<std::size_t>(d0.tiles_x()) * d0.tiles_y()) {
    throw Error(ErrorCode::kDimensionMismatch, "tile list does not cover the parent");
  }
  const std::size_t texels = static_cast<std::size_t>(width) * height;
  std::vector<std::uint8_t> mask(texels, 0);
  std::vector<LightmapFrame> frames(n);
  for (int f = 0; f < n; ++f) {
    frames[f].time = tiles.front().data.time(f);
    frames[f].pixels.assign(texels * 3, 0.0f);
  }
  for (const auto& tile : tiles) {
    const auto& d = tile.descriptor;
    if (d.core_size != d0.core_size || d.border != d0.border ||
        tile.data.frame_count() != n) {
      throw Error(ErrorCode::kDimensionMismatch, "inconsistent tiles");
    }
    for (int y = 0; y < d.core_size; ++y) {
      for (int x = 0; x < d.core_size; ++x) {
        const int px = x + d.border;
        const int py = y + d.border;
        const std::size_t dst = static_cast<std::size_t>(d.tile_y * d.core_size + y) * width +
                                static_cast<std::size_t>(d.tile_x * d.core_size + x);
        mask[dst] = tile.data.valid(px, py) ? 1 : 0;
        for (int f = 0; f < n; ++f) {
          const Rgb v = tile.data.texel(f, px, py);
          for (int c = 0; c < 3; ++c) frames[f].pixels[dst * 3 + c] = v[c];
        }
      }
    }
  }
  return TemporalLightmapSet(name, width, height, std::move(mask), std::move(frames));
}

}  // namespace ndgi
