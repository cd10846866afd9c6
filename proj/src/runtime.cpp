#include "ndgi/runtime.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>

#include "ndgi/error.hpp"
#include "ndgi/parallel.hpp"

namespace ndgi {

int TimeBucketPolicy::bucket(double t) const {
  if (!(width > 0.0)) throw Error(ErrorCode::kInvalidArgument, "bucket width must be positive");
  return static_cast<int>(std::floor(t / width));
}

// ---- atlas format ------------------------------------------------------------

Rgb AtlasTile::texel(int x, int y) const {
  const std::uint8_t* p = &rgbm[(static_cast<std::size_t>(y) * size + x) * 4];
  const float m = static_cast<float>(p[3]) / 255.0f * scale;
  return {static_cast<float>(p[0]) / 255.0f * m, static_cast<float>(p[1]) / 255.0f * m,
          static_cast<float>(p[2]) / 255.0f * m};
}

std::vector<float> AtlasTile::to_rgb() const {
  std::vector<float> out(static_cast<std::size_t>(size) * size * 3);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const Rgb v = texel(x, y);
      std::copy(v.begin(), v.end(), &out[(static_cast<std::size_t>(y) * size + x) * 3]);
    }
  }
  return out;
}

AtlasTile encode_atlas_tile(std::span<const float> rgb, int size) {
  if (size <= 0 || rgb.size() != static_cast<std::size_t>(size) * size * 3) {
    throw Error(ErrorCode::kSizeMismatch, "atlas tile buffer does not match its size");
  }
  float peak = 0.0f;
  for (float v : rgb) {
    if (!std::isfinite(v)) throw Error(ErrorCode::kNonFinitePixel, "decoded tile is not finite");
    peak = std::max(peak, v);
  }
  AtlasTile tile;
  tile.size = size;
  tile.scale = peak > 0.0f ? std::exp2(std::ceil(std::log2(peak))) : 1.0f;
  if (peak > tile.scale) tile.scale *= 2.0f;
  tile.rgbm.resize(static_cast<std::size_t>(size) * size * 4);
  for (std::size_t i = 0; i < static_cast<std::size_t>(size) * size; ++i) {
    float c[3];
    for (int k = 0; k < 3; ++k) c[k] = std::max(rgb[i * 3 + k], 0.0f) / tile.scale;
    const float mx = std::max({c[0], c[1], c[2]});
    std::uint8_t* out = &tile.rgbm[i * 4];
    const int m = std::clamp(static_cast<int>(std::ceil(mx * 255.0f)), 0, 255);
    out[3] = static_cast<std::uint8_t>(m);
    for (int k = 0; k < 3; ++k) {
      const float level = m > 0 ? c[k] * 255.0f / (static_cast<float>(m) / 255.0f) : 0.0f;
      out[k] = static_cast<std::uint8_t>(std::clamp(static_cast<int>(level + 0.5f), 0, 255));
    }
  }
  return tile;
}

// ---- tile decode --------------------------------------------------------------

std::vector<float> decode_tile_hdr(const HybridTileModel<float>& model,
                                   const CompressedTileModel& meta, double t) {
  if (!(t >= 0.0 && t < 1.0)) throw Error(ErrorCode::kOutOfRange, "decode time must lie in [0, 1)");
  const int size = meta.tile.padded_size();
  const std::size_t texels = static_cast<std::size_t>(size) * size;
  const std::size_t in = static_cast<std::size_t>(model.mlp.inputs);
  const float tf = static_cast<float>(t);
  constexpr std::size_t kChunk = 64;
  MlpBatch<float> batch;
  batch.input.resize(kChunk * in);
  std::vector<float> out(texels * 3);
  for (std::size_t start = 0; start < texels; start += kChunk) {
    const std::size_t count = std::min(kChunk, texels - start);
    for (std::size_t c = 0; c < count; ++c) {
      const std::size_t i = start + c;
      const float u = (static_cast<float>(i % size) + 0.5f) / static_cast<float>(size);
      const float v = (static_cast<float>(i / size) + 0.5f) / static_cast<float>(size);
      gather_features(model.maps, u, v, tf, std::span<float>(&batch.input[c * in], in));
    }
    model.mlp.forward_batch(batch, static_cast<int>(count), false);
    for (std::size_t c = 0; c < count; ++c) {
      const Rgb normalized{batch.output[c * 3], batch.output[c * 3 + 1], batch.output[c * 3 + 2]};
      const Rgb linear = postprocess_clamped(normalized, meta.norm, t);
      std::copy(linear.begin(), linear.end(), &out[(start + c) * 3]);
    }
  }
  return out;
}

std::vector<float> decode_tile_hdr(const CompressedTileModel& model, double t) {
  return decode_tile_hdr(decode_model(model), model, t);
}

AtlasTile decode_tile(const CompressedTileModel& model, double t) {
  return encode_atlas_tile(decode_tile_hdr(model, t), model.tile.padded_size());
}

Rgb sample_atlas(const AtlasTile& tile, double px, double py) {
  auto tap = [&](double p, int& i0, int& i1, double& w) {
    p = std::clamp(p - 0.5, 0.0, static_cast<double>(tile.size - 1));
    i0 = std::min(static_cast<int>(p), tile.size - 1);
    i1 = std::min(i0 + 1, tile.size - 1);
    w = p - i0;
  };
  int x0, x1, y0, y1;
  double wx, wy;
  tap(px, x0, x1, wx);
  tap(py, y0, y1, wy);
  const Rgb a = tile.texel(x0, y0), b = tile.texel(x1, y0), c = tile.texel(x0, y1),
            d = tile.texel(x1, y1);
  Rgb out;
  for (int k = 0; k < 3; ++k) {
    const double top = (1.0 - wx) * a[k] + wx * b[k];
    const double bottom = (1.0 - wx) * c[k] + wx * d[k];
    out[k] = static_cast<float>((1.0 - wy) * top + wy * bottom);
  }
  return out;
}

Rgb baseline_interpolate(const TemporalLightmapSet& set, double u, double v, double t) {
  const int n = set.frame_count();
  if (n == 0) throw Error(ErrorCode::kInvalidArgument, "empty lightmap set");
  if (!(t >= set.time(0) && t <= set.time(n - 1))) {
    throw Error(ErrorCode::kOutOfRange, "time lies outside the baked frame range");
  }
  int i = 0;
  while (i + 2 < n && set.time(i + 1) <= t) ++i;
  if (n == 1) i = 0;
  const int j = std::min(i + 1, n - 1);
  const double span = set.time(j) - set.time(i);
  const double w = span > 0.0 ? (t - set.time(i)) / span : 0.0;

  auto tap = [](double coord, int size, int& i0, int& i1, double& wt) {
    double p = std::clamp(coord * size - 0.5, 0.0, static_cast<double>(size - 1));
    i0 = std::min(static_cast<int>(p), size - 1);
    i1 = std::min(i0 + 1, size - 1);
    wt = p - i0;
  };
  int x0, x1, y0, y1;
  double wx, wy;
  tap(u, set.width(), x0, x1, wx);
  tap(v, set.height(), y0, y1, wy);
  auto bilinear = [&](int f, int c) {
    const double top = (1.0 - wx) * set.at(f, x0, y0, c) + wx * set.at(f, x1, y0, c);
    const double bottom = (1.0 - wx) * set.at(f, x0, y1, c) + wx * set.at(f, x1, y1, c);
    return (1.0 - wy) * top + wy * bottom;
  };
  Rgb out;
  for (int c = 0; c < 3; ++c) {
    out[c] = static_cast<float>((1.0 - w) * bilinear(i, c) + w * bilinear(j, c));
  }
  return out;
}

// ---- cache ----------------------------------------------------------------------

VirtualTextureCache::VirtualTextureCache(std::vector<CompressedTileModel> models, int capacity,
                                         TimeBucketPolicy policy, int threads)
    : models_(std::move(models)), policy_(policy), threads_(resolve_threads(threads)) {
  if (capacity <= 0) throw Error(ErrorCode::kInvalidArgument, "atlas capacity must be positive");
  if (models_.empty()) throw Error(ErrorCode::kInvalidArgument, "no tile models");
  if (!(policy_.width > 0.0)) throw Error(ErrorCode::kInvalidArgument, "bucket width must be positive");
  const TileDescriptor& d0 = models_.front().tile;
  core_ = d0.core_size;
  border_ = d0.border;
  parent_w_ = d0.parent_width;
  parent_h_ = d0.parent_height;
  tiles_x_ = d0.tiles_x();
  tiles_y_ = d0.tiles_y();
  tile_index_.assign(static_cast<std::size_t>(tiles_x_) * tiles_y_, -1);
  for (std::size_t i = 0; i < models_.size(); ++i) {
    const TileDescriptor& d = models_[i].tile;
    if (d.core_size != core_ || d.border != border_ || d.parent_width != parent_w_ ||
        d.parent_height != parent_h_) {
      throw Error(ErrorCode::kDimensionMismatch, "tile models disagree on the tiling");
    }
    int& slot = tile_index_[static_cast<std::size_t>(d.tile_id())];
    if (slot >= 0) throw Error(ErrorCode::kInvalidArgument, "duplicate tile model");
    slot = static_cast<int>(i);
    decoded_.push_back(decode_model(models_[i]));
  }
  page_table_.assign(tile_index_.size(), PageEntry{});
  slots_.assign(static_cast<std::size_t>(capacity), SlotInfo{});
  atlas_.assign(static_cast<std::size_t>(capacity), AtlasTile{});
}

void VirtualTextureCache::check_tile(int tile) const {
  if (tile < 0 || tile >= static_cast<int>(tile_index_.size()) ||
      tile_index_[static_cast<std::size_t>(tile)] < 0) {
    throw Error(ErrorCode::kUnknownTile, "unknown tile id " + std::to_string(tile));
  }
}

const TileDescriptor& VirtualTextureCache::descriptor(int tile) const {
  check_tile(tile);
  return models_[static_cast<std::size_t>(tile_index_[static_cast<std::size_t>(tile)])].tile;
}

std::vector<int> VirtualTextureCache::request_tiles(std::span<const int> tile_ids, double t) const {
  const int b = policy_.bucket(t);
  std::vector<int> missing;
  std::shared_lock lock(mutex_);
  for (int id : tile_ids) {
    check_tile(id);
    const PageEntry& e = page_table_[static_cast<std::size_t>(id)];
    if (e.resident() && e.bucket == b) continue;
    if (std::find(missing.begin(), missing.end(), id) == missing.end()) missing.push_back(id);
  }
  return missing;
}

FrameStats VirtualTextureCache::update_frame(std::span<const int> tile_ids, double t) {
  const int b = policy_.bucket(t);
  const double decode_time = std::clamp(policy_.center(b), 0.0, std::nextafter(1.0, 0.0));
  FrameStats stats;
  std::vector<int> unique;
  for (int id : tile_ids) {
    check_tile(id);
    if (std::find(unique.begin(), unique.end(), id) == unique.end()) unique.push_back(id);
  }
  stats.requested = static_cast<int>(unique.size());
  const std::vector<int> missing = request_tiles(unique, t);
  stats.misses = static_cast<int>(missing.size());
  stats.hits = stats.requested - stats.misses;

  {
    std::unique_lock lock(mutex_);
    for (int id : unique) {
      if (std::find(missing.begin(), missing.end(), id) != missing.end()) continue;
      slots_[static_cast<std::size_t>(page_table_[static_cast<std::size_t>(id)].slot)].last_use =
          ++clock_;
    }
  }

  std::vector<AtlasTile> decoded(missing.size());
  parallel_for(missing.size(), threads_, [&](std::size_t i) {
    const auto idx = static_cast<std::size_t>(tile_index_[static_cast<std::size_t>(missing[i])]);
    decoded[i] = encode_atlas_tile(decode_tile_hdr(decoded_[idx], models_[idx], decode_time),
                                   models_[idx].tile.padded_size());
  });

  for (std::size_t i = 0; i < missing.size(); ++i) {
    const int id = missing[i];
    std::unique_lock lock(mutex_);
    PageEntry& entry = page_table_[static_cast<std::size_t>(id)];
    int slot = entry.slot;
    if (slot < 0) {
      for (std::size_t s = 0; s < slots_.size(); ++s) {
        if (slots_[s].tile < 0) {
          slot = static_cast<int>(s);
          break;
        }
      }
    }
    if (slot < 0) {
      slot = 0;
      for (std::size_t s = 1; s < slots_.size(); ++s) {
        if (slots_[s].last_use < slots_[static_cast<std::size_t>(slot)].last_use) {
          slot = static_cast<int>(s);
        }
      }
      page_table_[static_cast<std::size_t>(slots_[static_cast<std::size_t>(slot)].tile)].slot = -1;
      ++stats.evictions;
    }
    atlas_[static_cast<std::size_t>(slot)] = std::move(decoded[i]);
    slots_[static_cast<std::size_t>(slot)] = SlotInfo{id, b, ++clock_};
    entry = PageEntry{slot, b};
    ++decode_counts_[{id, b}];
    ++decodes_;
    ++stats.decodes;
  }
  return stats;
}

int VirtualTextureCache::tile_at(double u, double v) const {
  const int tx = std::clamp(static_cast<int>(std::floor(u * parent_w_ / core_)), 0, tiles_x_ - 1);
  const int ty = std::clamp(static_cast<int>(std::floor(v * parent_h_ / core_)), 0, tiles_y_ - 1);
  return ty * tiles_x_ + tx;
}

Rgb VirtualTextureCache::sample_lighting(double u, double v, double t) const {
  const int tile = tile_at(u, v);
  check_tile(tile);
  const int b = policy_.bucket(t);
  const int tx = tile % tiles_x_;
  const int ty = tile / tiles_x_;
  const double px = u * parent_w_ - static_cast<double>(tx) * core_ + border_;
  const double py = v * parent_h_ - static_cast<double>(ty) * core_ + border_;
  std::shared_lock lock(mutex_);
  const PageEntry& e = page_table_[static_cast<std::size_t>(tile)];
  if (!e.resident() || e.bucket != b) {
    throw Error(ErrorCode::kNotResident,
                "tile " + std::to_string(tile) + " is not resident for bucket " + std::to_string(b));
  }
  return sample_atlas(atlas_[static_cast<std::size_t>(e.slot)], px, py);
}

PageEntry VirtualTextureCache::entry(int tile) const {
  check_tile(tile);
  std::shared_lock lock(mutex_);
  return page_table_[static_cast<std::size_t>(tile)];
}

std::vector<SlotInfo> VirtualTextureCache::slot_info() const {
  std::shared_lock lock(mutex_);
  return slots_;
}

AtlasTile VirtualTextureCache::slot_tile(int slot) const {
  std::shared_lock lock(mutex_);
  return atlas_.at(static_cast<std::size_t>(slot));
}

std::map<std::pair<int, int>, int> VirtualTextureCache::decode_counts() const {
  std::shared_lock lock(mutex_);
  return decode_counts_;
}

}  // namespace ndgi
