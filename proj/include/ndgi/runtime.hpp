#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <shared_mutex>
#include <span>
#include <vector>

#include "ndgi/codec.hpp"
#include "ndgi/lightmap.hpp"

namespace ndgi {

struct TimeBucketPolicy {
  double width = 1.0 / 96.0;

  int bucket(double t) const;
  double center(int bucket) const { return (bucket + 0.5) * width; }
};

// One decoded padded tile in the 8-bit 4-channel atlas format: RGB scaled by
// a per-texel multiplier in the fourth channel and a per-tile power-of-two
// scale, value = rgb / 255 * m / 255 * scale.
struct AtlasTile {
  int size = 0;
  float scale = 1.0f;
  std::vector<std::uint8_t> rgbm;  // size * size * 4

  Rgb texel(int x, int y) const;
  // Linear HDR RGB of every texel, row-major.
  std::vector<float> to_rgb() const;

  friend bool operator==(const AtlasTile&, const AtlasTile&) = default;
};

AtlasTile encode_atlas_tile(std::span<const float> rgb, int size);

// Float HDR prediction for every padded texel center at time t.
std::vector<float> decode_tile_hdr(const HybridTileModel<float>& model,
                                   const CompressedTileModel& meta, double t);
std::vector<float> decode_tile_hdr(const CompressedTileModel& model, double t);

// decode_tile_hdr followed by atlas quantization.
AtlasTile decode_tile(const CompressedTileModel& model, double t);

// Bilinear sample of an atlas tile at padded-texel coordinates (texel
// centers at i + 0.5), clamped to the tile.
Rgb sample_atlas(const AtlasTile& tile, double px, double py);

// Uncompressed reference: bilinear in space, linear between bracketing frames.
Rgb baseline_interpolate(const TemporalLightmapSet& set, double u, double v, double t);

struct PageEntry {
  int slot = -1;
  int bucket = 0;
  bool resident() const { return slot >= 0; }
};

struct SlotInfo {
  int tile = -1;
  int bucket = 0;
  std::uint64_t last_use = 0;
};

struct FrameStats {
  int requested = 0;
  int hits = 0;
  int misses = 0;
  int decodes = 0;
  int evictions = 0;
};

// Page table plus a fixed-capacity atlas with strict LRU replacement.
// sample_lighting only reads; update_frame decodes missing tiles in parallel
// and commits them under an exclusive lock, one tile at a time.
class VirtualTextureCache {
 public:
  VirtualTextureCache(std::vector<CompressedTileModel> models, int capacity,
                      TimeBucketPolicy policy = {}, int threads = 0);

  int tile_count() const { return static_cast<int>(models_.size()); }
  int capacity() const { return static_cast<int>(slots_.size()); }
  const TimeBucketPolicy& policy() const { return policy_; }
  const TileDescriptor& descriptor(int tile) const;

  // Tiles among `tile_ids` whose (tile, bucket(t)) is not resident, in request
  // order without duplicates. Does not change residency.
  std::vector<int> request_tiles(std::span<const int> tile_ids, double t) const;

  FrameStats update_frame(std::span<const int> tile_ids, double t);

  // Parent-lightmap coordinates in [0, 1]; throws kNotResident if the owning
  // tile is not resident for bucket(t).
  Rgb sample_lighting(double u, double v, double t) const;

  int tile_at(double u, double v) const;
  PageEntry entry(int tile) const;
  std::vector<SlotInfo> slot_info() const;
  AtlasTile slot_tile(int slot) const;
  std::uint64_t decode_count() const { return decodes_.load(); }
  std::map<std::pair<int, int>, int> decode_counts() const;

 private:
  void check_tile(int tile) const;

  std::vector<CompressedTileModel> models_;
  std::vector<HybridTileModel<float>> decoded_;
  std::vector<int> tile_index_;  // tile id -> model index
  TimeBucketPolicy policy_;
  int threads_ = 1;
  int tiles_x_ = 0, tiles_y_ = 0, core_ = 0, border_ = 0, parent_w_ = 0, parent_h_ = 0;

  mutable std::shared_mutex mutex_;
  std::vector<PageEntry> page_table_;
  std::vector<SlotInfo> slots_;
  std::vector<AtlasTile> atlas_;
  std::uint64_t clock_ = 0;
  std::atomic<std::uint64_t> decodes_{0};
  std::map<std::pair<int, int>, int> decode_counts_;
};

}  // namespace ndgi
