#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace ndgi {

using Rgb = std::array<float, 3>;

struct LightmapFrame {
  float time = 0.0f;           // normalized day fraction in [0, 1)
  std::vector<float> pixels;   // height * width * 3, row-major, RGB interleaved
};

// An ordered set of HDR lightmaps baked at increasing times, sharing one
// validity mask. The constructor enforces the container invariants.
class TemporalLightmapSet {
 public:
  TemporalLightmapSet() = default;
  TemporalLightmapSet(std::string name, int width, int height,
                      std::vector<std::uint8_t> mask,
                      std::vector<LightmapFrame> frames);

  const std::string& name() const { return name_; }
  int width() const { return width_; }
  int height() const { return height_; }
  int frame_count() const { return static_cast<int>(frames_.size()); }
  std::size_t texel_count() const {
    return static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_);
  }

  float time(int frame) const { return frames_[frame].time; }
  std::vector<float> times() const;
  std::span<const float> pixels(int frame) const { return frames_[frame].pixels; }
  const std::vector<LightmapFrame>& frames() const { return frames_; }
  const std::vector<std::uint8_t>& mask() const { return mask_; }

  bool valid(int x, int y) const { return mask_[index(x, y)] != 0; }
  std::size_t valid_count() const;
  float at(int frame, int x, int y, int c) const {
    return frames_[frame].pixels[index(x, y) * 3 + static_cast<std::size_t>(c)];
  }
  Rgb texel(int frame, int x, int y) const {
    const float* p = &frames_[frame].pixels[index(x, y) * 3];
    return {p[0], p[1], p[2]};
  }

  friend bool operator==(const TemporalLightmapSet& a, const TemporalLightmapSet& b);

 private:
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(x);
  }

  std::string name_;
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> mask_;
  std::vector<LightmapFrame> frames_;
};

struct TileDescriptor {
  int tile_x = 0;
  int tile_y = 0;
  int core_size = 128;
  int border = 4;
  int parent_width = 0;
  int parent_height = 0;

  int padded_size() const { return core_size + 2 * border; }
  int tiles_x() const { return parent_width / core_size; }
  int tiles_y() const { return parent_height / core_size; }
  int tile_id() const { return tile_y * tiles_x() + tile_x; }

  friend bool operator==(const TileDescriptor&, const TileDescriptor&) = default;
};

struct LightmapTile {
  TileDescriptor descriptor;
  TemporalLightmapSet data;  // padded extent, mirrored at the parent boundary
};

struct NormalizationRecord {
  std::vector<float> times;
  std::vector<Rgb> means;  // per frame, per channel; each >= kMinMean
  float gamma = 2.2f;

  static constexpr float kMinMean = 1e-6f;

  friend bool operator==(const NormalizationRecord&, const NormalizationRecord&) = default;
};

// NLM container I/O.
std::vector<std::uint8_t> encode_lightmap_set(const TemporalLightmapSet& set);
// Raw writer for any frame count (a single decoded frame, for instance);
// such files do not load back as a TemporalLightmapSet when n < 2.
std::vector<std::uint8_t> encode_lightmap_frames(int width, int height,
                                                 std::span<const std::uint8_t> mask,
                                                 std::span<const LightmapFrame> frames);
TemporalLightmapSet decode_lightmap_set(std::span<const std::uint8_t> bytes,
                                        std::string name = "scene");
TemporalLightmapSet load_lightmap_set(const std::string& path);
void save_lightmap_set(const TemporalLightmapSet& set, const std::string& path);

// Sidecar scene description (resolution and frame-time table) as JSON text.
std::string scene_config_json(const TemporalLightmapSet& set);
void write_scene_config(const TemporalLightmapSet& set, const std::string& path);

struct PreprocessResult {
  TemporalLightmapSet set;
  NormalizationRecord record;
};

// Divides every valid texel by its frame/channel mean, then applies the
// inverse gamma. Masked texels are zeroed.
PreprocessResult preprocess(const TemporalLightmapSet& set, float gamma = 2.2f);

// Per-channel mean at time t, linearly interpolated between bracketing frames.
Rgb interpolate_means(const NormalizationRecord& record, double t);

// Inverse of preprocess at time t (which must lie within the record's range).
Rgb postprocess(const Rgb& values, const NormalizationRecord& record, double t);

// Same as postprocess, but t is clamped into the record's time range.
Rgb postprocess_clamped(const Rgb& values, const NormalizationRecord& record, double t);

// Reflect-without-edge-repeat addressing: -1 -> 1, n -> n - 2.
int mirror_index(int i, int n);

std::vector<LightmapTile> tile_set(const TemporalLightmapSet& set, int core_size = 128,
                                   int border = 4);

// Stitches the core regions of a full tiling back into the parent set.
TemporalLightmapSet reassemble(std::span<const LightmapTile> tiles,
                               const std::string& name = "scene");

}  // namespace ndgi
