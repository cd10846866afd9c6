#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ndgi/hybrid.hpp"
#include "ndgi/lightmap.hpp"
#include "ndgi/profiles.hpp"

namespace ndgi {

// ---- 8-bit quantization ----------------------------------------------------

// Per-channel affine dequantization: value = offset + scale * level / 255.
struct QuantParams {
  std::vector<float> scale;
  std::vector<float> offset;

  static QuantParams unit(int channels) {
    return {std::vector<float>(static_cast<std::size_t>(channels), 1.0f),
            std::vector<float>(static_cast<std::size_t>(channels), 0.0f)};
  }
  friend bool operator==(const QuantParams&, const QuantParams&) = default;
};

// level = round(255 * clamp((x - offset) / scale, 0, 1)) on interleaved channels.
std::vector<std::uint8_t> quantize_u8(std::span<const float> values, int channels,
                                      const QuantParams& params);
std::vector<float> dequantize_u8(std::span<const std::uint8_t> levels, int channels,
                                 const QuantParams& params);

inline std::uint8_t quantize_unit(float x) {
  const float c = x < 0.0f ? 0.0f : (x > 1.0f ? 1.0f : x);
  return static_cast<std::uint8_t>(static_cast<int>(c * 255.0f + 0.5f));
}

// ---- 4-channel endpoint block compression ----------------------------------
//
// A block is 16 bytes: bytes 0-3 endpoint e1, bytes 4-7 endpoint e2, bytes
// 8-15 sixteen 4-bit indices in texel raster order (low nibble first).
// Texel value for index i: ((15 - i) * e1 + i * e2 + 7) / 15 per channel.

inline constexpr int kBlockBytes = 16;
using BlockTexels = std::array<std::array<std::uint8_t, 4>, 16>;
using BlockBytes = std::array<std::uint8_t, kBlockBytes>;

BlockBytes encode_block(const BlockTexels& texels);
BlockTexels decode_block(const BlockBytes& block);

// Sum of squared level errors of `texels` against the decoded block.
std::uint32_t block_error(const BlockTexels& texels, const BlockBytes& block);

// Encodes a 2D u8 image with `channels` (multiple of 4) interleaved channels.
// Channel groups become consecutive layers, each a raster of 4x4 blocks.
std::vector<std::uint8_t> bc_encode(std::span<const std::uint8_t> levels, int width, int height,
                                    int channels);
std::vector<std::uint8_t> bc_decode(std::span<const std::uint8_t> payload, int width, int height,
                                    int channels);

inline std::size_t bc_payload_size(int width, int height, int channels) {
  return static_cast<std::size_t>((width + 3) / 4) * static_cast<std::size_t>((height + 3) / 4) *
         kBlockBytes * static_cast<std::size_t>(channels / 4);
}

// ---- compressed tile model -------------------------------------------------

inline constexpr std::uint16_t kModelVersion = 1;

enum class MlpPrecision : std::uint8_t { kF32 = 0, kF16 = 1 };

struct CompressedTileModel {
  ProfileId profile = ProfileId::kM;
  TileDescriptor tile;
  ModelLayout layout;
  std::array<float, 4> noise_alpha{};  // f3d, f_uv, f_ut, f_vt (training record)
  MlpPrecision mlp_precision = MlpPrecision::kF16;
  QuantParams q_f3d, q_uv, q_ut, q_vt;
  std::vector<std::uint8_t> f3d_payload;  // block-compressed, slice-major
  std::vector<std::uint8_t> uv_payload;   // block-compressed
  std::vector<std::uint8_t> ut_payload;   // raw 8-bit levels
  std::vector<std::uint8_t> vt_payload;   // raw 8-bit levels
  std::vector<std::uint8_t> mlp_payload;  // w1 b1 w2 b2 w3 b3, little endian
  NormalizationRecord norm;

  // Feature payloads plus decoder weights, in bits (header and means excluded).
  std::uint64_t payload_bits() const;

  friend bool operator==(const CompressedTileModel&, const CompressedTileModel&) = default;
};

// Quantizes, block-compresses and packs dense maps and decoder weights.
CompressedTileModel compress_model(const HybridFeatureMaps<float>& maps,
                                   const DecoderMLP<float>& mlp, const ModelLayout& layout,
                                   ProfileId profile, const TileDescriptor& tile,
                                   const NormalizationRecord& norm,
                                   const std::array<float, 4>& noise_alpha,
                                   MlpPrecision precision = MlpPrecision::kF16);

// Replaces the feature payloads only (decoder weights untouched).
void compress_features(const HybridFeatureMaps<float>& maps, CompressedTileModel& model);
void store_mlp(const DecoderMLP<float>& mlp, CompressedTileModel& model);

HybridFeatureMaps<float> decode_features(const CompressedTileModel& model);
DecoderMLP<float> decode_mlp(const CompressedTileModel& model);
HybridTileModel<float> decode_model(const CompressedTileModel& model);

std::vector<std::uint8_t> serialize(const CompressedTileModel& model);
// Exactly one tile record; trailing bytes are an error.
CompressedTileModel deserialize(std::span<const std::uint8_t> bytes);

// A multi-tile file is the plain concatenation of tile records.
std::vector<std::uint8_t> serialize_models(std::span<const CompressedTileModel> models);
std::vector<CompressedTileModel> deserialize_models(std::span<const std::uint8_t> bytes);
void save_models(std::span<const CompressedTileModel> models, const std::string& path);
std::vector<CompressedTileModel> load_models(const std::string& path);

// ---- storage arithmetic ----------------------------------------------------

enum class StorageMode {
  kHalf,      // f16 features, f16 decoder
  kQuant8,    // 8-bit features, f16 decoder
  kQuant8BC,  // 8-bit + block-compressed f3d / f_uv, f16 decoder
};

std::uint64_t layout_payload_bits(const ModelLayout& layout, StorageMode mode);

// Bits per source texel per frame.
double bits_per_pixel(std::uint64_t bits, int frames, int width, int height);
double compute_bpp(std::span<const CompressedTileModel> models, int frames, int width,
                   int height);

// Ratio of compressed size to float32 RGB source size.
inline double compression_ratio(double bpp) { return bpp / 96.0; }

}  // namespace ndgi
