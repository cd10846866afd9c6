#pragma once

#include <span>
#include <string>
#include <vector>

#include "ndgi/codec.hpp"
#include "ndgi/lightmap.hpp"

namespace ndgi {

struct EvalOptions {
  int tile_size = 128;
  int ssim_window = 11;
  double ssim_sigma = 1.5;
  double ssim_k1 = 0.01;
  double ssim_k2 = 0.03;
  double min_peak = 1e-6;
};

struct TileScore {
  int frame = 0;
  int tile_x = 0;
  int tile_y = 0;
  std::size_t valid = 0;
  double peak = 0.0;  // valid dynamic range of the reference tile
  double mse = 0.0;
  double psnr = 0.0;  // +inf when mse == 0
  double ssim = 1.0;
  bool exact = false;
};

// Per-tile scores plus scene means. Means run over scored tiles (at least one
// valid texel, not exact); when every scored tile is exact the means are +inf
// PSNR and 1.0 SSIM and exact_match is set.
struct MetricReport {
  std::vector<TileScore> tiles;
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;
  int scored_tiles = 0;
  int exact_tiles = 0;
  bool exact_match = false;
  double bpp = 0.0;
  double compression_ratio = 0.0;
};

// Both metrics for every (frame, tile); the mask comes from `reference`.
MetricReport compare_sets(const TemporalLightmapSet& reference,
                          const TemporalLightmapSet& reconstruction, const EvalOptions& options = {},
                          int threads = 0);

MetricReport psnr_tiled(const TemporalLightmapSet& reference,
                        const TemporalLightmapSet& reconstruction, const EvalOptions& options = {});
MetricReport ssim_tiled(const TemporalLightmapSet& reference,
                        const TemporalLightmapSet& reconstruction, const EvalOptions& options = {});

// Single-image metrics on a rectangular region with a mask (RGB interleaved).
struct ImageView {
  std::span<const float> rgb;
  std::span<const std::uint8_t> mask;
  int width = 0;
  int height = 0;
};
TileScore score_region(const ImageView& reference, const ImageView& reconstruction, int x0, int y0,
                       int w, int h, const EvalOptions& options);

// Float decode of every tile core at every frame time of `reference`,
// stitched into a parent-sized set (mask copied from the reference).
TemporalLightmapSet reconstruct_scene(std::span<const CompressedTileModel> models,
                                      const TemporalLightmapSet& reference, int threads = 0);

MetricReport evaluate_model(std::span<const CompressedTileModel> models,
                            const TemporalLightmapSet& reference, const EvalOptions& options = {},
                            int threads = 0);

struct ReportRow {
  std::string scene;
  std::string method;
  std::string profile;
  double bpp = 0.0;
  double psnr = 0.0;
  double one_minus_ssim = 0.0;
  std::string flags;
};

std::string report_csv(std::span<const ReportRow> rows);
void write_report_csv(std::span<const ReportRow> rows, const std::string& path);

}  // namespace ndgi
