#include "ndgi/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "ndgi/error.hpp"
#include "ndgi/parallel.hpp"
#include "ndgi/runtime.hpp"

namespace ndgi {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_pair(const TemporalLightmapSet& a, const TemporalLightmapSet& b) {
  if (a.width() != b.width() || a.height() != b.height() || a.frame_count() != b.frame_count()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "reference is " + std::to_string(a.width()) + "x" + std::to_string(a.height()) +
                    "x" + std::to_string(a.frame_count()) + ", reconstruction is " +
                    std::to_string(b.width()) + "x" + std::to_string(b.height()) + "x" +
                    std::to_string(b.frame_count()));
  }
}

std::vector<double> gaussian_kernel(int window, double sigma) {
  if (window <= 0 || window % 2 == 0 || !(sigma > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "SSIM window must be odd and sigma positive");
  }
  const int r = window / 2;
  std::vector<double> k(static_cast<std::size_t>(window));
  for (int i = -r; i <= r; ++i) k[static_cast<std::size_t>(i + r)] = std::exp(-0.5 * i * i / (sigma * sigma));
  return k;
}

// Separable windowed sums of `src` (w x h) truncated at the region border.
std::vector<double> window_sum(const std::vector<double>& src, int w, int h,
                               const std::vector<double>& k) {
  const int r = static_cast<int>(k.size()) / 2;
  std::vector<double> tmp(src.size(), 0.0), out(src.size(), 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int d = -r; d <= r; ++d) {
        const int xx = x + d;
        if (xx < 0 || xx >= w) continue;
        s += k[static_cast<std::size_t>(d + r)] * src[static_cast<std::size_t>(y) * w + xx];
      }
      tmp[static_cast<std::size_t>(y) * w + x] = s;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int d = -r; d <= r; ++d) {
        const int yy = y + d;
        if (yy < 0 || yy >= h) continue;
        s += k[static_cast<std::size_t>(d + r)] * tmp[static_cast<std::size_t>(yy) * w + x];
      }
      out[static_cast<std::size_t>(y) * w + x] = s;
    }
  }
  return out;
}

}  // namespace

TileScore score_region(const ImageView& ref, const ImageView& rec, int x0, int y0, int w, int h,
                       const EvalOptions& options) {
  TileScore score;
  double lo_a = kInf, hi_a = -kInf, lo_b = kInf, hi_b = -kInf, se = 0.0;
  for (int y = y0; y < y0 + h; ++y) {
    for (int x = x0; x < x0 + w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * ref.width + x;
      if (!ref.mask[i]) continue;
      ++score.valid;
      for (int c = 0; c < 3; ++c) {
        const double a = ref.rgb[i * 3 + c], b = rec.rgb[i * 3 + c];
        lo_a = std::min(lo_a, a);
        hi_a = std::max(hi_a, a);
        lo_b = std::min(lo_b, b);
        hi_b = std::max(hi_b, b);
        se += (a - b) * (a - b);
      }
    }
  }
  if (score.valid == 0) return score;
  score.peak = hi_a - lo_a;
  score.mse = se / (3.0 * static_cast<double>(score.valid));
  if (score.mse == 0.0) {
    score.exact = true;
    score.psnr = kInf;
    score.ssim = 1.0;
    return score;
  }
  const double peak = std::max(score.peak, options.min_peak);
  score.psnr = 10.0 * std::log10(peak * peak / score.mse);

  // SSIM with a masked Gaussian window renormalized over valid texels. The
  // dynamic range spans both images so the score is symmetric.
  const double range = std::max(std::max(hi_a, hi_b) - std::min(lo_a, lo_b), options.min_peak);
  const double c1 = std::pow(options.ssim_k1 * range, 2.0);
  const double c2 = std::pow(options.ssim_k2 * range, 2.0);
  const auto kernel = gaussian_kernel(options.ssim_window, options.ssim_sigma);
  const std::size_t n = static_cast<std::size_t>(w) * h;
  std::vector<double> m(n), ma(n), mb(n), maa(n), mbb(n), mab(n);
  double total = 0.0;
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const std::size_t src = static_cast<std::size_t>(y0 + y) * ref.width + (x0 + x);
        const std::size_t dst = static_cast<std::size_t>(y) * w + x;
        const double valid = ref.mask[src] ? 1.0 : 0.0;
        const double a = valid * ref.rgb[src * 3 + c], b = valid * rec.rgb[src * 3 + c];
        m[dst] = valid;
        ma[dst] = a;
        mb[dst] = b;
        maa[dst] = a * a;
        mbb[dst] = b * b;
        mab[dst] = a * b;
      }
    }
    const auto sw = window_sum(m, w, h, kernel), sa = window_sum(ma, w, h, kernel),
               sb = window_sum(mb, w, h, kernel), saa = window_sum(maa, w, h, kernel),
               sbb = window_sum(mbb, w, h, kernel), sab = window_sum(mab, w, h, kernel);
    for (std::size_t i = 0; i < n; ++i) {
      if (m[i] == 0.0) continue;
      const double wsum = sw[i];
      const double mu_a = sa[i] / wsum, mu_b = sb[i] / wsum;
      const double var_a = std::max(saa[i] / wsum - mu_a * mu_a, 0.0);
      const double var_b = std::max(sbb[i] / wsum - mu_b * mu_b, 0.0);
      const double cov = sab[i] / wsum - mu_a * mu_b;
      total += ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)) /
               ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
    }
  }
  score.ssim = total / (3.0 * static_cast<double>(score.valid));
  return score;
}

MetricReport compare_sets(const TemporalLightmapSet& reference,
                          const TemporalLightmapSet& reconstruction, const EvalOptions& options,
                          int threads) {
  check_pair(reference, reconstruction);
  if (options.tile_size <= 0) throw Error(ErrorCode::kInvalidArgument, "tile size must be positive");
  const int t = options.tile_size;
  const int tiles_x = (reference.width() + t - 1) / t;
  const int tiles_y = (reference.height() + t - 1) / t;
  const std::size_t per_frame = static_cast<std::size_t>(tiles_x) * tiles_y;
  MetricReport report;
  report.tiles.resize(per_frame * static_cast<std::size_t>(reference.frame_count()));
  parallel_for(report.tiles.size(), resolve_threads(threads), [&](std::size_t job) {
    const int f = static_cast<int>(job / per_frame);
    const int tile = static_cast<int>(job % per_frame);
    const int tx = tile % tiles_x, ty = tile / tiles_x;
    const ImageView a{reference.pixels(f), reference.mask(), reference.width(), reference.height()};
    const ImageView b{reconstruction.pixels(f), reference.mask(), reference.width(),
                      reference.height()};
    const int x0 = tx * t, y0 = ty * t;
    TileScore s = score_region(a, b, x0, y0, std::min(t, reference.width() - x0),
                               std::min(t, reference.height() - y0), options);
    s.frame = f;
    s.tile_x = tx;
    s.tile_y = ty;
    report.tiles[job] = s;
  });
  double psnr_sum = 0.0, ssim_sum = 0.0;
  for (const auto& s : report.tiles) {
    if (s.valid == 0) continue;
    if (s.exact) {
      ++report.exact_tiles;
      continue;
    }
    ++report.scored_tiles;
    psnr_sum += s.psnr;
    ssim_sum += s.ssim;
  }
  if (report.scored_tiles > 0) {
    report.mean_psnr = psnr_sum / report.scored_tiles;
    report.mean_ssim = ssim_sum / report.scored_tiles;
  } else if (report.exact_tiles > 0) {
    report.mean_psnr = kInf;
    report.mean_ssim = 1.0;
    report.exact_match = true;
  }
  return report;
}

MetricReport psnr_tiled(const TemporalLightmapSet& reference,
                        const TemporalLightmapSet& reconstruction, const EvalOptions& options) {
  return compare_sets(reference, reconstruction, options);
}

MetricReport ssim_tiled(const TemporalLightmapSet& reference,
                        const TemporalLightmapSet& reconstruction, const EvalOptions& options) {
  return compare_sets(reference, reconstruction, options);
}

TemporalLightmapSet reconstruct_scene(std::span<const CompressedTileModel> models,
                                      const TemporalLightmapSet& reference, int threads) {
  if (models.empty()) throw Error(ErrorCode::kMissingTileModel, "no tile models");
  const TileDescriptor& d0 = models.front().tile;
  if (d0.parent_width != reference.width() || d0.parent_height != reference.height()) {
    throw Error(ErrorCode::kDimensionMismatch, "models were trained on a different resolution");
  }
  const int tiles = d0.tiles_x() * d0.tiles_y();
  std::vector<int> index(static_cast<std::size_t>(tiles), -1);
  for (std::size_t i = 0; i < models.size(); ++i) {
    const TileDescriptor& d = models[i].tile;
    if (d.core_size != d0.core_size || d.border != d0.border ||
        d.parent_width != d0.parent_width || d.parent_height != d0.parent_height) {
      throw Error(ErrorCode::kDimensionMismatch, "tile models disagree on the tiling");
    }
    index[static_cast<std::size_t>(d.tile_id())] = static_cast<int>(i);
  }
  for (int id = 0; id < tiles; ++id) {
    if (index[static_cast<std::size_t>(id)] < 0) {
      throw Error(ErrorCode::kMissingTileModel, "no model for tile " + std::to_string(id));
    }
  }
  std::vector<HybridTileModel<float>> decoded(models.size());
  parallel_for(models.size(), resolve_threads(threads),
               [&](std::size_t i) { decoded[i] = decode_model(models[i]); });

  const int n = reference.frame_count();
  const int w = reference.width();
  std::vector<LightmapFrame> frames(static_cast<std::size_t>(n));
  for (int f = 0; f < n; ++f) {
    frames[static_cast<std::size_t>(f)].time = reference.time(f);
    frames[static_cast<std::size_t>(f)].pixels.assign(reference.texel_count() * 3, 0.0f);
  }
  const int core = d0.core_size, border = d0.border, padded = d0.padded_size();
  parallel_for(static_cast<std::size_t>(tiles) * n, resolve_threads(threads), [&](std::size_t job) {
    const int id = static_cast<int>(job % static_cast<std::size_t>(tiles));
    const int f = static_cast<int>(job / static_cast<std::size_t>(tiles));
    const auto mi = static_cast<std::size_t>(index[static_cast<std::size_t>(id)]);
    const TileDescriptor& d = models[mi].tile;
    const auto rgb = decode_tile_hdr(decoded[mi], models[mi], reference.time(f));
    auto& dst = frames[static_cast<std::size_t>(f)].pixels;
    for (int y = 0; y < core; ++y) {
      for (int x = 0; x < core; ++x) {
        const std::size_t s = (static_cast<std::size_t>(y + border) * padded + (x + border)) * 3;
        const std::size_t o =
            (static_cast<std::size_t>(d.tile_y * core + y) * w + (d.tile_x * core + x)) * 3;
        for (int c = 0; c < 3; ++c) dst[o + c] = rgb[s + c];
      }
    }
  });
  for (auto& fr : frames) {
    for (std::size_t i = 0; i < reference.texel_count(); ++i) {
      if (!reference.mask()[i]) {
        for (int c = 0; c < 3; ++c) fr.pixels[i * 3 + c] = 0.0f;
      }
    }
  }
  return TemporalLightmapSet(reference.name(), w, reference.height(), reference.mask(),
                             std::move(frames));
}

MetricReport evaluate_model(std::span<const CompressedTileModel> models,
                            const TemporalLightmapSet& reference, const EvalOptions& options,
                            int threads) {
  const TemporalLightmapSet recon = reconstruct_scene(models, reference, threads);
  MetricReport report = compare_sets(reference, recon, options, threads);
  report.bpp = compute_bpp(models, reference.frame_count(), reference.width(), reference.height());
  report.compression_ratio = compression_ratio(report.bpp);
  return report;
}

namespace {

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string report_csv(std::span<const ReportRow> rows) {
  std::string out = "scene,method,profile,bpp,psnr,one_minus_ssim,flags\n";
  for (const auto& r : rows) {
    out += csv_field(r.scene) + "," + csv_field(r.method) + "," + csv_field(r.profile) + "," +
           format_number(r.bpp) + "," + format_number(r.psnr) + "," +
           format_number(r.one_minus_ssim) + "," + csv_field(r.flags) + "\n";
  }
  return out;
}

void write_report_csv(std::span<const ReportRow> rows, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot open " + path + " for writing");
  out << report_csv(rows);
  if (!out) throw Error(ErrorCode::kIo, "failed writing " + path);
}

}  // namespace ndgi
