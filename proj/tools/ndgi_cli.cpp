#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "ndgi/ablation.hpp"
#include "ndgi/bytes.hpp"
#include "ndgi/codec.hpp"
#include "ndgi/error.hpp"
#include "ndgi/eval.hpp"
#include "ndgi/lightmap.hpp"
#include "ndgi/parallel.hpp"
#include "ndgi/runtime.hpp"
#include "ndgi/synth.hpp"
#include "ndgi/trainer.hpp"

using namespace ndgi;

namespace {

struct Common {
  std::uint64_t seed = 1;
  int threads = 0;
};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

void write_text(const std::string& path, const std::string& text) {
  detail::write_file(path, std::span<const std::uint8_t>(
                       reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string read_text(const std::string& path) {
  const auto bytes = detail::read_file(path);
  return std::string(bytes.begin(), bytes.end());
}

int frames_of(const std::vector<CompressedTileModel>& models) {
  return static_cast<int>(models.front().norm.times.size());
}

// ---- generate ---------------------------------------------------------------

struct GenerateArgs {
  std::string kind = "diurnal";
  int res = 128;
  int frames = 24;
  float tilt = 0.15f;
  float coverage = 1.0f;
  std::string out;
};

int run_generate(const GenerateArgs& a, const Common& c) {
  SceneRecipe r;
  r.kind = parse_scene_kind(a.kind);
  r.width = r.height = a.res;
  r.base_frames = a.frames;
  r.seed = c.seed;
  r.normal_tilt = a.tilt;
  r.mask_coverage = a.coverage;
  r.name = a.kind;
  const TemporalLightmapSet set = generate(r);
  save_lightmap_set(set, a.out);
  write_scene_config(set, a.out + ".json");
  std::printf("wrote %s: %dx%d, %d frames\n", a.out.c_str(), set.width(), set.height(),
              set.frame_count());
  return 0;
}

// ---- train ------------------------------------------------------------------

struct TrainArgs {
  std::string scene, out, profile = "M", loss_csv;
  int steps = 30000;
  int finetune_steps = 3000;
  int batch = 4096;
  int tile = 128;
  bool no_bc_sim = false;
  bool no_noise = false;
  bool quiet = false;
};

int run_train(const TrainArgs& a, const Common& c) {
  const TemporalLightmapSet set = load_lightmap_set(a.scene);
  const auto tiles = tile_set(set, a.tile, 4);
  TrainConfig cfg = TrainConfig::for_profile(parse_profile(a.profile));
  cfg.steps = a.steps;
  cfg.finetune_steps = a.finetune_steps;
  cfg.batch_size = a.batch;
  cfg.seed = c.seed;
  cfg.bc_simulation = !a.no_bc_sim;
  cfg.quantization_noise = !a.no_noise;
  if (!a.quiet) {
    cfg.on_progress = [](const TrainProgress& p) {
      std::fprintf(stderr, "stage %d step %d loss %.6g\n", p.stage, p.step, p.loss);
    };
  }
  const auto trained = train_tiles(tiles, cfg, c.threads);

  std::vector<CompressedTileModel> models;
  std::ostringstream csv;
  csv << "tile,stage,step,loss\n";
  for (const auto& t : trained) {
    models.push_back(t.model);
    const int id = t.model.tile.tile_id();
    for (std::size_t i = 0; i < t.report.loss.size(); ++i) {
      csv << id << ",0," << i << ',' << t.report.loss[i] << '\n';
    }
    for (std::size_t i = 0; i < t.report.finetune_loss.size(); ++i) {
      csv << id << ",1," << i << ',' << t.report.finetune_loss[i] << '\n';
    }
  }
  save_models(models, a.out);
  if (!a.loss_csv.empty()) write_text(a.loss_csv, csv.str());
  for (const auto& t : trained) {
    std::printf("tile %d: train psnr %.2f dB, %.1f s\n", t.model.tile.tile_id(),
                t.report.train_psnr_db, t.report.seconds);
  }
  std::printf("bpp %.4f\n", compute_bpp(models, set.frame_count(), set.width(), set.height()));
  return 0;
}

// ---- compress ---------------------------------------------------------------

struct CompressArgs {
  std::string model, out;
};

// Storage accounting of a trained model file for each storage mode.
int run_compress(const CompressArgs& a, const Common&) {
  const auto models = load_models(a.model);
  const TileDescriptor& d = models.front().tile;
  const int frames = frames_of(models);
  std::ostringstream csv;
  csv << "mode,bits,bpp,compression_ratio\n";
  const std::pair<const char*, StorageMode> modes[] = {
      {"f16", StorageMode::kHalf}, {"8bit", StorageMode::kQuant8}, {"8bit+bc", StorageMode::kQuant8BC}};
  for (const auto& [name, mode] : modes) {
    std::uint64_t bits = 0;
    for (const auto& m : models) bits += layout_payload_bits(m.layout, mode);
    const double bpp = bits_per_pixel(bits, frames, d.parent_width, d.parent_height);
    csv << name << ',' << bits << ',' << fmt(bpp) << ',' << fmt(compression_ratio(bpp)) << '\n';
  }
  std::uint64_t stored = 0;
  for (const auto& m : models) stored += m.payload_bits();
  const double stored_bpp = bits_per_pixel(stored, frames, d.parent_width, d.parent_height);
  csv << "stored," << stored << ',' << fmt(stored_bpp) << ',' << fmt(compression_ratio(stored_bpp))
      << '\n';
  const std::uint64_t file_bits = detail::read_file(a.model).size() * 8;
  const double file_bpp = bits_per_pixel(file_bits, frames, d.parent_width, d.parent_height);
  csv << "file," << file_bits << ',' << fmt(file_bpp) << ',' << fmt(compression_ratio(file_bpp))
      << '\n';
  if (a.out.empty()) {
    std::cout << csv.str();
  } else {
    write_text(a.out, csv.str());
  }
  return 0;
}

// ---- decode -----------------------------------------------------------------

struct DecodeArgs {
  std::string model, out;
  double time = 0.5;
};

int run_decode(const DecodeArgs& a, const Common& c) {
  if (!(a.time >= 0.0 && a.time <= 1.0)) {
    throw Error(ErrorCode::kOutOfRange, "time must lie in [0, 1]");
  }
  const auto models = load_models(a.model);
  const TileDescriptor& d0 = models.front().tile;
  const int w = d0.parent_width, h = d0.parent_height;
  LightmapFrame frame{static_cast<float>(a.time),
                      std::vector<float>(static_cast<std::size_t>(w) * h * 3, 0.0f)};
  parallel_for(models.size(), resolve_threads(c.threads), [&](std::size_t i) {
    const TileDescriptor& d = models[i].tile;
    if (d.parent_width != w || d.parent_height != h) {
      throw Error(ErrorCode::kDimensionMismatch, "tile models disagree on the parent size");
    }
    const auto rgb = decode_tile_hdr(models[i], a.time);
    const int padded = d.padded_size();
    for (int y = 0; y < d.core_size; ++y) {
      for (int x = 0; x < d.core_size; ++x) {
        const std::size_t src = (static_cast<std::size_t>(y + d.border) * padded + x + d.border) * 3;
        const std::size_t dst =
            (static_cast<std::size_t>(d.tile_y * d.core_size + y) * w + d.tile_x * d.core_size + x) * 3;
        for (int ch = 0; ch < 3; ++ch) frame.pixels[dst + ch] = rgb[src + ch];
      }
    }
  });
  const std::vector<std::uint8_t> mask(static_cast<std::size_t>(w) * h, 1);
  detail::write_file(a.out, encode_lightmap_frames(w, h, mask, std::span(&frame, 1)));
  return 0;
}

// ---- eval -------------------------------------------------------------------

struct EvalArgs {
  std::string ref, model, out, method = "ndgi";
};

int run_eval(const EvalArgs& a, const Common& c) {
  const TemporalLightmapSet ref = load_lightmap_set(a.ref);
  const auto models = load_models(a.model);
  const MetricReport rep = evaluate_model(models, ref, EvalOptions{}, c.threads);
  ReportRow row{ref.name(), a.method, profile_name(models.front().profile), rep.bpp,
                rep.mean_psnr, 1.0 - rep.mean_ssim, rep.exact_match ? "exact" : ""};
  const std::vector<ReportRow> rows{row};
  if (a.out.empty()) {
    std::cout << report_csv(rows);
  } else {
    write_report_csv(rows, a.out);
  }
  std::fprintf(stderr, "psnr %.3f dB, 1-ssim %.5f, bpp %.4f over %d tiles\n", rep.mean_psnr,
               1.0 - rep.mean_ssim, rep.bpp, rep.scored_tiles);
  return 0;
}

// ---- bench ------------------------------------------------------------------

struct BenchArgs {
  std::string model, trace, out, staleness;
  std::vector<double> widths{1.0 / 384, 1.0 / 192, 1.0 / 96, 1.0 / 48, 1.0 / 24};
};

// Trace JSON: {"capacity": 4, "bucket_width": 0.0104,
//              "frames": [{"t": 0.1, "tiles": [0, 1]}, ...]}
struct Trace {
  int capacity = 0;
  double bucket_width = 1.0 / 96.0;
  std::vector<std::pair<double, std::vector<int>>> frames;
};

Trace parse_trace(const std::string& text) {
  Trace tr;
  try {
    const auto j = nlohmann::json::parse(text);
    tr.capacity = j.at("capacity").get<int>();
    tr.bucket_width = j.value("bucket_width", tr.bucket_width);
    for (const auto& f : j.at("frames")) {
      tr.frames.emplace_back(f.at("t").get<double>(), f.at("tiles").get<std::vector<int>>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("trace: ") + e.what());
  }
  return tr;
}

int run_bench(const BenchArgs& a, const Common& c) {
  const auto models = load_models(a.model);
  const Trace tr = parse_trace(read_text(a.trace));

  VirtualTextureCache cache(models, tr.capacity, TimeBucketPolicy{tr.bucket_width}, c.threads);
  std::ostringstream csv;
  csv << "frame,t,requested,hits,misses,decodes,evictions\n";
  for (std::size_t i = 0; i < tr.frames.size(); ++i) {
    const auto& [t, tiles] = tr.frames[i];
    const FrameStats s = cache.update_frame(tiles, t);
    csv << i << ',' << fmt(t) << ',' << s.requested << ',' << s.hits << ',' << s.misses << ','
        << s.decodes << ',' << s.evictions << '\n';
  }
  if (a.out.empty()) {
    std::cout << csv.str();
  } else {
    write_text(a.out, csv.str());
  }

  if (!a.staleness.empty()) {
    // Error of serving bucket-center decodes instead of exact-time decodes,
    // against the decode count an unbounded cache needs for the same trace.
    std::vector<HybridTileModel<float>> decoded(models.size());
    parallel_for(models.size(), resolve_threads(c.threads),
                 [&](std::size_t i) { decoded[i] = decode_model(models[i]); });
    std::map<int, std::size_t> by_id;
    for (std::size_t i = 0; i < models.size(); ++i) by_id[models[i].tile.tile_id()] = i;
    std::ostringstream st;
    st << "bucket_width,decodes,mean_abs_error,max_abs_error\n";
    for (double w : a.widths) {
      const TimeBucketPolicy policy{w};
      std::map<std::pair<int, int>, bool> seen;
      double sum = 0.0, worst = 0.0;
      std::size_t count = 0;
      for (const auto& [t, tiles] : tr.frames) {
        for (int id : tiles) {
          const auto it = by_id.find(id);
          if (it == by_id.end()) throw Error(ErrorCode::kUnknownTile, "trace names unknown tile");
          const int b = policy.bucket(t);
          seen[{id, b}] = true;
          const double tc = std::clamp(policy.center(b), 0.0, 1.0);
          const auto exact = decode_tile_hdr(decoded[it->second], models[it->second], t);
          const auto stale = decode_tile_hdr(decoded[it->second], models[it->second], tc);
          for (std::size_t k = 0; k < exact.size(); ++k) {
            const double e = std::abs(static_cast<double>(exact[k]) - stale[k]);
            sum += e;
            worst = std::max(worst, e);
          }
          count += exact.size();
        }
      }
      st << fmt(w) << ',' << seen.size() << ',' << fmt(count ? sum / count : 0.0) << ','
         << fmt(worst) << '\n';
    }
    write_text(a.staleness, st.str());
  }
  return 0;
}

// ---- ablate -----------------------------------------------------------------

struct AblateArgs {
  std::string spec, out;
};

int run_ablate(const AblateArgs& a, const Common& c) {
  AblationSpec spec = load_ablation_spec(a.spec);
  if (c.threads != 0) spec.threads = c.threads;
  const auto rows = run_ablation(spec);
  if (a.out.empty()) {
    std::cout << report_csv(rows);
  } else {
    write_report_csv(rows, a.out);
  }
  return 0;
}

// ---- plot -------------------------------------------------------------------

struct PlotArgs {
  std::vector<std::string> inputs;
  std::string out;
};

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

// Rate-distortion SVG (BPP vs PSNR) from report CSVs, one series per method.
int run_plot(const PlotArgs& a, const Common&) {
  std::map<std::string, std::vector<std::pair<double, double>>> series;
  for (const auto& path : a.inputs) {
    std::istringstream in(read_text(path));
    std::string line;
    std::getline(in, line);
    const auto header = split_csv_line(line);
    auto col = [&](const std::string& name) {
      const auto it = std::find(header.begin(), header.end(), name);
      if (it == header.end()) throw Error(ErrorCode::kMalformedHeader, path + ": no column " + name);
      return static_cast<std::size_t>(it - header.begin());
    };
    const std::size_t cm = col("method"), cp = col("profile"), cb = col("bpp"), cq = col("psnr");
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto f = split_csv_line(line);
      const double bpp = std::stod(f.at(cb)), psnr = std::stod(f.at(cq));
      if (!std::isfinite(psnr)) continue;
      series[f.at(cm) + (f.at(cm) == "hybrid" || f.at(cm) == "ndgi" ? "" : " " + f.at(cp))]
          .emplace_back(bpp, psnr);
    }
  }
  if (series.empty()) throw Error(ErrorCode::kInvalidArgument, "no finite rows to plot");
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (auto& [name, pts] : series) {
    std::sort(pts.begin(), pts.end());
    for (const auto& [x, y] : pts) {
      x0 = std::min(x0, x), x1 = std::max(x1, x), y0 = std::min(y0, y), y1 = std::max(y1, y);
    }
  }
  if (x1 - x0 < 1e-9) x0 -= 0.1, x1 += 0.1;
  if (y1 - y0 < 1e-9) y0 -= 1.0, y1 += 1.0;
  const double W = 640, H = 420, L = 60, R = 160, T = 20, B = 50;
  auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };
  const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
      << "\" stroke=\"black\"/>\n<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L
      << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double x = x0 + (x1 - x0) * i / 4, y = y0 + (y1 - y0) * i / 4;
    svg << "<text x=\"" << px(x) << "\" y=\"" << H - B + 16 << "\" text-anchor=\"middle\">"
        << fmt(x).substr(0, 5) << "</text>\n<text x=\"" << L - 6 << "\" y=\"" << py(y) + 4
        << "\" text-anchor=\"end\">" << fmt(y).substr(0, 5) << "</text>\n";
  }
  svg << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12
      << "\" text-anchor=\"middle\">bits per pixel</text>\n<text x=\"14\" y=\"" << (T + H - B) / 2
      << "\" transform=\"rotate(-90 14 " << (T + H - B) / 2
      << ")\" text-anchor=\"middle\">PSNR (dB)</text>\n";
  int k = 0;
  for (const auto& [name, pts] : series) {
    const char* color = colors[k % 6];
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (const auto& [x, y] : pts) svg << px(x) << ',' << py(y) << ' ';
    svg << "\"/>\n";
    for (const auto& [x, y] : pts) {
      svg << "<circle cx=\"" << px(x) << "\" cy=\"" << py(y) << "\" r=\"3\" fill=\"" << color
          << "\"/>\n";
    }
    svg << "<text x=\"" << W - R + 10 << "\" y=\"" << T + 16 * (k + 1) << "\" fill=\"" << color
        << "\">" << name << "</text>\n";
    ++k;
  }
  svg << "</svg>\n";
  write_text(a.out, svg.str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Temporal lightmap compression with neural feature grids"};
  app.require_subcommand(1);
  app.fallthrough();
  Common common;
  app.add_option("--seed", common.seed, "Seed for every stochastic stage")->capture_default_str();
  app.add_option("--threads", common.threads, "Worker threads (0 = all cores; NDGI_THREADS wins)")
      ->capture_default_str();

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Write a synthetic temporal lightmap set");
  g->add_option("--kind", gen.kind, "diurnal | switching | mixed")->capture_default_str();
  g->add_option("--res", gen.res, "Square resolution")->capture_default_str();
  g->add_option("--frames", gen.frames, "Evenly spaced base frames")->capture_default_str();
  g->add_option("--tilt", gen.tilt, "Normal perturbation amplitude")->capture_default_str();
  g->add_option("--coverage", gen.coverage, "Fraction of valid texels")->capture_default_str();
  g->add_option("--out", gen.out, "Output .nlm")->required();

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train and compress tile models");
  t->add_option("--scene", tr.scene, "Input .nlm")->required()->check(CLI::ExistingFile);
  t->add_option("--profile", tr.profile, "L | M | H | M64")->capture_default_str();
  t->add_option("--out", tr.out, "Output .ndgi")->required();
  t->add_option("--steps", tr.steps, "Feature + decoder steps")->capture_default_str();
  t->add_option("--finetune-steps", tr.finetune_steps, "Decoder fine-tuning steps")
      ->capture_default_str();
  t->add_option("--batch", tr.batch, "Samples per step")->capture_default_str();
  t->add_option("--tile", tr.tile, "Tile core size")->capture_default_str();
  t->add_option("--loss-csv", tr.loss_csv, "Per-step losses as CSV");
  t->add_flag("--no-bc-sim", tr.no_bc_sim, "Train plain grids, block-compress afterwards");
  t->add_flag("--no-noise", tr.no_noise, "Disable quantization noise");
  t->add_flag("--quiet", tr.quiet, "No progress lines on stderr");

  CompressArgs cp;
  auto* c = app.add_subcommand("compress", "Storage report of a model file");
  c->add_option("--model", cp.model, "Input .ndgi")->required()->check(CLI::ExistingFile);
  c->add_option("--out", cp.out, "CSV output (stdout when omitted)");

  DecodeArgs dc;
  auto* d = app.add_subcommand("decode", "Decode the lightmap at one time");
  d->add_option("--model", dc.model, "Input .ndgi")->required()->check(CLI::ExistingFile);
  d->add_option("--time", dc.time, "Normalized time in [0, 1]")->capture_default_str();
  d->add_option("--out", dc.out, "Output .nlm")->required();

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Score a model against a reference set");
  e->add_option("--ref", ev.ref, "Reference .nlm")->required()->check(CLI::ExistingFile);
  e->add_option("--model", ev.model, "Model .ndgi")->required()->check(CLI::ExistingFile);
  e->add_option("--out", ev.out, "CSV report (stdout when omitted)");
  e->add_option("--method", ev.method, "Method column")->capture_default_str();

  BenchArgs bn;
  auto* b = app.add_subcommand("bench", "Replay a tile request trace through the cache");
  b->add_option("--model", bn.model, "Model .ndgi")->required()->check(CLI::ExistingFile);
  b->add_option("--trace", bn.trace, "Trace JSON")->required()->check(CLI::ExistingFile);
  b->add_option("--out", bn.out, "Per-frame CSV (stdout when omitted)");
  b->add_option("--staleness", bn.staleness, "Staleness-vs-bucket-width CSV");
  b->add_option("--widths", bn.widths, "Bucket widths for --staleness")->delimiter(',');

  AblateArgs ab;
  auto* a = app.add_subcommand("ablate", "Run an ablation spec");
  a->add_option("--spec", ab.spec, "Spec JSON")->required()->check(CLI::ExistingFile);
  a->add_option("--out", ab.out, "CSV report (stdout when omitted)");

  PlotArgs pl;
  auto* p = app.add_subcommand("plot", "Rate-distortion SVG from report CSVs");
  p->add_option("inputs", pl.inputs, "Report CSVs")->required()->check(CLI::ExistingFile);
  p->add_option("--out", pl.out, "Output .svg")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*g) return run_generate(gen, common);
    if (*t) return run_train(tr, common);
    if (*c) return run_compress(cp, common);
    if (*d) return run_decode(dc, common);
    if (*e) return run_eval(ev, common);
    if (*b) return run_bench(bn, common);
    if (*a) return run_ablate(ab, common);
    if (*p) return run_plot(pl, common);
  } catch (const Error& err) {
    std::fprintf(stderr, "ndgi: %s: %s\n", to_string(err.code()), err.what());
    return 1;
  } catch (const std::exception& err) {
    std::fprintf(stderr, "ndgi: %s\n", err.what());
    return 1;
  }
  return 2;
}
