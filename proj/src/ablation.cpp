#include "ndgi/ablation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "ndgi/bytes.hpp"
#include "ndgi/codec.hpp"
#include "ndgi/error.hpp"
#include "ndgi/parallel.hpp"
#include "ndgi/trainer.hpp"

namespace ndgi {
namespace {

using nlohmann::json;

constexpr int kMaxWidth = 512;
constexpr int kMaxDepth = 64;

std::uint64_t payload_bits(const ModelLayout& layout) {
  return layout_payload_bits(layout, StorageMode::kQuant8BC);
}

double relative_gap(std::uint64_t bits, std::uint64_t target) {
  return std::abs(static_cast<double>(bits) / static_cast<double>(target) - 1.0);
}

// Square BC map of the given channel count; the side is searched over
// multiples of 4 (and the depth over [1, kMaxDepth] for the 3D grid) to land
// as close to `target` as possible. Ties prefer the original depth, then the
// smaller side.
ModelLayout fit_grid(ModelLayout base, GridSpec ModelLayout::*grid, int channels, bool search_depth,
                     std::uint64_t target) {
  const int depth0 = std::max((base.*grid).depth, 1);
  ModelLayout best = base;
  double best_gap = INFINITY;
  int best_depth_dist = 0;
  const int d_lo = search_depth ? 1 : depth0;
  const int d_hi = search_depth ? kMaxDepth : depth0;
  for (int d = d_lo; d <= d_hi; ++d) {
    for (int side = 4; side <= kMaxWidth; side += 4) {
      ModelLayout l = base;
      l.*grid = GridSpec{side, side, d, channels};
      const double gap = relative_gap(payload_bits(l), target);
      const int dist = std::abs(d - depth0);
      if (gap < best_gap - 1e-12 || (std::abs(gap - best_gap) <= 1e-12 && dist < best_depth_dist)) {
        best = l;
        best_gap = gap;
        best_depth_dist = dist;
      }
    }
  }
  return best;
}

int pick_core(const SceneRecipe& r) {
  if (r.width % 128 == 0 && r.height % 128 == 0) return 128;
  return std::gcd(r.width, r.height);
}

std::string layout_key(const VariantPlan& p) {
  std::ostringstream os;
  for (const GridSpec* g : {&p.layout.f3d, &p.layout.f_uv, &p.layout.f_ut, &p.layout.f_vt}) {
    os << g->width << 'x' << g->height << 'x' << g->depth << 'x' << g->channels << ';';
  }
  os << p.layout.hidden << ';' << static_cast<int>(p.layout.activation) << ';' << p.bc_simulation;
  return os.str();
}

std::string format_flag(double target) {
  std::ostringstream os;
  os.precision(4);
  os << "bpp-unmatched(target " << std::fixed << target << ")";
  return os.str();
}

}  // namespace

const char* to_string(AblationVariant v) {
  switch (v) {
    case AblationVariant::kHybrid: return "hybrid";
    case AblationVariant::k2dOnly: return "2d-only";
    case AblationVariant::k3dOnly: return "3d-only";
    case AblationVariant::k8chUv: return "8ch-uv";
    case AblationVariant::kBcSimOn: return "bc-sim-on";
    case AblationVariant::kBcSimOff: return "bc-sim-off";
  }
  return "unknown";
}

AblationVariant parse_ablation_variant(const std::string& name) {
  for (auto v : {AblationVariant::kHybrid, AblationVariant::k2dOnly, AblationVariant::k3dOnly,
                 AblationVariant::k8chUv, AblationVariant::kBcSimOn, AblationVariant::kBcSimOff}) {
    if (name == to_string(v)) return v;
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown ablation variant '" + name + "'");
}

AblationSpec parse_ablation_spec(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("ablation spec: ") + e.what());
  }
  AblationSpec s;
  try {
    if (j.contains("variants")) {
      s.variants.clear();
      for (const auto& v : j.at("variants")) s.variants.push_back(parse_ablation_variant(v));
    }
    if (j.contains("profiles")) {
      s.profiles.clear();
      for (const auto& p : j.at("profiles")) s.profiles.push_back(parse_profile(p));
    }
    s.seed = j.value("seed", s.seed);
    s.steps = j.value("steps", s.steps);
    s.finetune_steps = j.value("finetune_steps", s.finetune_steps);
    s.bpp_tolerance = j.value("bpp_tolerance", s.bpp_tolerance);
    s.threads = j.value("threads", s.threads);
    s.scene.kind = SceneKind::kSwitching;
    if (j.contains("scene")) {
      const json& sc = j.at("scene");
      if (sc.contains("kind")) s.scene.kind = parse_scene_kind(sc.at("kind"));
      s.scene.width = sc.value("width", s.scene.width);
      s.scene.height = sc.value("height", s.scene.height);
      s.scene.base_frames = sc.value("base_frames", s.scene.base_frames);
      s.scene.seed = sc.value("seed", s.scene.seed);
      s.scene.mask_coverage = sc.value("mask_coverage", s.scene.mask_coverage);
      s.scene.normal_tilt = sc.value("normal_tilt", s.scene.normal_tilt);
      s.scene.name = sc.value("name", std::string(to_string(s.scene.kind)));
    } else {
      s.scene.name = to_string(s.scene.kind);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("ablation spec: ") + e.what());
  }
  if (s.variants.empty() || s.profiles.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "ablation spec needs variants and profiles");
  }
  if (s.steps < 0 || s.finetune_steps < 0 || !(s.bpp_tolerance >= 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "ablation spec has negative budgets");
  }
  return s;
}

AblationSpec load_ablation_spec(const std::string& path) {
  const auto bytes = detail::read_file(path);
  return parse_ablation_spec(std::string(bytes.begin(), bytes.end()));
}

std::string ablation_spec_json(const AblationSpec& spec) {
  json j;
  j["variants"] = json::array();
  for (auto v : spec.variants) j["variants"].push_back(to_string(v));
  j["profiles"] = json::array();
  for (auto p : spec.profiles) j["profiles"].push_back(profile_name(p));
  j["seed"] = spec.seed;
  j["steps"] = spec.steps;
  j["finetune_steps"] = spec.finetune_steps;
  j["bpp_tolerance"] = spec.bpp_tolerance;
  j["scene"] = {{"kind", to_string(spec.scene.kind)},
                {"width", spec.scene.width},
                {"height", spec.scene.height},
                {"base_frames", spec.scene.base_frames},
                {"seed", spec.scene.seed},
                {"mask_coverage", spec.scene.mask_coverage},
                {"normal_tilt", spec.scene.normal_tilt},
                {"name", spec.scene.name}};
  return j.dump(2);
}

VariantPlan plan_variant(AblationVariant variant, ProfileId profile_id, double tolerance) {
  const ModelLayout base = profile(profile_id).layout;
  VariantPlan p;
  p.variant = variant;
  p.profile = profile_id;
  p.target_bits = payload_bits(base);
  p.layout = base;
  // Enlarged maps take over the channels of the removed ones, so the decoder
  // input width (and thus the decoder itself) stays the same.
  const int width = base.feature_width();
  switch (variant) {
    case AblationVariant::kHybrid:
    case AblationVariant::kBcSimOn:
      break;
    case AblationVariant::kBcSimOff:
      p.bc_simulation = false;
      break;
    case AblationVariant::k2dOnly: {
      ModelLayout l = base;
      l.f3d = GridSpec{};
      const int ch = width - l.f_ut.channels - l.f_vt.channels;
      p.layout = fit_grid(l, &ModelLayout::f_uv, (ch + 3) / 4 * 4, false, p.target_bits);
      break;
    }
    case AblationVariant::k3dOnly: {
      ModelLayout l = base;
      l.f_uv = l.f_ut = l.f_vt = GridSpec{};
      p.layout = fit_grid(l, &ModelLayout::f3d, (width + 3) / 4 * 4, true, p.target_bits);
      break;
    }
    case AblationVariant::k8chUv: {
      ModelLayout l = base;
      l.f_ut = l.f_vt = GridSpec{};
      p.layout = fit_grid(l, &ModelLayout::f_uv, 8, false, p.target_bits);
      break;
    }
  }
  p.layout.validate();
  p.planned_bits = payload_bits(p.layout);
  p.matched = relative_gap(p.planned_bits, p.target_bits) <= tolerance;
  return p;
}

std::vector<ReportRow> run_ablation(const AblationSpec& spec) {
  SceneRecipe recipe = spec.scene;
  const TemporalLightmapSet scene = generate(recipe);
  const int core = pick_core(recipe);
  const auto tiles = tile_set(scene, core, 4);

  std::vector<VariantPlan> plans;
  for (ProfileId p : spec.profiles) {
    for (AblationVariant v : spec.variants) plans.push_back(plan_variant(v, p, spec.bpp_tolerance));
  }

  std::map<std::string, std::size_t> job_of;
  std::vector<std::size_t> plan_job(plans.size());
  std::vector<const VariantPlan*> jobs;
  for (std::size_t i = 0; i < plans.size(); ++i) {
    const auto [it, fresh] = job_of.emplace(layout_key(plans[i]), jobs.size());
    if (fresh) jobs.push_back(&plans[i]);
    plan_job[i] = it->second;
  }

  const int threads = resolve_threads(spec.threads);
  struct Outcome {
    double bpp = 0.0, psnr = 0.0, ssim = 0.0;
  };
  std::vector<Outcome> outcomes(jobs.size());
  // Jobs share nothing; each one trains its tiles sequentially so that the
  // outer pool owns all the workers.
  const int inner = jobs.size() >= static_cast<std::size_t>(threads) ? 1 : threads;
  parallel_for(jobs.size(), threads, [&](std::size_t j) {
    const VariantPlan& plan = *jobs[j];
    TrainConfig cfg = TrainConfig::for_profile(plan.profile);
    if (!(plan.layout == cfg.layout)) cfg.profile = ProfileId::kCustom;
    cfg.layout = plan.layout;
    cfg.bc_simulation = plan.bc_simulation;
    cfg.steps = spec.steps;
    cfg.finetune_steps = spec.finetune_steps;
    cfg.seed = spec.seed;
    const auto trained = train_tiles(tiles, cfg, inner);
    std::vector<CompressedTileModel> models;
    models.reserve(trained.size());
    for (const auto& t : trained) models.push_back(t.model);
    const MetricReport rep = evaluate_model(models, scene, EvalOptions{}, inner);
    outcomes[j] = {rep.bpp, rep.mean_psnr, rep.mean_ssim};
  });

  std::vector<ReportRow> rows;
  for (std::size_t i = 0; i < plans.size(); ++i) {
    const VariantPlan& plan = plans[i];
    const Outcome& o = outcomes[plan_job[i]];
    std::uint64_t target = 0;
    for (const auto& t : tiles) {
      target += payload_bits(scale_layout(profile(plan.profile).layout, t.descriptor.core_size));
    }
    const double target_bpp =
        bits_per_pixel(target, scene.frame_count(), scene.width(), scene.height());
    ReportRow r;
    r.scene = recipe.name;
    r.method = to_string(plan.variant);
    r.profile = profile_name(plan.profile);
    r.bpp = o.bpp;
    r.psnr = o.psnr;
    r.one_minus_ssim = 1.0 - o.ssim;
    if (std::abs(o.bpp / target_bpp - 1.0) > spec.bpp_tolerance) {
      r.flags = format_flag(target_bpp);
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace ndgi
