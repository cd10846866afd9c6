#include "ndgi/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "ndgi/error.hpp"
#include "ndgi/random.hpp"

namespace ndgi {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Smooth band-limited field in [-1, 1] built from a few random plane waves.
class SmoothField {
 public:
  SmoothField(Rng& rng, int waves, double max_cycles) {
    for (int i = 0; i < waves; ++i) {
      Wave w;
      w.fx = uniform(rng, -max_cycles, max_cycles);
      w.fy = uniform(rng, -max_cycles, max_cycles);
      w.phase = uniform(rng, 0.0, kTwoPi);
      w.amp = uniform(rng, 0.5, 1.0);
      norm_ += w.amp;
      waves_.push_back(w);
    }
  }

  double operator()(double u, double v) const {
    double s = 0.0;
    for (const auto& w : waves_) s += w.amp * std::sin(kTwoPi * (w.fx * u + w.fy * v) + w.phase);
    return s / norm_;
  }

 private:
  struct Wave {
    double fx, fy, phase, amp;
  };
  std::vector<Wave> waves_;
  double norm_ = 0.0;
};

double smoothstep01(double x) {
  x = std::clamp(x, 0.0, 1.0);
  return x * x * (3.0 - 2.0 * x);
}

// Signed cyclic distance t - s folded into [-0.5, 0.5).
double cyclic_delta(double t, double s) {
  double d = t - s;
  d -= std::floor(d + 0.5);
  return d;
}

double frac(double x) { return x - std::floor(x); }

std::vector<float> switch_times(const SceneRecipe& recipe) {
  std::vector<float> out;
  if (!recipe.has_switching()) return out;
  for (const auto& l : recipe.lights) {
    out.push_back(l.on_time);
    out.push_back(l.off_time);
  }
  return out;
}

void validate(const SceneRecipe& recipe) {
  if (recipe.base_frames <= 0) throw Error(ErrorCode::kInvalidArgument, "recipe has zero frames");
  if (!(recipe.mask_coverage > 0.0f) || recipe.mask_coverage > 1.0f) {
    throw Error(ErrorCode::kInvalidArgument, "mask coverage must lie in (0, 1]");
  }
  if (!(recipe.normal_tilt >= 0.0f && recipe.normal_tilt <= 1.0f)) {
    throw Error(ErrorCode::kInvalidArgument, "normal tilt must lie in [0, 1]");
  }
  if (recipe.width <= 0 || recipe.height <= 0) {
    throw Error(ErrorCode::kInvalidArgument, "recipe resolution must be positive");
  }
  if (recipe.has_switching()) {
    if (recipe.lights.empty()) {
      throw Error(ErrorCode::kInvalidArgument, "switching scene needs at least one light");
    }
    if (!(recipe.gate_width > 0.0f)) {
      throw Error(ErrorCode::kInvalidArgument, "gate width must be positive");
    }
    for (const auto& l : recipe.lights) {
      for (float s : {l.on_time, l.off_time}) {
        if (!(s >= 0.0f && s < 1.0f)) {
          throw Error(ErrorCode::kInvalidArgument, "switch times must lie in [0, 1)");
        }
      }
    }
  }
}

}  // namespace

const char* to_string(SceneKind kind) {
  switch (kind) {
    case SceneKind::kDiurnal: return "diurnal";
    case SceneKind::kSwitching: return "switching";
    case SceneKind::kMixed: return "mixed";
  }
  return "unknown";
}

SceneKind parse_scene_kind(const std::string& name) {
  if (name == "diurnal") return SceneKind::kDiurnal;
  if (name == "switching") return SceneKind::kSwitching;
  if (name == "mixed") return SceneKind::kMixed;
  throw Error(ErrorCode::kInvalidArgument, "unknown scene kind '" + name + "'");
}

std::vector<float> frame_times(const SceneRecipe& recipe) {
  validate(recipe);
  std::vector<float> times;
  for (int i = 0; i < recipe.base_frames; ++i) {
    times.push_back(static_cast<float>(static_cast<double>(i) / recipe.base_frames));
  }
  const double half = 0.5 * recipe.gate_width;
  for (float s : switch_times(recipe)) {
    times.push_back(static_cast<float>(frac(s - half)));
    times.push_back(static_cast<float>(frac(s + half)));
  }
  std::sort(times.begin(), times.end());
  for (std::size_t i = 1; i < times.size(); ++i) {
    if (!(times[i] > times[i - 1])) {
      throw Error(ErrorCode::kInvalidArgument,
                  "switch extras collide with another frame time near " +
                      std::to_string(times[i]));
    }
  }
  return times;
}

double light_gate(const SceneRecipe& recipe, int light, double t) {
  const auto& l = recipe.lights.at(static_cast<std::size_t>(light));
  const double w = recipe.gate_width;
  const double d_on = cyclic_delta(t, l.on_time);
  if (std::abs(d_on) < 0.5 * w) return smoothstep01((d_on + 0.5 * w) / w);
  const double d_off = cyclic_delta(t, l.off_time);
  if (std::abs(d_off) < 0.5 * w) return 1.0 - smoothstep01((d_off + 0.5 * w) / w);
  const double duration = frac(static_cast<double>(l.off_time) - l.on_time);
  return frac(t - l.on_time) < duration ? 1.0 : 0.0;
}

bool inside_switch_window(const SceneRecipe& recipe, double t) {
  for (float s : switch_times(recipe)) {
    if (std::abs(cyclic_delta(t, s)) <= 0.5 * recipe.gate_width) return true;
  }
  return false;
}

double diurnal_delta_bound(const SceneRecipe& recipe, double dt) {
  // The sun direction rotates at 2*pi per day; the sun tint adds at most 30%
  // on top of the clamped cosine, the sky term scales with 0.85 * sin(elevation).
  return std::abs(dt) * kTwoPi *
         (1.3 * recipe.sun_amplitude + 0.85 * recipe.sky_amplitude);
}

std::vector<LocalLightField> local_light_fields(const SceneRecipe& recipe) {
  validate(recipe);
  std::vector<LocalLightField> out;
  if (!recipe.has_switching()) return out;
  Rng rng(derive_seed(recipe.seed, 7));
  const int w = recipe.width;
  const int h = recipe.height;
  const double scale = std::min(w, h);
  for (std::size_t i = 0; i < recipe.lights.size(); ++i) {
    LocalLightField f;
    const double cx = uniform(rng, 0.15, 0.85) * w;
    const double cy = uniform(rng, 0.15, 0.85) * h;
    const double radius = uniform(rng, 0.08, 0.2) * scale;
    f.amplitude = static_cast<float>(uniform(rng, 1.0, 2.0));
    f.color = {1.0f, static_cast<float>(uniform(rng, 0.6, 0.9)),
               static_cast<float>(uniform(rng, 0.3, 0.6))};
    f.falloff.resize(static_cast<std::size_t>(w) * h);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double dx = (x + 0.5 - cx) / radius;
        const double dy = (y + 0.5 - cy) / radius;
        f.falloff[static_cast<std::size_t>(y) * w + x] =
            static_cast<float>(1.0 / (1.0 + dx * dx + dy * dy));
      }
    }
    out.push_back(std::move(f));
  }
  return out;
}

TemporalLightmapSet generate(const SceneRecipe& recipe) {
  const std::vector<float> times = frame_times(recipe);
  const int w = recipe.width;
  const int h = recipe.height;
  const std::size_t texels = static_cast<std::size_t>(w) * h;

  Rng rng(derive_seed(recipe.seed, 1));
  const SmoothField occlusion_field(rng, 8, 4.0);
  const SmoothField ao_field(rng, 6, 3.0);
  const SmoothField tilt_x(rng, 6, 2.5);
  const SmoothField tilt_y(rng, 6, 2.5);
  const SmoothField mask_field(rng, 10, 5.0);
  const double azimuth = uniform(rng, -0.6, 0.6);

  struct Texel {
    double occlusion, ao, nx, ny, nz, mask;
  };
  std::vector<Texel> fields(texels);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double u = (x + 0.5) / w;
      const double v = (y + 0.5) / h;
      Texel t;
      t.occlusion = 0.25 + 0.75 * (0.5 + 0.5 * occlusion_field(u, v));
      t.ao = 0.5 + 0.5 * (0.5 + 0.5 * ao_field(u, v));
      const double ax = recipe.normal_tilt * tilt_x(u, v);
      const double ay = recipe.normal_tilt * tilt_y(u, v);
      const double inv = 1.0 / std::sqrt(ax * ax + ay * ay + 1.0);
      t.nx = ax * inv;
      t.ny = ay * inv;
      t.nz = inv;
      t.mask = mask_field(u, v);
      fields[static_cast<std::size_t>(y) * w + x] = t;
    }
  }

  std::vector<std::uint8_t> mask(texels, 1);
  if (recipe.mask_coverage < 1.0f) {
    std::vector<double> values(texels);
    for (std::size_t i = 0; i < texels; ++i) values[i] = fields[i].mask;
    const std::size_t keep = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(recipe.mask_coverage * texels)));
    std::vector<double> sorted = values;
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(texels - keep),
                     sorted.end());
    const double threshold = sorted[texels - keep];
    for (std::size_t i = 0; i < texels; ++i) mask[i] = values[i] >= threshold ? 1 : 0;
  }

  const auto lights = local_light_fields(recipe);
  const bool diurnal = recipe.kind != SceneKind::kSwitching;
  const Rgb sky_color{0.55f, 0.7f, 1.0f};

  std::vector<LightmapFrame> frames;
  frames.reserve(times.size());
  for (float t : times) {
    LightmapFrame frame;
    frame.time = t;
    frame.pixels.assign(texels * 3, 0.0f);

    const double elevation = kTwoPi * (t - 0.25);
    const double sin_e = std::sin(elevation);
    const double cos_e = std::cos(elevation);
    const double lx = cos_e * std::cos(azimuth);
    const double ly = cos_e * std::sin(azimuth);
    const double lz = sin_e;
    const double day = std::max(0.0, sin_e);
    const double sun_rgb[3] = {1.0, 0.85 + 0.15 * day, 0.7 + 0.3 * day};
    const double sky_level = diurnal ? 0.15 + 0.85 * day : 0.15;

    std::vector<double> gates(lights.size());
    for (std::size_t l = 0; l < lights.size(); ++l) {
      gates[l] = light_gate(recipe, static_cast<int>(l), t);
    }

    for (std::size_t i = 0; i < texels; ++i) {
      if (!mask[i]) continue;
      const Texel& f = fields[i];
      double rgb[3] = {0.0, 0.0, 0.0};
      const double sky = recipe.sky_amplitude * sky_level * f.ao;
      for (int c = 0; c < 3; ++c) rgb[c] += sky * sky_color[c];
      if (diurnal) {
        const double cosine = std::max(0.0, f.nx * lx + f.ny * ly + f.nz * lz);
        const double sun = recipe.sun_amplitude * cosine * f.occlusion;
        for (int c = 0; c < 3; ++c) rgb[c] += sun * sun_rgb[c];
      }
      for (std::size_t l = 0; l < lights.size(); ++l) {
        if (gates[l] <= 0.0) continue;
        const double e = lights[l].amplitude * lights[l].falloff[i] * gates[l];
        for (int c = 0; c < 3; ++c) rgb[c] += e * lights[l].color[c];
      }
      for (int c = 0; c < 3; ++c) frame.pixels[i * 3 + c] = static_cast<float>(rgb[c]);
    }
    frames.push_back(std::move(frame));
  }
  return TemporalLightmapSet(recipe.name, w, h, std::move(mask), std::move(frames));
}

}  // namespace ndgi
