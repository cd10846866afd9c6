#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ndgi/lightmap.hpp"

namespace ndgi {

enum class SceneKind { kDiurnal, kSwitching, kMixed };

const char* to_string(SceneKind kind);
SceneKind parse_scene_kind(const std::string& name);

// A local light that is on over the cyclic interval [on_time, off_time).
struct LightSchedule {
  float on_time = 0.771f;
  float off_time = 0.229f;
};

struct SceneRecipe {
  SceneKind kind = SceneKind::kDiurnal;
  int width = 128;
  int height = 128;
  int base_frames = 24;                 // evenly spaced at i / base_frames
  std::vector<LightSchedule> lights = {{0.771f, 0.229f}, {0.854f, 0.104f}};
  float gate_width = 1.0f / 48.0f;      // smoothstep width around each switch
  std::uint64_t seed = 1;
  float mask_coverage = 1.0f;           // fraction of valid texels, (0, 1]
  float sun_amplitude = 2.0f;
  float sky_amplitude = 0.4f;
  float normal_tilt = 0.15f;            // amplitude of per-texel normal perturbation
  std::string name = "synthetic";

  bool has_switching() const { return kind != SceneKind::kDiurnal; }
};

// Sorted frame times: the even base grid plus two extras at s +/- gate/2
// around every switch time s (switching and mixed kinds only).
std::vector<float> frame_times(const SceneRecipe& recipe);

TemporalLightmapSet generate(const SceneRecipe& recipe);

// Upper bound on any per-texel, per-channel change of the diurnal terms
// between two frames dt apart.
double diurnal_delta_bound(const SceneRecipe& recipe, double dt);

struct LocalLightField {
  float amplitude = 1.0f;
  Rgb color{1.0f, 1.0f, 1.0f};
  std::vector<float> falloff;  // width * height, in [0, 1]
};

// The static per-light patterns the generator multiplies by the gates.
std::vector<LocalLightField> local_light_fields(const SceneRecipe& recipe);

// Gate value in [0, 1] of light `light` at time t.
double light_gate(const SceneRecipe& recipe, int light, double t);

// True when t lies inside some switch window [s - gate/2, s + gate/2].
bool inside_switch_window(const SceneRecipe& recipe, double t);

}  // namespace ndgi
