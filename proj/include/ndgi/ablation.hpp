#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ndgi/eval.hpp"
#include "ndgi/profiles.hpp"
#include "ndgi/synth.hpp"

namespace ndgi {

enum class AblationVariant {
  kHybrid,    // profile layout as published
  k2dOnly,    // tri-plane without the 3D grid
  k3dOnly,    // 3D grid alone
  k8chUv,     // 3D grid + an 8-channel uv map instead of the time planes
  kBcSimOn,   // profile layout, block-parameterized training
  kBcSimOff,  // profile layout, plain grids compressed after training
};

const char* to_string(AblationVariant v);
AblationVariant parse_ablation_variant(const std::string& name);

struct AblationSpec {
  std::vector<AblationVariant> variants{AblationVariant::kHybrid};
  std::vector<ProfileId> profiles{ProfileId::kM};
  SceneRecipe scene;
  std::uint64_t seed = 1;
  int steps = 30000;
  int finetune_steps = 3000;
  double bpp_tolerance = 0.05;  // relative
  int threads = 0;
};

// JSON form:
// {"variants": ["hybrid", "2d-only"], "profiles": ["M"], "seed": 1,
//  "steps": 30000, "finetune_steps": 3000, "bpp_tolerance": 0.05,
//  "scene": {"kind": "switching", "width": 128, "height": 128, "base_frames": 24,
//            "seed": 1, "mask_coverage": 1.0, "normal_tilt": 0.15, "name": "..."}}
// Missing keys keep their defaults; unknown variant/profile names throw.
AblationSpec parse_ablation_spec(const std::string& json_text);
AblationSpec load_ablation_spec(const std::string& path);
std::string ablation_spec_json(const AblationSpec& spec);

// Layout and training switch of one variant, sized so that its payload
// matches the profile layout within the tolerance when possible.
struct VariantPlan {
  AblationVariant variant = AblationVariant::kHybrid;
  ProfileId profile = ProfileId::kM;
  ModelLayout layout;
  bool bc_simulation = true;
  std::uint64_t target_bits = 0;   // payload of the profile layout
  std::uint64_t planned_bits = 0;  // payload of `layout`
  bool matched = true;
};

VariantPlan plan_variant(AblationVariant variant, ProfileId profile, double tolerance = 0.05);

// Trains every (profile, variant) pair on the generated scene and scores the
// fully compressed models. Rows come out in profile-major, variant-minor order;
// identical configurations are trained once. Rows whose measured BPP misses
// the profile's by more than the tolerance carry the "bpp-unmatched" flag.
std::vector<ReportRow> run_ablation(const AblationSpec& spec);

}  // namespace ndgi
