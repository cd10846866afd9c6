#include "ndgi/profiles.hpp"

#include <algorithm>
#include <cmath>

#include "ndgi/error.hpp"

namespace ndgi {
namespace {

ModelLayout table_layout(int f3d_res, int hidden) {
  ModelLayout l;
  l.f3d = {f3d_res, f3d_res, 12, 4};
  l.f_uv = {128, 128, 1, 4};
  l.f_ut = {64, 24, 1, 2};
  l.f_vt = {64, 24, 1, 2};
  l.hidden = hidden;
  return l;
}

int scale_dim(int dim, int core_size) {
  const double scaled = static_cast<double>(dim) * core_size / 128.0;
  return std::max(4, static_cast<int>(std::lround(scaled / 4.0)) * 4);
}

}  // namespace

void ModelLayout::validate() const {
  for (const GridSpec* g : {&f3d, &f_uv}) {
    if (!g->present()) continue;
    if (g->channels % 4 != 0 || g->width % 4 != 0 || g->height % 4 != 0 || g->width <= 0 ||
        g->height <= 0 || g->depth <= 0) {
      throw Error(ErrorCode::kInvalidArgument,
                  "block-compressed maps need 4-aligned sizes and channel counts");
    }
  }
  if (f_uv.present() && f_uv.depth != 1) {
    throw Error(ErrorCode::kInvalidArgument, "f_uv must be two-dimensional");
  }
  for (const GridSpec* g : {&f_ut, &f_vt}) {
    if (g->present() && (g->width <= 0 || g->height <= 0 || g->depth != 1)) {
      throw Error(ErrorCode::kInvalidArgument, "time planes must be two-dimensional");
    }
  }
  if (feature_width() == 0) throw Error(ErrorCode::kInvalidArgument, "layout has no feature maps");
  if (hidden <= 0) throw Error(ErrorCode::kInvalidArgument, "hidden width must be positive");
}

const std::vector<ProfileConfig>& profiles() {
  static const std::vector<ProfileConfig> table = {
      {ProfileId::kL, "L", table_layout(16, 16), 0.50},
      {ProfileId::kM, "M", table_layout(32, 16), 0.68},
      {ProfileId::kH, "H", table_layout(64, 16), 1.39},
      {ProfileId::kM64, "M64", table_layout(32, 64), 0.86},
  };
  return table;
}

const ProfileConfig& profile(ProfileId id) {
  for (const auto& p : profiles()) {
    if (p.id == id) return p;
  }
  throw Error(ErrorCode::kInvalidArgument, "no table entry for a custom profile");
}

ProfileId parse_profile(const std::string& name) {
  for (const auto& p : profiles()) {
    if (p.name == name) return p.id;
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown profile '" + name + "' (expected L, M, H, M64)");
}

std::string profile_name(ProfileId id) {
  if (id == ProfileId::kCustom) return "custom";
  return profile(id).name;
}

ModelLayout scale_layout(const ModelLayout& layout, int core_size) {
  if (core_size == 128) return layout;
  ModelLayout out = layout;
  for (GridSpec* g : {&out.f3d, &out.f_uv}) {
    if (!g->present()) continue;
    g->width = scale_dim(g->width, core_size);
    g->height = scale_dim(g->height, core_size);
  }
  for (GridSpec* g : {&out.f_ut, &out.f_vt}) {
    if (g->present()) g->width = scale_dim(g->width, core_size);
  }
  return out;
}

}  // namespace ndgi
