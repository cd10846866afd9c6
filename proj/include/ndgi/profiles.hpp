#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ndgi/decoder.hpp"

namespace ndgi {

// Shape of one feature map. channels == 0 means the map is absent.
struct GridSpec {
  int width = 0;
  int height = 0;
  int depth = 1;
  int channels = 0;

  bool present() const { return channels > 0; }
  std::size_t texels() const {
    return present() ? static_cast<std::size_t>(width) * height * depth : 0;
  }
  std::size_t values() const { return texels() * static_cast<std::size_t>(channels); }

  friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

// Feature-map and decoder shapes of one tile model. f3d and f_uv are the
// block-compressed maps (channels a multiple of 4); f_ut and f_vt are stored
// as plain 8-bit planes with x = spatial axis and y = time.
struct ModelLayout {
  GridSpec f3d;
  GridSpec f_uv;
  GridSpec f_ut;
  GridSpec f_vt;
  int hidden = 16;
  Activation activation = Activation::kGeluTanh;

  int feature_width() const {
    return f3d.channels + f_uv.channels + f_ut.channels + f_vt.channels;
  }
  int input_width() const { return feature_width() + kTimeEncodingWidth; }
  std::size_t mlp_parameters() const {
    return DecoderMLP<float>::parameter_count(input_width(), hidden);
  }

  // Throws kInvalidArgument when BC maps are not 4-aligned or nothing is present.
  void validate() const;

  friend bool operator==(const ModelLayout&, const ModelLayout&) = default;
};

enum class ProfileId : std::uint8_t { kL = 0, kM = 1, kH = 2, kM64 = 3, kCustom = 255 };

struct ProfileConfig {
  ProfileId id = ProfileId::kM;
  std::string name;
  ModelLayout layout;   // for a 128 x 128 tile core
  double expected_bpp = 0.0;
};

const std::vector<ProfileConfig>& profiles();
const ProfileConfig& profile(ProfileId id);
ProfileId parse_profile(const std::string& name);
std::string profile_name(ProfileId id);

// Scales the spatial resolution of a 128-core layout to another core size,
// keeping every spatial dimension a positive multiple of 4.
ModelLayout scale_layout(const ModelLayout& layout, int core_size);

}  // namespace ndgi
