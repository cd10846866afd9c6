#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>

#include "ndgi/error.hpp"
#include "ndgi/lightmap.hpp"
#include "ndgi/random.hpp"

using namespace ndgi;

namespace {

TemporalLightmapSet constant_set(int w, int h, std::vector<float> values) {
  std::vector<LightmapFrame> frames;
  for (std::size_t i = 0; i < values.size(); ++i) {
    frames.push_back({static_cast<float>(i) / values.size(),
                      std::vector<float>(static_cast<std::size_t>(w) * h * 3, values[i])});
  }
  return TemporalLightmapSet("c", w, h, std::vector<std::uint8_t>(static_cast<std::size_t>(w) * h, 1),
                             std::move(frames));
}

TemporalLightmapSet random_set(int w, int h, int n, std::uint64_t seed, bool holes = false) {
  Rng rng(seed);
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(w) * h, 1);
  if (holes) {
    for (auto& m : mask) m = uniform01(rng) < 0.8 ? 1 : 0;
    mask[0] = 1;
  }
  std::vector<LightmapFrame> frames;
  for (int f = 0; f < n; ++f) {
    LightmapFrame fr;
    fr.time = static_cast<float>(f) / n;
    fr.pixels.resize(static_cast<std::size_t>(w) * h * 3);
    for (std::size_t i = 0; i < fr.pixels.size(); ++i) {
      fr.pixels[i] = mask[i / 3] ? static_cast<float>(std::exp(uniform(rng, -4.0, 3.0))) : 0.0f;
    }
    frames.push_back(std::move(fr));
  }
  return TemporalLightmapSet("r", w, h, std::move(mask), std::move(frames));
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("ndgi_lightmap_" + name)).string();
}

}  // namespace

TEST(LightmapSet, MinimalTwoFrameFileLoads) {
  const auto set = constant_set(8, 8, {0.5f, 1.5f});
  const std::string path = temp_path("min.nlm");
  save_lightmap_set(set, path);
  const auto back = load_lightmap_set(path);
  EXPECT_EQ(back.frame_count(), 2);
  EXPECT_EQ(back.width(), 8);
  EXPECT_EQ(back.height(), 8);
  std::filesystem::remove(path);
}

TEST(LightmapSet, MixedFrameSizesAreRejected) {
  std::vector<LightmapFrame> frames{{0.0f, std::vector<float>(8 * 8 * 3, 1.0f)},
                                    {0.5f, std::vector<float>(16 * 16 * 3, 1.0f)}};
  try {
    TemporalLightmapSet("bad", 8, 8, std::vector<std::uint8_t>(64, 1), frames);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDimensionMismatch);
  }
}

TEST(LightmapSet, InvariantViolationsAreRejected) {
  auto make = [](std::vector<float> times, float value) {
    std::vector<LightmapFrame> frames;
    for (float t : times) frames.push_back({t, std::vector<float>(4 * 3, value)});
    return TemporalLightmapSet("x", 2, 2, std::vector<std::uint8_t>(4, 1), frames);
  };
  EXPECT_THROW(make({0.0f}, 1.0f), Error);               // n < 2
  EXPECT_THROW(make({0.5f, 0.5f}, 1.0f), Error);         // not strictly increasing
  EXPECT_THROW(make({0.0f, 0.5f}, -1.0f), Error);        // negative
  EXPECT_THROW(make({0.0f, 0.5f}, NAN), Error);          // non-finite
}

TEST(LightmapSet, SaveLoadIsBitExact) {
  const auto set = random_set(13, 7, 3, 42, true);
  const std::string path = temp_path("rt.nlm");
  save_lightmap_set(set, path);
  const auto back = load_lightmap_set(path);
  std::filesystem::remove(path);
  ASSERT_EQ(back.frame_count(), set.frame_count());
  EXPECT_EQ(back.mask(), set.mask());
  for (int f = 0; f < set.frame_count(); ++f) {
    EXPECT_EQ(back.time(f), set.time(f));
    const auto a = set.pixels(f), b = back.pixels(f);
    ASSERT_EQ(a.size(), b.size());
    EXPECT_EQ(0, std::memcmp(a.data(), b.data(), a.size() * sizeof(float)));
  }
}

TEST(LightmapSet, TruncatedAndForeignFilesFail) {
  auto bytes = encode_lightmap_set(random_set(4, 4, 2, 1));
  auto cut = bytes;
  cut.resize(cut.size() - 5);
  EXPECT_THROW(decode_lightmap_set(cut), Error);
  auto foreign = bytes;
  foreign[0] = 'X';
  try {
    decode_lightmap_set(foreign);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMalformedHeader);
  }
}

TEST(LightmapSet, SceneConfigListsResolutionAndTimes) {
  const auto cfg = scene_config_json(constant_set(8, 4, {1.0f, 2.0f}));
  EXPECT_NE(cfg.find("\"width\": 8"), std::string::npos) << cfg;
  EXPECT_NE(cfg.find("\"height\": 4"), std::string::npos) << cfg;
  EXPECT_NE(cfg.find("times"), std::string::npos) << cfg;
}

TEST(Preprocess, ConstantOneIsAFixedPoint) {
  const auto r = preprocess(constant_set(4, 4, {1.0f, 1.0f}), 2.2f);
  for (int f = 0; f < 2; ++f) {
    for (int c = 0; c < 3; ++c) EXPECT_FLOAT_EQ(r.record.means[f][c], 1.0f);
    for (float v : r.set.pixels(f)) EXPECT_FLOAT_EQ(v, 1.0f);
  }
}

TEST(Preprocess, MeanDivision) {
  const auto r = preprocess(constant_set(4, 4, {4.0f, 2.0f}), 2.2f);
  EXPECT_FLOAT_EQ(r.record.means[0][1], 4.0f);
  EXPECT_FLOAT_EQ(r.record.means[1][2], 2.0f);
  for (int f = 0; f < 2; ++f) {
    for (float v : r.set.pixels(f)) EXPECT_FLOAT_EQ(v, 1.0f);
  }
}

TEST(Preprocess, NormalizesThenAppliesInverseGamma) {
  // Two texels, values 1 and 3: mean 2, normalized 0.5 and 1.5.
  std::vector<LightmapFrame> frames;
  for (float t : {0.0f, 0.5f}) frames.push_back({t, {1, 1, 1, 3, 3, 3}});
  const TemporalLightmapSet set("two", 2, 1, {1, 1}, frames);
  const auto r = preprocess(set, 2.0f);
  EXPECT_NEAR(r.set.at(0, 0, 0, 0), std::sqrt(0.5), 1e-6);
  EXPECT_NEAR(r.set.at(1, 1, 0, 2), std::sqrt(1.5), 1e-6);
}

TEST(Preprocess, MaskedTexelsDoNotEnterTheMean) {
  std::vector<LightmapFrame> frames;
  for (float t : {0.0f, 0.5f}) frames.push_back({t, {2, 2, 2, 1000, 1000, 1000}});
  const TemporalLightmapSet set("m", 2, 1, {1, 0}, frames);
  const auto r = preprocess(set);
  EXPECT_FLOAT_EQ(r.record.means[0][0], 2.0f);
  EXPECT_EQ(r.set.at(0, 1, 0, 0), 0.0f);
}

TEST(Preprocess, MeansAreFloored) {
  const auto r = preprocess(constant_set(2, 2, {0.0f, 1.0f}));
  EXPECT_FLOAT_EQ(r.record.means[0][0], NormalizationRecord::kMinMean);
}

TEST(Postprocess, FrameTimeAndMidpoint) {
  NormalizationRecord rec;
  rec.times = {0.0f, 0.5f};
  rec.means = {{2.0f, 2.0f, 2.0f}, {4.0f, 4.0f, 4.0f}};
  rec.gamma = 2.2f;
  EXPECT_FLOAT_EQ(postprocess({1, 1, 1}, rec, 0.0)[0], 2.0f);
  EXPECT_FLOAT_EQ(postprocess({1, 1, 1}, rec, 0.25)[1], 3.0f);
  rec.means = {{1, 1, 1}, {1, 1, 1}};
  EXPECT_FLOAT_EQ(postprocess({1, 1, 1}, rec, 0.5)[2], 1.0f);
  EXPECT_THROW(postprocess({1, 1, 1}, rec, 0.75), Error);
  EXPECT_FLOAT_EQ(postprocess_clamped({1, 1, 1}, rec, 0.75)[0], 1.0f);
}

TEST(Postprocess, InvertsPreprocessAtFrameTimes) {
  const auto set = random_set(16, 9, 4, 7, true);
  const auto r = preprocess(set, 2.2f);
  double worst = 0.0;
  for (int f = 0; f < set.frame_count(); ++f) {
    for (int y = 0; y < set.height(); ++y) {
      for (int x = 0; x < set.width(); ++x) {
        if (!set.valid(x, y)) continue;
        const Rgb back = postprocess(r.set.texel(f, x, y), r.record, set.time(f));
        for (int c = 0; c < 3; ++c) {
          const double ref = set.at(f, x, y, c);
          worst = std::max(worst, std::abs(back[c] - ref) / ref);
        }
      }
    }
  }
  EXPECT_LT(worst, 1e-5);
}

TEST(Tiling, MirrorIndexReflectsWithoutEdgeRepeat) {
  EXPECT_EQ(mirror_index(-1, 10), 1);
  EXPECT_EQ(mirror_index(-4, 10), 4);
  EXPECT_EQ(mirror_index(10, 10), 8);
  EXPECT_EQ(mirror_index(12, 10), 6);
  EXPECT_EQ(mirror_index(5, 10), 5);
}

TEST(Tiling, SingleTileWithoutBorderIsIdentity) {
  const auto set = random_set(128, 128, 2, 3);
  const auto tiles = tile_set(set, 128, 0);
  ASSERT_EQ(tiles.size(), 1u);
  EXPECT_TRUE(tiles[0].data == set);
}

TEST(Tiling, FourPaddedTiles) {
  const auto set = random_set(256, 256, 2, 4);
  const auto tiles = tile_set(set, 128, 4);
  ASSERT_EQ(tiles.size(), 4u);
  for (const auto& t : tiles) {
    EXPECT_EQ(t.data.width(), 136);
    EXPECT_EQ(t.data.height(), 136);
    EXPECT_EQ(t.descriptor.padded_size(), 136);
  }
  // Left edge tile: padded column -k equals core column k (no edge repeat).
  const auto& t0 = tiles[0];
  for (int k = 1; k <= 4; ++k) {
    EXPECT_EQ(t0.data.at(1, 4 - k, 10, 2), set.at(1, k, 6, 2));
  }
  // Interior border of the right neighbour copies real parent texels.
  const auto& t1 = tiles[1];
  EXPECT_EQ(t1.data.at(0, 0, 4, 0), set.at(0, 124, 0, 0));
}

TEST(Tiling, ReassembleInvertsTiling) {
  for (int border : {0, 1, 4, 7}) {
    for (int core : {8, 16, 48}) {
      const auto set = random_set(48, 96, 2, static_cast<std::uint64_t>(border * 100 + core), true);
      const auto tiles = tile_set(set, core, border);
      EXPECT_TRUE(reassemble(tiles, set.name()) == set) << core << "/" << border;
    }
  }
}

TEST(Tiling, NonDividingCoreIsRejected) {
  try {
    tile_set(random_set(20, 20, 2, 1), 16, 4);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNotDivisible);
  }
}
