#include <gtest/gtest.h>

#include <cmath>

#include "ndgi/ablation.hpp"
#include "ndgi/codec.hpp"
#include "ndgi/error.hpp"

using namespace ndgi;

TEST(Plan, VariantsMatchTheProfilePayload) {
  for (ProfileId p : {ProfileId::kL, ProfileId::kM, ProfileId::kH}) {
    const auto target = layout_payload_bits(profile(p).layout, StorageMode::kQuant8BC);
    for (auto v : {AblationVariant::kHybrid, AblationVariant::k2dOnly, AblationVariant::k3dOnly,
                   AblationVariant::k8chUv, AblationVariant::kBcSimOn, AblationVariant::kBcSimOff}) {
      const auto plan = plan_variant(v, p);
      EXPECT_EQ(plan.target_bits, target);
      EXPECT_EQ(plan.planned_bits, layout_payload_bits(plan.layout, StorageMode::kQuant8BC));
      EXPECT_TRUE(plan.matched) << to_string(v) << " " << profile_name(p);
      EXPECT_LE(std::abs(static_cast<double>(plan.planned_bits) / target - 1.0), 0.05);
      EXPECT_EQ(plan.layout.input_width(), profile(p).layout.input_width());
    }
  }
}

TEST(Plan, VariantsDifferOnlyInTheirAxis) {
  const auto base = profile(ProfileId::kM).layout;
  EXPECT_EQ(plan_variant(AblationVariant::kHybrid, ProfileId::kM).layout, base);
  const auto off = plan_variant(AblationVariant::kBcSimOff, ProfileId::kM);
  EXPECT_EQ(off.layout, base);
  EXPECT_FALSE(off.bc_simulation);
  EXPECT_TRUE(plan_variant(AblationVariant::kBcSimOn, ProfileId::kM).bc_simulation);

  const auto flat = plan_variant(AblationVariant::k2dOnly, ProfileId::kM).layout;
  EXPECT_FALSE(flat.f3d.present());
  EXPECT_EQ(flat.f_ut, base.f_ut);
  EXPECT_EQ(flat.f_vt, base.f_vt);

  const auto grid = plan_variant(AblationVariant::k3dOnly, ProfileId::kM).layout;
  EXPECT_FALSE(grid.f_uv.present());
  EXPECT_FALSE(grid.f_ut.present());
  EXPECT_FALSE(grid.f_vt.present());

  const auto uv8 = plan_variant(AblationVariant::k8chUv, ProfileId::kM).layout;
  EXPECT_EQ(uv8.f_uv.channels, 8);
  EXPECT_EQ(uv8.f3d, base.f3d);
  EXPECT_FALSE(uv8.f_ut.present());
}

TEST(Spec, ParsesAndRejects) {
  const auto s = parse_ablation_spec(
      R"({"variants": ["hybrid", "2d-only"], "profiles": ["L", "H"], "seed": 9, "steps": 10,
          "scene": {"kind": "mixed", "width": 64, "height": 64}})");
  ASSERT_EQ(s.variants.size(), 2u);
  EXPECT_EQ(s.variants[1], AblationVariant::k2dOnly);
  EXPECT_EQ(s.profiles[1], ProfileId::kH);
  EXPECT_EQ(s.seed, 9u);
  EXPECT_EQ(s.steps, 10);
  EXPECT_EQ(s.finetune_steps, 3000);
  EXPECT_EQ(s.scene.kind, SceneKind::kMixed);
  EXPECT_EQ(s.scene.width, 64);
  EXPECT_EQ(parse_ablation_spec(ablation_spec_json(s)).scene.name, s.scene.name);

  EXPECT_EQ(parse_ablation_spec("{}").scene.kind, SceneKind::kSwitching);
  EXPECT_THROW(parse_ablation_spec(R"({"variants": ["wavelet"]})"), Error);
  EXPECT_THROW(parse_ablation_spec(R"({"profiles": ["XL"]})"), Error);
  EXPECT_THROW(parse_ablation_spec(R"({"steps": -1})"), Error);
  EXPECT_THROW(parse_ablation_spec("not json"), Error);
}

TEST(Run, TinyRunIsReproducibleAndEmitsEveryRow) {
  AblationSpec spec;
  spec.variants = {AblationVariant::kHybrid, AblationVariant::k2dOnly, AblationVariant::kBcSimOn};
  spec.profiles = {ProfileId::kM};
  spec.scene.kind = SceneKind::kSwitching;
  spec.scene.width = spec.scene.height = 32;
  spec.scene.base_frames = 6;
  spec.scene.name = "switching";
  spec.steps = 30;
  spec.finetune_steps = 5;
  const auto a = run_ablation(spec);
  ASSERT_EQ(a.size(), 3u);
  EXPECT_EQ(a[0].method, "hybrid");
  EXPECT_EQ(a[1].method, "2d-only");
  EXPECT_EQ(a[0].psnr, a[2].psnr);  // the same configuration, trained once
  for (const auto& r : a) {
    EXPECT_EQ(r.scene, "switching");
    EXPECT_EQ(r.profile, "M");
    EXPECT_GT(r.bpp, 0.0);
    EXPECT_TRUE(std::isfinite(r.psnr));
  }
  EXPECT_EQ(report_csv(run_ablation(spec)), report_csv(a));
}
