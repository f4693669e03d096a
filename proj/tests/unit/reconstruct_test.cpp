#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "gen.hpp"
#include "glassesim/burst.hpp"
#include "glassesim/degrade.hpp"
#include "glassesim/demosaic.hpp"
#include "glassesim/metrics.hpp"
#include "glassesim/parallel.hpp"
#include "glassesim/reconstruct.hpp"
#include "glassesim/scene.hpp"

using namespace glassesim;

namespace {

constexpr double kFocal = 3.8e-3;
constexpr double kGuidePitch = 10e-6;

CameraSpec camera(double pitch, int w, int h) {
  CameraSpec c;
  c.lens = {kFocal, 1.1e-3, 1.0};
  c.sensor = {pitch, w, h, BayerPattern::RGGB, 12};
  c.coc_diameter = 2 * pitch;
  return c;
}

// Guide 128x96 at 2x target scale and one detail at the target resolution,
// translated by `baseline` along x.
RigSpec small_pair(double baseline) {
  RigSpec rig;
  rig.guide = {camera(kGuidePitch, 128, 96), Pose{}};
  rig.target_scale = 2;
  rig.details = {{camera(kGuidePitch / 2, 256, 192), Pose{Mat3::Identity(), Vec3(baseline, 0, 0)}}};
  rig.validate();
  return rig;
}

SceneSpec textured_plane(double z, double w_m, double h_m, std::uint64_t seed = 3) {
  SceneSpec s;
  s.quads.push_back(fronto_quad(Vec3(0, 0, z), w_m, h_m,
                                noise_texture(seed, 6, 3, {0.1f, 0.1f, 0.1f}, {0.9f, 0.9f, 0.9f})));
  return s;
}

FusionConfig matcher_config() {
  FusionConfig c;
  c.lowpass_detail = false;  // inputs below are equally sharp
  return c;
}

LinearImage ramp(int w, int h) {
  LinearImage img(w, h, 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) img(x, y, c) = static_cast<float>(0.1 + 0.002 * x + 0.001 * y + 0.05 * c);
  return img;
}

// Band-limited aperiodic pattern sampled at (x - sx, y - sy).
LinearImage smooth_pattern(int w, int h, double sx, double sy) {
  struct Wave {
    double fx, fy, phase;
  };
  static const std::vector<Wave> waves = [] {
    testgen::Gen g(70);
    std::vector<Wave> out;
    for (int k = 0; k < 24; ++k) {
      const double f = g.uniform(0.05, 0.6), a = g.uniform(0, 2 * M_PI);
      out.push_back({f * std::cos(a), f * std::sin(a), g.uniform(0, 2 * M_PI)});
    }
    return out;
  }();
  LinearImage img(w, h, 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double val = 0.5;
      for (const Wave& wv : waves) val += 0.035 * std::sin(wv.fx * (x - sx) + wv.fy * (y - sy) + wv.phase);
      val = std::clamp(val, 0.02, 0.98);
      for (int c = 0; c < 3; ++c) img(x, y, c) = static_cast<float>(val * (0.8 + 0.1 * c));
    }
  return img;
}

double max_abs_diff(const LinearImage& a, const LinearImage& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.values().size(); ++i) m = std::max(m, static_cast<double>(std::abs(a.values()[i] - b.values()[i])));
  return m;
}

}  // namespace

TEST(Demosaic, ConstantRaw) {
  RawImage r;
  r.data = Image<float>(16, 12, 1, 0.42f);
  const LinearImage out = demosaic(r);
  for (float v : out.values()) EXPECT_NEAR(v, 0.42f, 1e-6);
}

TEST(Demosaic, LinearRampRoundTrip) {
  const LinearImage img = ramp(64, 48);
  for (BayerPattern p : {BayerPattern::RGGB, BayerPattern::GBRG}) {
    EXPECT_LT(max_abs_diff(demosaic(mosaic(img, p)), img), 1.0 / 255.0);
  }
}

TEST(Demosaic, NyquistCheckerErrorAtEdges) {
  // Regression pin: a one-pixel grey checker aliases under the mosaic, so the error is
  // large and structured, and the interior reconstruction is a fixed pattern.
  LinearImage img(16, 16, 3);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x)
      for (int c = 0; c < 3; ++c) img(x, y, c) = ((x + y) & 1) ? 0.8f : 0.2f;
  const LinearImage out = demosaic(mosaic(img, BayerPattern::RGGB));
  EXPECT_GT(max_abs_diff(out, img), 0.1);
  // Green sites are sampled exactly.
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x)
      if (bayer_channel(BayerPattern::RGGB, x, y) == 1) EXPECT_FLOAT_EQ(out(x, y, 1), img(x, y, 1));
  // Interior values are translation invariant with period 2.
  for (int y = 4; y < 10; ++y)
    for (int x = 4; x < 10; ++x)
      for (int c = 0; c < 3; ++c) EXPECT_NEAR(out(x, y, c), out(x + 2, y + 2, c), 1e-6);
}

TEST(Burst, IdenticalFramesEqualSingleDemosaic) {
  const RawImage r = mosaic(smooth_pattern(96, 64, 0, 0), BayerPattern::RGGB);
  const std::vector<RawImage> frames(8, r);
  const BurstResult out = burst_merge(frames);
  EXPECT_LT(max_abs_diff(out.image, demosaic(r)), 1e-6);
  EXPECT_EQ(out.reference, 4);
}

TEST(Burst, NoiseFallsAsRootN) {
  // Alignment needs texture, so noise is measured against the clean demosaic.
  const RawImage clean = mosaic(smooth_pattern(128, 128, 0, 0), BayerPattern::RGGB);
  const LinearImage reference = demosaic(clean);
  const NoiseModel m = noise_preset("head-g22");
  auto merged_std = [&](int n) {
    std::vector<RawImage> frames;
    for (int f = 0; f < n; ++f) frames.push_back(add_noise(clean, m, 77, f));
    const LinearImage img = n == 1 ? demosaic(frames[0]) : burst_merge(frames).image;
    double s2 = 0.0;
    int k = 0;
    for (int y = 16; y < 112; ++y)
      for (int x = 16; x < 112; ++x, ++k) s2 += std::pow(img(x, y, 1) - reference(x, y, 1), 2);
    return std::sqrt(s2 / k);
  };
  const double one = merged_std(1);
  for (int n : {2, 4, 8}) {
    const double ratio = merged_std(n) / one;
    EXPECT_NEAR(ratio, 1.0 / std::sqrt(n), 0.2 / std::sqrt(n)) << n;
  }
}

TEST(Burst, RecoversKnownShifts) {
  const double shifts[5][2] = {{2, 3}, {-2, 3}, {0, 0}, {2, -3}, {-2, -3}};
  std::vector<RawImage> frames;
  for (const auto& s : shifts) frames.push_back(mosaic(smooth_pattern(160, 128, s[0], s[1]), BayerPattern::RGGB));
  const BurstResult out = burst_merge(frames);
  ASSERT_EQ(out.reference, 2);
  for (int f = 0; f < 5; ++f) {
    EXPECT_FALSE(out.frames[f].dropped);
    EXPECT_NEAR(out.frames[f].motion.tx, shifts[f][0], 0.1) << f;
    EXPECT_NEAR(out.frames[f].motion.ty, shifts[f][1], 0.1) << f;
    EXPECT_NEAR(out.frames[f].motion.theta, 0.0, 1e-3) << f;
  }
}

TEST(Burst, UnrelatedFrameDropped) {
  testgen::Gen g(71);
  std::vector<RawImage> frames(3, mosaic(smooth_pattern(96, 96, 0, 0), BayerPattern::RGGB));
  LinearImage junk(96, 96, 3);
  for (float& v : junk.values()) v = static_cast<float>(g.uniform(0, 1));
  frames[0] = mosaic(junk, BayerPattern::RGGB);
  const BurstResult out = burst_merge(frames);
  EXPECT_TRUE(out.frames[0].dropped);
  EXPECT_FALSE(out.frames[2].dropped);
}

TEST(Match, ZeroBaselineIdenticalImages) {
  const RigSpec rig = small_pair(0.0);
  const SceneSpec s = textured_plane(1.0, 1.0, 1.0);
  const LinearImage img = render(s, rig.target_camera(), rig.target_pose(), 2);
  const CorrespondenceField f = match_epipolar(img, img, rig, 0, matcher_config());
  EXPECT_GT(f.valid_fraction(), 0.5);
  for (int y = 0; y < f.height(); ++y)
    for (int x = 0; x < f.width(); ++x) {
      if (!f.valid(x, y)) continue;
      EXPECT_NEAR(f.dx(x, y), 0.0f, 1e-3);
      EXPECT_NEAR(f.dy(x, y), 0.0f, 1e-3);
      EXPECT_GT(f.confidence(x, y), 0.99f);
    }
}

TEST(Match, FrontoPlaneDisparity) {
  const double b = 0.01, z = 1.0;
  const RigSpec rig = small_pair(b);
  // The plane covers the central 176 x 132 target pixels.
  const double px_m = z * kGuidePitch / 2 / kFocal;
  const SceneSpec s = textured_plane(z, 176 * px_m, 132 * px_m);
  const LinearImage target = render(s, rig.target_camera(), rig.target_pose(), 2);
  const LinearImage detail = render(s, rig.details[0].camera, rig.details[0].pose, 2);
  const CorrespondenceField f = match_epipolar(target, detail, rig, 0, matcher_config());
  const Image<int> quads = quad_index_map(s, rig.target_camera(), rig.target_pose());
  const double disparity = kFocal * b / (z * kGuidePitch / 2);
  int textured = 0, good = 0;
  for (int y = 0; y < f.height(); ++y)
    for (int x = 0; x < f.width(); ++x) {
      if (quads(x, y) < 0) continue;
      ++textured;
      if (f.valid(x, y) && std::abs(f.dx(x, y) + disparity) < 0.25 && std::abs(f.dy(x, y)) < 0.25) ++good;
    }
  EXPECT_GE(good, 0.95 * textured);
}

TEST(Match, EpipolarContainment) {
  const RigSpec rig = small_pair(0.01);
  SceneSpec s = textured_plane(1.5, 2.0, 2.0);
  s.quads.push_back(fronto_quad(Vec3(0.02, 0.01, 0.6), 0.06, 0.05,
                                noise_texture(9, 4, 3, {0.2f, 0.2f, 0.2f}, {1, 1, 1})));
  const LinearImage target = render(s, rig.target_camera(), rig.target_pose(), 2);
  const LinearImage detail = render(s, rig.details[0].camera, rig.details[0].pose, 2);
  const FusionConfig cfg = matcher_config();
  const CorrespondenceField f = match_epipolar(target, detail, rig, 0, cfg);
  int n = 0;
  for (int y = 0; y < f.height(); y += 3)
    for (int x = 0; x < f.width(); x += 3) {
      if (!f.valid(x, y)) continue;
      const auto seg = epipolar_segment(rig, 0, Vec2(x, y), cfg.near, cfg.far, cfg.epipolar_tolerance);
      EXPECT_LE(seg.distance_to_segment(Vec2(x + f.dx(x, y), y + f.dy(x, y))), cfg.epipolar_tolerance + 1e-6);
      ++n;
    }
  EXPECT_GT(n, 100);
}

TEST(Match, TexturelessRegionHasLowConfidence) {
  const RigSpec rig = small_pair(0.01);
  SceneSpec s;
  s.quads.push_back(fronto_quad(Vec3(0, 0, 1), 5, 5, constant_texture({0.5f, 0.5f, 0.5f})));
  const LinearImage target = render(s, rig.target_camera(), rig.target_pose(), 1);
  const LinearImage detail = render(s, rig.details[0].camera, rig.details[0].pose, 1);
  const FusionConfig cfg = matcher_config();
  const CorrespondenceField f = match_epipolar(target, detail, rig, 0, cfg);
  for (float c : f.confidence.values()) EXPECT_LT(c, cfg.tau);
  EXPECT_EQ(f.valid_fraction(), 0.0);
}

TEST(Warp, IdentityField) {
  const LinearImage d = ramp(40, 30);
  CorrespondenceField f(40, 30);
  f.valid.fill(1);
  const WarpedDetail w = warp_detail(d, f);
  for (int y = 0; y < 30; ++y)
    for (int x = 0; x < 40; ++x) {
      EXPECT_EQ(w.mask(x, y), 1);
      for (int c = 0; c < 3; ++c) EXPECT_NEAR(w.image(x, y, c), d(x, y, c), 1e-6);
    }
}

TEST(Warp, HalfPixelShiftOfRamp) {
  const LinearImage d = ramp(64, 32);
  CorrespondenceField f(64, 32);
  f.valid.fill(1);
  f.dx.fill(3.5f);
  const WarpedDetail w = warp_detail(d, f);
  for (int y = 4; y < 28; ++y)
    for (int x = 4; x < 56; ++x) {
      EXPECT_NEAR(w.image(x, y, 0), 0.1 + 0.002 * (x + 3.5) + 0.001 * y, 1e-3);
      EXPECT_EQ(w.mask(x, y), 1);
    }
  // Sources beyond the right border are masked out.
  EXPECT_EQ(w.mask(62, 5), 0);
}

TEST(Warp, InvalidExcluded) {
  CorrespondenceField f(8, 8);
  f.valid.fill(1);
  f.valid(3, 3) = 0;
  const WarpedDetail w = warp_detail(ramp(8, 8), f);
  EXPECT_EQ(w.mask(3, 3), 0);
  EXPECT_EQ(w.mask(4, 3), 1);
}

TEST(Fuse, NoSourcesIsGuide) {
  testgen::Gen g(72);
  LinearImage guide(300, 200, 3);
  for (float& v : guide.values()) v = static_cast<float>(g.uniform(0, 1));
  FusionSource src{LinearImage(300, 200, 3, 0.7f), Mask(300, 200, 1, 0), Image<float>(300, 200, 1, 1.0f)};
  const FusionResult r = fuse(guide, {src}, FusionConfig{});
  EXPECT_TRUE(r.image == guide);
  for (float w : r.detail_weight.values()) EXPECT_EQ(w, 0.0f);
}

TEST(Fuse, FullConfidenceSourceReproducesItself) {
  testgen::Gen g(73);
  LinearImage guide(300, 280, 3), detail(300, 280, 3);
  for (std::size_t i = 0; i < guide.values().size(); ++i) {
    const double v = g.uniform(0.2, 0.8);
    guide.values()[i] = static_cast<float>(v);
    detail.values()[i] = static_cast<float>(std::clamp(v + g.normal(0, 0.02), 0.0, 1.0));
  }
  FusionConfig cfg;
  cfg.gain_compensation = false;
  const FusionResult r = fuse(guide, {{detail, Mask(300, 280, 1, 1), Image<float>(300, 280, 1, 1.0f)}}, cfg);
  EXPECT_LT(max_abs_diff(r.image, detail), 1e-6);
}

TEST(Fuse, GainCompensation) {
  LinearImage guide = smooth_pattern(300, 260, 0, 0), detail = guide;
  for (float& v : detail.values()) v *= 0.5f;
  FusionConfig cfg;
  const FusionResult r = fuse(guide, {{detail, Mask(300, 260, 1, 1), Image<float>(300, 260, 1, 1.0f)}}, cfg);
  ASSERT_EQ(r.gains.size(), 1u);
  EXPECT_NEAR(r.gains[0], 2.0, 1e-3);
  EXPECT_LT(max_abs_diff(r.image, guide), 1e-3);
}

TEST(Fuse, ConvexAndFiniteProperty) {
  testgen::Gen g(74);
  FusionConfig cfg;
  cfg.gain_compensation = false;
  for (int n = 0; n < 5; ++n) {
    const int w = g.integer(40, 300), h = g.integer(40, 300);
    LinearImage guide(w, h, 3);
    for (float& v : guide.values()) v = static_cast<float>(g.uniform(0, 1));
    std::vector<FusionSource> src;
    for (int k = 0; k < g.integer(0, 3); ++k) {
      FusionSource s{LinearImage(w, h, 3), Mask(w, h, 1), Image<float>(w, h, 1)};
      for (float& v : s.image.values()) v = static_cast<float>(g.uniform(0, 1));
      for (auto& m : s.mask.values()) m = g.coin();
      for (float& c : s.confidence.values()) c = static_cast<float>(g.uniform(0, 1));
      src.push_back(std::move(s));
    }
    const FusionResult r = fuse(guide, src, cfg);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int c = 0; c < 3; ++c) {
          float lo = guide(x, y, c), hi = lo;
          for (const auto& s : src)
            if (s.mask(x, y) && s.confidence(x, y) >= cfg.tau) {
              lo = std::min(lo, s.image(x, y, c));
              hi = std::max(hi, s.image(x, y, c));
            }
          const float v = r.image(x, y, c);
          ASSERT_TRUE(std::isfinite(v));
          EXPECT_GE(v, lo - 1e-5f);
          EXPECT_LE(v, hi + 1e-5f);
        }
  }
}

TEST(Depth, ExactCorrespondencesOnPlane) {
  const RigSpec rig = small_pair(0.01);
  const double z = 2.0, disparity = kFocal * 0.01 / (z * kGuidePitch / 2);
  CorrespondenceField f(256, 192);
  f.valid.fill(1);
  f.dx.fill(static_cast<float>(-disparity));
  FusionConfig cfg;
  const Image<float> d = triangulate_depth({f}, {0}, rig, cfg);
  for (float v : d.values()) EXPECT_NEAR(v, 2.0f, 1e-3);
}

TEST(Depth, BlendFavoursDeeperInsideMask) {
  RigSpec rig = small_pair(0.01);
  rig.details.push_back({rig.details[0].camera, Pose{Mat3::Identity(), Vec3(-0.01, 0, 0)}});
  const double s = kFocal * 0.01 / (kGuidePitch / 2);
  CorrespondenceField a(256, 192), b(256, 192);
  a.valid.fill(1);
  a.dx.fill(static_cast<float>(-s / 2.0));  // 2 m
  // b claims 1 m and is valid only on a narrow band: its pixels sit near its contour.
  b.dx.fill(static_cast<float>(s / 1.0));
  for (int y = 90; y < 100; ++y)
    for (int x = 0; x < 256; ++x) b.valid(x, y) = 1;
  const Image<float> d = triangulate_depth({a, b}, {0, 1}, rig, FusionConfig{});
  const float v = d(128, 94);
  EXPECT_GT(v, 1.0f);
  EXPECT_LT(v, 2.0f);
  EXPECT_GT(v, 1.5f);
  // On b's contour only a counts.
  EXPECT_NEAR(d(128, 90), 2.0f, 1e-3);
  const Image<float> avg = average_depth({a, b}, {0, 1}, rig, FusionConfig{});
  EXPECT_NEAR(avg(128, 94), 1.5f, 1e-3);
}

TEST(Depth, ZeroBaselineExcluded) {
  const RigSpec rig = small_pair(0.0);
  CorrespondenceField f(256, 192);
  f.valid.fill(1);
  const Image<float> d = triangulate_depth({f}, {0}, rig, FusionConfig{});
  for (float v : d.values()) EXPECT_TRUE(std::isinf(v));
}

TEST(Depth, WithinSearchRangeProperty) {
  testgen::Gen g(75);
  const RigSpec rig = small_pair(0.01);
  FusionConfig cfg;
  CorrespondenceField f(256, 192);
  for (int y = 0; y < 192; ++y)
    for (int x = 0; x < 256; ++x) {
      f.valid(x, y) = g.coin();
      f.dx(x, y) = static_cast<float>(g.uniform(-60, 20));
      f.dy(x, y) = static_cast<float>(g.uniform(-3, 3));
    }
  const Image<float> d = triangulate_depth({f}, {0}, rig, cfg);
  for (int y = 0; y < 192; ++y)
    for (int x = 0; x < 256; ++x) {
      if (!f.valid(x, y)) continue;
      EXPECT_GE(d(x, y), cfg.near);
      EXPECT_LE(d(x, y), cfg.far);
    }
}

TEST(Distance, TransformMatchesBruteForce) {
  testgen::Gen g(76);
  Mask m(37, 29, 1, 1);
  for (int k = 0; k < 6; ++k) m(g.integer(0, 36), g.integer(0, 28)) = 0;
  const Image<float> d = distance_transform(m);
  for (int y = 0; y < 29; ++y)
    for (int x = 0; x < 37; ++x) {
      double best = std::numeric_limits<double>::infinity();
      for (int v = 0; v < 29; ++v)
        for (int u = 0; u < 37; ++u)
          if (!m(u, v)) best = std::min(best, std::hypot(u - x, v - y));
      EXPECT_NEAR(d(x, y), best, 1e-4);
    }
}

namespace {

Captures small_captures(const RigSpec& rig, const SceneSpec& s, const NoiseModel& noise, std::uint64_t seed) {
  Captures c;
  GuideDegradation gd;
  gd.factor = rig.target_scale;
  const LinearImage target = render(s, rig.target_camera(), rig.target_pose(), 2);
  c.guide.frames.push_back(degrade_guide(target, gd, PsfGrid::delta(), noise, seed, 0));
  gd.factor = 1;
  for (std::size_t i = 0; i < rig.details.size(); ++i) {
    const LinearImage d = render(s, rig.details[i].camera, rig.details[i].pose, 2);
    c.details.push_back({{degrade_guide(d, gd, PsfGrid::delta(), noise, seed, i + 1)}});
  }
  return c;
}

}  // namespace

TEST(ReconstructFrame, IdentityRigNoDegradation) {
  const RigSpec rig = small_pair(0.0);
  SceneSpec s;
  s.quads.push_back(fronto_quad(Vec3(0, 0, 1), 2, 2, noise_texture(5, 3, 2, {0.3f, 0.3f, 0.3f}, {0.7f, 0.7f, 0.7f})));
  const Reconstruction r = reconstruct_frame(small_captures(rig, s, NoiseModel{}, 1), rig);
  const LinearImage truth = render(s, rig.target_camera(), rig.target_pose(), 2);
  const Mask inner = [&] {
    Mask m(256, 192, 1, 0);
    for (int y = 20; y < 172; ++y)
      for (int x = 20; x < 236; ++x) m(x, y) = 1;
    return m;
  }();
  EXPECT_GT(psnr(truth, r.image, inner), 50.0);
  EXPECT_EQ(r.diagnostics["details"].size(), 1u);
  EXPECT_TRUE(r.diagnostics["details"][0].contains("valid_fraction"));
  EXPECT_TRUE(r.diagnostics["details"][0].contains("mean_confidence"));
}

TEST(ReconstructFrame, DeterministicAcrossThreads) {
  const RigSpec rig = small_pair(0.01);
  const SceneSpec s = textured_plane(1.2, 1, 1);
  const Captures c = small_captures(rig, s, noise_preset("desk-g1"), 9);
  set_thread_count(1);
  const Reconstruction a = reconstruct_frame(c, rig);
  set_thread_count(4);
  const Reconstruction b = reconstruct_frame(c, rig);
  set_thread_count(1);
  EXPECT_TRUE(a.image == b.image);
  EXPECT_TRUE(a.depth == b.depth);
  EXPECT_EQ(a.diagnostics.dump(), b.diagnostics.dump());
}

TEST(ReconstructFrame, CaptureCountMismatch) {
  const RigSpec rig = small_pair(0.01);
  Captures c = small_captures(rig, textured_plane(1, 1, 1), NoiseModel{}, 1);
  c.details.clear();
  EXPECT_ANY_THROW(reconstruct_frame(c, rig));
}
