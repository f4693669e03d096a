#include <cmath>
#include <set>
#include <vector>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "gen.hpp"
#include "glassesim/error.hpp"
#include "glassesim/rig.hpp"
#include "glassesim/units.hpp"

using namespace glassesim;

namespace {

CameraSpec make_camera(double f, double p, int w, int h) {
  CameraSpec c;
  c.lens = {f, f / 2, 1.0};
  c.sensor = {p, w, h, BayerPattern::RGGB, 12};
  c.coc_diameter = 2 * p;
  return c;
}

// Guide with exactly 60 x 40 degree field of view.
CameraSpec wide_guide() {
  const double f = 4e-3, p = 1e-6;
  CameraSpec c = make_camera(f, p, 2, 2);
  c.sensor.width_px = static_cast<int>(std::lround(2 * f * std::tan(deg_to_rad(30)) / p));
  c.sensor.height_px = static_cast<int>(std::lround(2 * f * std::tan(deg_to_rad(20)) / p));
  return c;
}

double yaw_of(const Pose& p) {
  const Vec3 b = p.rotation.col(2);
  return std::atan2(b.x(), b.z());
}

double pitch_of(const Pose& p) {
  const Vec3 b = p.rotation.col(2);
  return std::atan2(b.y(), std::hypot(b.x(), b.z()));
}

// Two cameras with identical intrinsics, detail translated by `baseline` along x.
RigSpec stereo_pair(double baseline, double f = 1.925e-3, double p = 1.25e-6) {
  RigSpec rig;
  rig.guide = {make_camera(f, p, 1000, 800), Pose{}};
  rig.details = {{make_camera(f, p, 1000, 800), Pose{Mat3::Identity(), Vec3(baseline, 0, 0)}}};
  return rig;
}

bool in_frame(const CameraSpec& c, const Vec2& px) {
  return px.x() >= -0.5 && px.y() >= -0.5 && px.x() <= c.sensor.width_px - 0.5 &&
         px.y() <= c.sensor.height_px - 0.5;
}

Vec3 point_on_target_ray(const RigSpec& rig, const Vec2& target_px, double depth) {
  const CameraSpec t = rig.target_camera();
  const Mat3 k = intrinsics(t);
  const Vec3 cam = k.inverse() * Vec3(target_px.x(), target_px.y(), 1.0);
  return rig.target_pose().to_rig(cam * (depth / cam.z()));
}

}  // namespace

TEST(Pose, YawPitchOrthonormalProperty) {
  testgen::Gen g(31);
  for (int n = 0; n < testgen::kCases; ++n) {
    const Pose p = Pose::from_yaw_pitch(g.uniform(-3, 3), g.uniform(-1.5, 1.5));
    const Mat3 e = p.rotation.transpose() * p.rotation - Mat3::Identity();
    EXPECT_LT(e.cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_NEAR(p.rotation.determinant(), 1.0, 1e-9);
  }
}

TEST(Pose, YawPitchDirections) {
  const Pose p = Pose::from_yaw_pitch(deg_to_rad(10), deg_to_rad(5));
  EXPECT_NEAR(rad_to_deg(yaw_of(p)), 10.0, 1e-9);
  EXPECT_NEAR(rad_to_deg(pitch_of(p)), 5.0, 1e-9);
}

TEST(Pose, RejectsReflection) {
  nlohmann::json j = Pose{};
  j["rotation"][0][0] = -1.0;
  EXPECT_ANY_THROW(j.get<Pose>());
}

TEST(PlanTiling, SingleTileIsGuide) {
  const CameraSpec g = wide_guide();
  const RigSpec rig = plan_tiling(g, Pose{}, 1, 1, 0.0, {Vec3::Zero()});
  ASSERT_EQ(rig.details.size(), 1u);
  EXPECT_LT((rig.details[0].pose.rotation - Mat3::Identity()).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_NEAR(rig.details[0].camera.hfov(), g.hfov(), 2 * g.ifov());
  EXPECT_NEAR(rig.details[0].camera.vfov(), g.vfov(), 2 * g.ifov());
}

TEST(PlanTiling, ThreeByThreeSixtyDegrees) {
  const CameraSpec g = wide_guide();
  ASSERT_NEAR(rad_to_deg(g.hfov()), 60.0, 0.01);
  std::vector<Vec3> pos;
  for (int i = 0; i < 9; ++i) pos.emplace_back((i - 4) * 8e-3, 0, 0);
  const RigSpec rig = plan_tiling(g, Pose{}, 3, 3, deg_to_rad(2.0), pos, 4);
  const double expect[3] = {-20.0, 0.0, 20.0};
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      const auto& d = rig.details[r * 3 + c];
      EXPECT_NEAR(rad_to_deg(yaw_of(d.pose)), expect[c], 0.01);
      EXPECT_NEAR(rad_to_deg(d.camera.hfov()), 22.0, 0.02);
      EXPECT_GE(rad_to_deg(d.camera.hfov()), 22.0 - 1e-9);
      EXPECT_NEAR(rad_to_deg(d.camera.vfov()), 40.0 / 3 + 2.0, 0.02);
    }
  }
}

TEST(PlanTiling, TwoTilesSplitHorizontal) {
  const CameraSpec g = wide_guide();
  const RigSpec rig = plan_tiling(g, Pose{}, 1, 2, 0.0, {Vec3(-5e-3, 0, 0), Vec3(5e-3, 0, 0)}, 4);
  ASSERT_EQ(rig.details.size(), 2u);
  EXPECT_NEAR(rad_to_deg(yaw_of(rig.details[0].pose)), -15.0, 0.01);
  EXPECT_NEAR(rad_to_deg(yaw_of(rig.details[1].pose)), 15.0, 0.01);
  for (const auto& d : rig.details) {
    EXPECT_NEAR(d.camera.hfov(), deg_to_rad(30.0), 2 * d.camera.ifov());
    EXPECT_NEAR(d.camera.vfov(), g.vfov(), 2 * g.ifov());
    EXPECT_NEAR(pitch_of(d.pose), 0.0, 1e-12);
  }
}

TEST(PlanTiling, OverlapTooLarge) {
  EXPECT_THROW(plan_tiling(wide_guide(), Pose{}, 1, 2, deg_to_rad(40), {Vec3(-1, 0, 0), Vec3(1, 0, 0)}),
               ConfigError);
}

TEST(PlanTiling, DuplicatePositions) {
  EXPECT_THROW(plan_tiling(wide_guide(), Pose{}, 1, 2, 0.0, {Vec3::Zero(), Vec3::Zero()}), ConfigError);
}

TEST(Coverage, MinDistanceFormula) {
  const RigSpec rig = plan_tiling(wide_guide(), Pose{}, 1, 2, deg_to_rad(2.0),
                                  {Vec3(-5e-3, 0, 0), Vec3(5e-3, 0, 0)});
  const double d = min_covered_distance(rig);
  EXPECT_NEAR(d, 0.01 / (2 * std::tan(deg_to_rad(1.0))), 1e-12);
  EXPECT_NEAR(d, 0.286, 0.001);
  const RigSpec twice = plan_tiling(wide_guide(), Pose{}, 1, 2, deg_to_rad(2.0),
                                    {Vec3(-10e-3, 0, 0), Vec3(10e-3, 0, 0)});
  EXPECT_NEAR(min_covered_distance(twice), 2 * d, 1e-12);
}

TEST(Coverage, CoincidentAndNoOverlap) {
  const RigSpec rig = plan_tiling(wide_guide(), Pose{}, 1, 2, deg_to_rad(2.0),
                                  {Vec3(0, 0, 0), Vec3(0, 1e-3, 0)});
  EXPECT_EQ(min_covered_distance(rig), 0.0);
  const RigSpec none = plan_tiling(wide_guide(), Pose{}, 1, 2, 0.0, {Vec3(-1e-3, 0, 0), Vec3(1e-3, 0, 0)});
  EXPECT_TRUE(std::isinf(min_covered_distance(none)));
}

TEST(Epipolar, ZeroBaselineDegenerate) {
  const RigSpec rig = stereo_pair(0.0);
  const auto s = epipolar_segment(rig, 0, Vec2(321.3, 456.7), 0.3, 100.0);
  ASSERT_FALSE(s.empty);
  EXPECT_LT(s.length(), 1e-9);
}

TEST(Epipolar, PinholeDisparity) {
  const double f = 1.925e-3, p = 1.25e-6, b = 0.01;
  const RigSpec rig = stereo_pair(b, f, p);
  const Vec2 c(499.5, 399.5);
  const auto s = epipolar_segment(rig, 0, c, 0.3, 100.0);
  ASSERT_FALSE(s.empty);
  const double dn = f * b / (0.3 * p), df = f * b / (100.0 * p);
  EXPECT_NEAR(dn, 51.3, 0.05);
  EXPECT_NEAR(df, 0.154, 0.001);
  EXPECT_NEAR(c.x() - s.near_point.x(), dn, 1e-6);
  EXPECT_NEAR(c.x() - s.far_point.x(), df, 1e-6);
  EXPECT_NEAR(s.length(), 51.2, 0.05);
  EXPECT_DOUBLE_EQ(s.tolerance, kDefaultEpipolarTolerance);
}

TEST(Epipolar, FarLimitMatchesPrewarp) {
  const RigSpec rig = rig_preset("eyebrow-3x3");
  testgen::Gen g(32);
  for (int n = 0; n < 50; ++n) {
    const int i = g.integer(0, 8);
    const Vec2 t(g.uniform(0, 3071), g.uniform(0, 3071));
    const auto s = epipolar_segment(rig, i, t, 0.3, 1e6);
    if (s.empty) continue;
    const Vec3 q = prewarp_homography(rig, i, 1e6).inverse() * Vec3(t.x(), t.y(), 1.0);
    EXPECT_LT((s.far_point - q.hnormalized()).norm(), 1e-6);
  }
}

TEST(Epipolar, ContainmentProperty) {
  const RigSpec rig = rig_preset("eyebrow-3x3");
  const CameraSpec t = rig.target_camera();
  testgen::Gen g(33);
  int checked = 0;
  for (int n = 0; n < 10000; ++n) {
    const int i = g.integer(0, 8);
    const Vec2 px(g.uniform(0, t.sensor.width_px - 1), g.uniform(0, t.sensor.height_px - 1));
    const double z = 1.0 / g.uniform(1.0 / 100.0, 1.0 / 0.3);
    const Vec3 x = point_on_target_ray(rig, px, z);
    const auto& d = rig.details[i];
    const auto q = project(d.camera, d.pose, x);
    if (!q || !in_frame(d.camera, *q)) continue;
    const auto s = epipolar_segment(rig, i, px, 0.3, 100.0);
    ASSERT_FALSE(s.empty);
    EXPECT_LT(s.distance_to_line(*q), 0.5);
    EXPECT_LT(s.distance_to_segment(*q), 0.5);
    ++checked;
  }
  EXPECT_GT(checked, 500);
}

TEST(Prewarp, IdentityForSameCamera) {
  const Mat3 h = prewarp_homography(stereo_pair(0.0), 0, 100.0);
  EXPECT_LT((h / h(2, 2) - Mat3::Identity()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Prewarp, RotationOnlyIsDepthFree) {
  RigSpec rig = stereo_pair(0.0);
  rig.details[0].pose = Pose::from_yaw_pitch(0.1, -0.05);
  const Mat3 a = prewarp_homography(rig, 0, 1.0), b = prewarp_homography(rig, 0, 1000.0);
  EXPECT_LT((a / a(2, 2) - b / b(2, 2)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Prewarp, MatchesBruteForceProjector) {
  const RigSpec rig = rig_preset("eyebrow-3x3");
  const CameraSpec t = rig.target_camera();
  testgen::Gen g(34);
  for (double plane : {1.0, 100.0}) {
    for (int i = 0; i < 9; ++i) {
      const Mat3 h = prewarp_homography(rig, i, plane);
      for (int n = 0; n < 40; ++n) {
        const Vec2 px(g.uniform(0, t.sensor.width_px - 1), g.uniform(0, t.sensor.height_px - 1));
        const auto q = project(rig.details[i].camera, rig.details[i].pose, point_on_target_ray(rig, px, plane));
        if (!q) continue;
        const Vec2 back = (h * Vec3(q->x(), q->y(), 1.0)).hnormalized();
        EXPECT_LT((back - px).norm(), 1e-6);
      }
    }
  }
}

TEST(Prewarp, DisagreementScalesWithBaselineOverDepth) {
  const double f = 1.925e-3, p = 1.25e-6, b = 0.01;
  const RigSpec rig = stereo_pair(b, f, p);
  const Vec3 q(500, 400, 1);
  const Vec2 a = (prewarp_homography(rig, 0, 100.0) * q).hnormalized();
  const Vec2 c = (prewarp_homography(rig, 0, 1.0) * q).hnormalized();
  EXPECT_NEAR((a - c).norm(), f * b / p * (1.0 - 1.0 / 100.0), 1e-6);
}

TEST(Prewarp, ConvergesToRotationOnly) {
  const RigSpec rig = rig_preset("eyebrow-3x3");
  RigSpec rot = rig;
  for (auto& d : rot.details) d.pose.center = rig.guide.pose.center;
  double prev = 1e300;
  for (double z : {1e2, 1e4, 1e6}) {
    double worst = 0.0;
    for (int i = 0; i < 9; ++i) {
      const Mat3 a = prewarp_homography(rig, i, z), r = prewarp_homography(rot, i, z);
      for (const Vec3 q : {Vec3(0, 0, 1), Vec3(1199, 1199, 1), Vec3(600, 600, 1)})
        worst = std::max(worst, ((a * q).hnormalized() - (r * q).hnormalized()).norm());
    }
    EXPECT_LT(worst, prev);
    prev = worst;
  }
  EXPECT_LT(prev, 1e-3);
}

TEST(Prewarp, PlaneBehindCamera) {
  EXPECT_THROW(prewarp_homography(stereo_pair(0.01), 0, -1.0), GeometryError);
}

TEST(SweepHomography, MapsPlanePointsProperty) {
  const RigSpec rig = rig_preset("eyebrow-3x3");
  const CameraSpec t = rig.target_camera();
  testgen::Gen g(35);
  for (int n = 0; n < 500; ++n) {
    const int i = g.integer(0, 8);
    const double rho = g.uniform(0.01, 3.3);
    const Vec2 px(g.uniform(0, t.sensor.width_px - 1), g.uniform(0, t.sensor.height_px - 1));
    const auto q = project(rig.details[i].camera, rig.details[i].pose, point_on_target_ray(rig, px, 1.0 / rho));
    ASSERT_TRUE(q.has_value());
    const Vec2 h = (sweep_homography(rig, i, rho) * Vec3(px.x(), px.y(), 1.0)).hnormalized();
    EXPECT_LT((h - *q).norm(), 1e-6);
  }
}

TEST(Roi, IdentityRigFullFrame) {
  const RigSpec rig = rig_preset("identity");
  const CameraSpec t = rig.target_camera();
  const auto packs = roi_for_tiles(rig, {{0, 0, t.sensor.width_px, t.sensor.height_px}}, 0, 0.3, 100.0);
  ASSERT_EQ(packs.size(), 1u);
  ASSERT_EQ(packs[0].entries.size(), 1u);
  const PixelRect full{0, 0, rig.details[0].camera.sensor.width_px, rig.details[0].camera.sensor.height_px};
  EXPECT_EQ(packs[0].entries[0].source, full);
}

TEST(Roi, CornerTileSeenByFewDetails) {
  RigSpec rig = rig_preset("eyebrow-3x3");
  const PixelRect corner{0, 0, 256, 256};
  const auto packs = roi_for_tiles(rig, {corner}, 0, 0.8, 100.0);
  ASSERT_EQ(packs.size(), 1u);
  const auto& e = packs[0].entries;
  EXPECT_GE(e.size(), 1u);
  EXPECT_LE(e.size(), 4u);
  // Cone-intersection oracle: any frustum sample that lands in a detail needs an ROI containing it.
  std::set<int> seen;
  for (int i = 0; i < 9; ++i) {
    const auto& d = rig.details[i];
    for (double z : {0.8, 2.0, 10.0, 100.0}) {
      for (int v = 0; v <= 16; ++v) {
        for (int u = 0; u <= 16; ++u) {
          const Vec2 px(-0.5 + u * 16.0, -0.5 + v * 16.0);
          const auto q = project(d.camera, d.pose, point_on_target_ray(rig, px, z));
          if (!q || !in_frame(d.camera, *q)) continue;
          seen.insert(i);
          bool contained = false;
          for (const auto& r : e) {
            if (r.detail_index != i) continue;
            contained = q->x() >= r.source.x - 0.5 && q->x() <= r.source.x + r.source.width - 0.5 + 1e-9 &&
                        q->y() >= r.source.y - 0.5 && q->y() <= r.source.y + r.source.height - 0.5 + 1e-9;
          }
          EXPECT_TRUE(contained) << "detail " << i;
        }
      }
    }
  }
  EXPECT_EQ(seen.size(), e.size());
}

TEST(Roi, PackingContractProperty) {
  testgen::Gen g(36);
  for (int n = 0; n < 100; ++n) {
    RoiPack pack;
    long long area = 0;
    const int k = g.integer(0, 12);
    for (int i = 0; i < k; ++i) {
      RoiEntry e;
      e.detail_index = i;
      e.source = {g.integer(0, 500), g.integer(0, 500), g.integer(1, 300), g.integer(1, 300)};
      area += e.source.area();
      pack.entries.push_back(e);
    }
    shelf_pack(pack);
    EXPECT_GE(static_cast<long long>(pack.canvas_width) * pack.canvas_height, area);
    for (std::size_t a = 0; a < pack.entries.size(); ++a) {
      const auto& pa = pack.entries[a].placement;
      EXPECT_EQ(pa.width, pack.entries[a].source.width);
      EXPECT_EQ(pa.height, pack.entries[a].source.height);
      EXPECT_GE(pa.x, 0);
      EXPECT_GE(pa.y, 0);
      EXPECT_LE(pa.x + pa.width, pack.canvas_width);
      EXPECT_LE(pa.y + pa.height, pack.canvas_height);
      for (std::size_t b = a + 1; b < pack.entries.size(); ++b)
        EXPECT_TRUE(intersect(pa, pack.entries[b].placement).empty());
    }
  }
}

TEST(TileGrid, CoversImageWithOverlap) {
  const auto tiles = tile_grid(1000, 700, 256, 32);
  std::vector<int> hits(1000 * 700, 0);
  for (const auto& t : tiles) {
    EXPECT_LE(t.width, 256);
    for (int y = t.y; y < t.y + t.height; ++y)
      for (int x = t.x; x < t.x + t.width; ++x) ++hits[y * 1000 + x];
  }
  for (int h : hits) EXPECT_GE(h, 1);
}

TEST(RigJson, RoundTrip) {
  const RigSpec rig = rig_preset("eyebrow-3x3");
  const nlohmann::json j = rig;
  const RigSpec back = j.get<RigSpec>();
  EXPECT_EQ(nlohmann::json(back), j);
  ASSERT_EQ(back.details.size(), 9u);
  EXPECT_EQ(back.target_scale, 4);
}

TEST(EyebrowPreset, CoversFromPointEightMetres) {
  EXPECT_LE(min_covered_distance(rig_preset("eyebrow-3x3")), 0.8);
  EXPECT_LE(min_covered_distance(rig_preset("eyebrow-2x1")), 0.8);
}
