#include <cmath>
#include <limits>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "gen.hpp"
#include "glassesim/error.hpp"
#include "glassesim/parallel.hpp"
#include "glassesim/scene.hpp"

using namespace glassesim;

namespace {

CameraSpec small_camera(int w = 200, int h = 150) {
  CameraSpec c;
  c.lens = {4e-3, 2e-3, 1.0};
  c.sensor = {5e-6, w, h, BayerPattern::RGGB, 12};
  c.coc_diameter = 1e-5;
  return c;
}

// Integral of the +-1 square wave (+1 on even cells of size `cell`, starting at `origin`) over [a, b].
double square_wave_integral(double a, double b, double origin, double cell) {
  double sum = 0.0, x = a;
  while (x < b) {
    const double k = std::floor((x - origin) / cell);
    const double end = std::min(b, origin + (k + 1) * cell);
    sum += (static_cast<long long>(k) % 2 == 0 ? 1.0 : -1.0) * (end - x);
    x = end;
  }
  return sum;
}

}  // namespace

TEST(Render, EmptySceneIsBackground) {
  SceneSpec s;
  s.background = {0.1f, 0.2f, 0.3f};
  const auto img = render(s, small_camera(), Pose{}, 2);
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < 3; ++c) EXPECT_FLOAT_EQ(img(x, y, c), s.background[c]);
}

TEST(Render, ConstantQuadFillingView) {
  SceneSpec s;
  s.quads.push_back(fronto_quad(Vec3(0, 0, 2), 10, 10, constant_texture({0.4f, 0.5f, 0.6f})));
  const auto img = render(s, small_camera(), Pose{}, 3);
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) EXPECT_NEAR(img(x, y, 1), 0.5f, 1e-6);
}

TEST(Render, CheckerAgainstAnalyticFootprint) {
  const float a = 0.8f, b = 0.2f;
  const double qx = 0.03, qy = -0.02, z = 2.0, w = 1.6, h = 1.2;
  SceneSpec s;
  s.quads.push_back(fronto_quad(Vec3(qx, qy, z), w, h, checker_texture(8, 6, {a, a, a}, {b, b, b})));
  const CameraSpec cam = small_camera();
  const auto img = render(s, cam, Pose{}, 4);
  const double scale = cam.sensor.pixel_pitch * z / cam.lens.focal_length;  // m per px on the plane
  const double cx = (cam.sensor.width_px - 1) / 2.0, cy = (cam.sensor.height_px - 1) / 2.0;
  double err = 0.0;
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const double x0 = (x - 0.5 - cx) * scale, x1 = x0 + scale;
      const double y0 = (y - 0.5 - cy) * scale, y1 = y0 + scale;
      const double su = square_wave_integral(x0, x1, qx - w / 2, w / 8);
      const double sv = square_wave_integral(y0, y1, qy - h / 2, h / 6);
      const double want = (a + b) / 2.0 + (a - b) / 2.0 * su * sv / (scale * scale);
      err += std::abs(img(x, y, 0) - want);
    }
  }
  EXPECT_LT(err / (img.width() * img.height()), 1.0 / 255.0);
}

TEST(Render, DeterministicAcrossThreads) {
  const SceneSpec s = three_plane_scene(7);
  const CameraSpec cam = small_camera();
  const Pose p = Pose::from_yaw_pitch(0.05, -0.02);
  set_thread_count(1);
  const auto a = render(s, cam, p, 2);
  set_thread_count(4);
  const auto b = render(s, cam, p, 2);
  const auto c = render(s, cam, p, 2);
  set_thread_count(1);
  EXPECT_TRUE(a == b);
  EXPECT_TRUE(b == c);
}

TEST(Render, EnergyBoundProperty) {
  testgen::Gen g(41);
  for (int n = 0; n < 20; ++n) {
    SceneSpec s;
    float vmax = 0.0f;
    for (int k = 0; k < 3; ++k) {
      const float lo = static_cast<float>(g.uniform(0, 0.3)), hi = static_cast<float>(g.uniform(0.3, 1));
      auto t = noise_texture(g.integer(1, 1000), g.integer(1, 8), g.integer(1, 5), {lo, lo, lo}, {hi, hi, hi});
      vmax = std::max(vmax, t->max_value());
      s.quads.push_back(fronto_quad(Vec3(g.uniform(-0.3, 0.3), g.uniform(-0.3, 0.3), g.uniform(1, 5)),
                                    g.uniform(0.1, 2), g.uniform(0.1, 2), t));
    }
    const auto img = render(s, small_camera(64, 48), Pose{}, 3);
    for (float v : img.values()) EXPECT_LE(v, vmax);
  }
}

TEST(Render, SupersampleRange) {
  EXPECT_THROW(render(SceneSpec{}, small_camera(), Pose{}, 0), DomainError);
  EXPECT_THROW(render(SceneSpec{}, small_camera(), Pose{}, 9), DomainError);
}

TEST(Depth, SinglePlane) {
  SceneSpec s;
  s.quads.push_back(fronto_quad(Vec3(0, 0, 2), 0.2, 0.2, constant_texture({1, 1, 1})));
  const auto d = ground_truth_depth(s, small_camera(), Pose{});
  int hits = 0;
  for (int y = 0; y < d.height(); ++y) {
    for (int x = 0; x < d.width(); ++x) {
      if (std::isinf(d(x, y))) continue;
      EXPECT_NEAR(d(x, y), 2.0f, 1e-6);
      ++hits;
    }
  }
  // 0.2 m at 2 m is 80 px across.
  EXPECT_EQ(hits, 80 * 80);
}

TEST(Depth, Occlusion) {
  SceneSpec s;
  s.quads.push_back(fronto_quad(Vec3(0, 0, 3), 10, 10, constant_texture({1, 1, 1})));
  s.quads.push_back(fronto_quad(Vec3(0.1, 0, 1), 0.1, 0.1, constant_texture({1, 1, 1})));
  const CameraSpec cam = small_camera();
  const auto d = ground_truth_depth(s, cam, Pose{});
  const auto idx = quad_index_map(s, cam, Pose{});
  const Mat3 k = intrinsics(cam);
  for (int y = 0; y < d.height(); ++y) {
    for (int x = 0; x < d.width(); ++x) {
      const Vec3 r = k.inverse() * Vec3(x, y, 1);
      const bool near = std::abs(r.x() - 0.1) < 0.05 && std::abs(r.y()) < 0.05;
      EXPECT_FLOAT_EQ(d(x, y), near ? 1.0f : 3.0f);
      EXPECT_EQ(idx(x, y), near ? 1 : 0);
    }
  }
}

TEST(Depth, SlantedPlaneInverseDepthLinear) {
  SceneSpec s;
  Quad q = fronto_quad(Vec3(0.05, -0.03, 2.0), 10, 10, constant_texture({1, 1, 1}));
  q.pose = Pose::from_yaw_pitch(0.4, -0.25, q.pose.center);
  s.quads.push_back(q);
  const CameraSpec cam = small_camera();
  const auto d = ground_truth_depth(s, cam, Pose{});
  const Vec3 n = q.pose.rotation.col(2);
  const double dist = n.dot(q.pose.center);
  const Mat3 kinv = intrinsics(cam).inverse();
  for (int y = 0; y < d.height(); y += 7) {
    for (int x = 0; x < d.width(); x += 7) {
      const double inv = n.dot(kinv * Vec3(x, y, 1)) / dist;
      EXPECT_NEAR(d(x, y), 1.0 / inv, 1e-5);
    }
  }
}

TEST(Scene, ReprojectionConsistency) {
  // A small bright patch: its centroid in each view sits at the projection of its centre.
  const RigSpec rig = rig_preset("eyebrow-3x3");
  auto centroid_error = [](const SceneSpec& s, const CameraSpec& cam, const Pose& pose, const Vec3& c) {
    const auto p = project(cam, pose, c);
    const auto img = render(s, cam, pose, 2);
    double sx = 0, sy = 0, sw = 0;
    for (int y = 0; y < img.height(); ++y)
      for (int x = 0; x < img.width(); ++x) {
        const double v = img(x, y, 0);
        sx += v * x;
        sy += v * y;
        sw += v;
      }
    return sw > 0 && p ? std::hypot(sx / sw - p->x(), sy / sw - p->y()) : 1e9;
  };
  for (int i : {0, 4, 8}) {
    const auto& d = rig.details[i];
    const Vec3 dir = pixel_ray(d.camera, d.pose, Vec2(0.4 * d.camera.sensor.width_px, 0.6 * d.camera.sensor.height_px));
    const Vec3 centre = d.pose.center + dir * (1.5 / dir.z());
    SceneSpec s;
    s.quads.push_back(fronto_quad(centre, 0.01, 0.01, constant_texture({1, 1, 1})));
    EXPECT_LT(centroid_error(s, d.camera, d.pose, centre), 0.25) << i;
    EXPECT_LT(centroid_error(s, rig.guide.camera, rig.guide.pose, centre), 0.25) << i;
  }
}

TEST(Scene, JsonRoundTrip) {
  const SceneSpec s = three_plane_scene(7);
  const auto j = scene_to_json(s);
  const SceneSpec back = scene_from_json(j);
  EXPECT_EQ(scene_to_json(back), j);
  const CameraSpec cam = small_camera(64, 48);
  EXPECT_TRUE(render(s, cam, Pose{}, 1) == render(back, cam, Pose{}, 1));
}

TEST(Scene, InvalidQuadRejected) {
  SceneSpec s;
  s.quads.push_back(fronto_quad(Vec3(0, 0, 1), 0.0, 1.0, constant_texture({1, 1, 1})));
  EXPECT_THROW(s.validate(), ConfigError);
}

TEST(Scene, VisibleFromHidesOccludedBackground) {
  const RigSpec rig = rig_preset("eyebrow-3x3");
  const SceneSpec s = three_plane_scene(7);
  const CameraSpec t = rig.target_camera();
  CameraSpec small = t;
  small.sensor.width_px = small.sensor.height_px = 384;
  small.sensor.pixel_pitch *= 8;
  const auto& d = rig.details[4];
  const auto vis = visible_from(s, small, rig.target_pose(), d.camera, d.pose);
  const auto idx = quad_index_map(s, small, rig.target_pose());
  const Mat3 kinv = intrinsics(small).inverse();
  testgen::Gen g(42);
  for (int n = 0; n < 2000; ++n) {
    const int x = g.integer(0, 383), y = g.integer(0, 383);
    if (idx(x, y) < 0) continue;
    const Vec3 dir = rig.target_pose().rotation * (kinv * Vec3(x, y, 1));
    const auto hit = intersect(s, rig.target_pose().center, dir);
    ASSERT_TRUE(hit.has_value());
    const auto q = project(d.camera, d.pose, hit->point);
    bool expect = false;
    if (q && q->x() >= -0.5 && q->y() >= -0.5 && q->x() <= d.camera.sensor.width_px - 0.5 &&
        q->y() <= d.camera.sensor.height_px - 0.5) {
      const Vec3 to = hit->point - d.pose.center;
      const auto first = intersect(s, d.pose.center, to);
      expect = first && first->quad == hit->quad && std::abs(first->depth - 1.0) < 1e-6;
    }
    EXPECT_EQ(vis(x, y) != 0, expect) << x << "," << y;
  }
}
