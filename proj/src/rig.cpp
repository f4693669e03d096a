#include "glassesim/rig.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Dense>

#include "glassesim/error.hpp"

namespace glassesim {

Mat3 yaw_pitch_rotation(double yaw, double pitch) {
  const double cy = std::cos(yaw), sy = std::sin(yaw);
  const double cp = std::cos(pitch), sp = std::sin(pitch);
  Mat3 ry;
  ry << cy, 0, sy, 0, 1, 0, -sy, 0, cy;
  Mat3 rx;  // sends +z towards +y for positive pitch
  rx << 1, 0, 0, 0, cp, sp, 0, -sp, cp;
  return ry * rx;
}

Pose Pose::from_yaw_pitch(double yaw, double pitch, const Vec3& center) {
  return Pose{yaw_pitch_rotation(yaw, pitch), center};
}

void Pose::validate() const {
  const double ortho = (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
  if (!(ortho < 1e-9)) throw ConfigError("pose rotation is not orthonormal");
  if (!(rotation.determinant() > 0.0)) throw ConfigError("pose rotation must have det +1");
  if (!center.allFinite()) throw ConfigError("pose centre must be finite");
}

Mat3 intrinsics(const CameraSpec& camera) {
  const double f = camera.focal_px();
  Mat3 k;
  k << f, 0, 0.5 * (camera.sensor.width_px - 1), 0, f, 0.5 * (camera.sensor.height_px - 1), 0, 0,
      1;
  return k;
}

CameraSpec RigSpec::target_camera() const {
  CameraSpec t = guide.camera;
  t.sensor.pixel_pitch /= target_scale;
  t.sensor.width_px *= target_scale;
  t.sensor.height_px *= target_scale;
  t.coc_diameter /= target_scale;
  return t;
}

namespace {

double half_diagonal_angle(const CameraSpec& c) {
  const double hx = 0.5 * c.sensor.width_px * c.sensor.pixel_pitch;
  const double hy = 0.5 * c.sensor.height_px * c.sensor.pixel_pitch;
  return std::atan(std::hypot(hx, hy) / c.lens.focal_length);
}

}  // namespace

void RigSpec::validate() const {
  guide.camera.validate();
  guide.pose.validate();
  if (rows < 1 || cols < 1) throw ConfigError("rig grid must be at least 1x1");
  if (details.size() != static_cast<std::size_t>(rows) * cols) {
    throw ConfigError("rig has " + std::to_string(details.size()) + " details for a " +
                      std::to_string(rows) + "x" + std::to_string(cols) + " grid");
  }
  if (!(angular_overlap >= 0.0)) throw ConfigError("angular overlap must be >= 0");
  if (!(reference_plane_distance > 0.0)) throw ConfigError("reference plane distance must be > 0");
  if (target_scale < 1) throw ConfigError("target scale must be >= 1");
  const Vec3 guide_axis = guide.pose.rotation.col(2);
  const double guide_half = half_diagonal_angle(guide.camera);
  for (std::size_t i = 0; i < details.size(); ++i) {
    details[i].camera.validate();
    details[i].pose.validate();
    const double angle =
        std::acos(std::clamp(guide_axis.dot(details[i].pose.rotation.col(2)), -1.0, 1.0));
    if (angle >= guide_half + half_diagonal_angle(details[i].camera)) {
      throw ConfigError("detail " + std::to_string(i) + " does not overlap the guide view");
    }
  }
}

void to_json(nlohmann::json& j, const Pose& pose) {
  nlohmann::json rows = nlohmann::json::array();
  for (int r = 0; r < 3; ++r) {
    rows.push_back({pose.rotation(r, 0), pose.rotation(r, 1), pose.rotation(r, 2)});
  }
  j = {{"rotation", rows}, {"center_m", {pose.center.x(), pose.center.y(), pose.center.z()}}};
}

void from_json(const nlohmann::json& j, Pose& pose) {
  const auto& rows = j.at("rotation");
  if (!rows.is_array() || rows.size() != 3) throw ConfigError("rotation must be 3x3");
  for (int r = 0; r < 3; ++r) {
    if (!rows[r].is_array() || rows[r].size() != 3) throw ConfigError("rotation must be 3x3");
    for (int c = 0; c < 3; ++c) pose.rotation(r, c) = rows[r][c].get<double>();
  }
  const auto& center = j.at("center_m");
  if (!center.is_array() || center.size() != 3) throw ConfigError("center_m must have 3 entries");
  for (int k = 0; k < 3; ++k) pose.center[k] = center[k].get<double>();
  pose.validate();
}

namespace {

nlohmann::json camera_json(const RigCamera& c) { return {{"camera", c.camera}, {"pose", c.pose}}; }

RigCamera camera_from_json(const nlohmann::json& j) {
  RigCamera c;
  c.camera = j.at("camera").get<CameraSpec>();
  c.pose = j.at("pose").get<Pose>();
  return c;
}

}  // namespace

void to_json(nlohmann::json& j, const RigSpec& rig) {
  nlohmann::json details = nlohmann::json::array();
  for (const auto& d : rig.details) details.push_back(camera_json(d));
  j = {{"guide", camera_json(rig.guide)},
       {"details", details},
       {"grid", {{"rows", rig.rows}, {"cols", rig.cols}}},
       {"angular_overlap_rad", rig.angular_overlap},
       {"reference_plane_distance_m", rig.reference_plane_distance},
       {"target_scale", rig.target_scale}};
}

void from_json(const nlohmann::json& j, RigSpec& rig) {
  try {
    rig.guide = camera_from_json(j.at("guide"));
    rig.details.clear();
    for (const auto& d : j.at("details")) rig.details.push_back(camera_from_json(d));
    rig.rows = j.at("grid").at("rows").get<int>();
    rig.cols = j.at("grid").at("cols").get<int>();
    rig.angular_overlap = j.value("angular_overlap_rad", 0.0);
    rig.reference_plane_distance = j.value("reference_plane_distance_m", 100.0);
    rig.target_scale = j.value("target_scale", 1);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("rig: ") + e.what());
  }
  rig.validate();
}

std::optional<Vec2> project(const CameraSpec& camera, const Pose& pose, const Vec3& point) {
  const Vec3 pc = pose.to_camera(point);
  if (!(pc.z() > 0.0)) return std::nullopt;
  const Vec3 q = intrinsics(camera) * pc;
  return Vec2(q.x() / q.z(), q.y() / q.z());
}

Vec3 pixel_ray(const CameraSpec& camera, const Pose& pose, const Vec2& pixel) {
  const Vec3 d = intrinsics(camera).inverse() * Vec3(pixel.x(), pixel.y(), 1.0);
  return (pose.rotation * d).normalized();
}

namespace {

int even_ceil(double v) {
  int n = static_cast<int>(std::ceil(v - 1e-6));
  return n + (n & 1);
}

}  // namespace

RigSpec plan_tiling(const CameraSpec& guide, const Pose& guide_pose, int rows, int cols,
                    double angular_overlap, const std::vector<Vec3>& detail_positions,
                    int target_scale) {
  guide.validate();
  guide_pose.validate();
  if (rows < 1 || cols < 1) throw ConfigError("tiling grid must be at least 1x1");
  if (!(angular_overlap >= 0.0)) throw ConfigError("angular overlap must be >= 0");
  if (target_scale < 1) throw ConfigError("target scale must be >= 1");
  if (detail_positions.size() != static_cast<std::size_t>(rows) * cols) {
    throw ConfigError("need one detail position per grid cell");
  }
  for (std::size_t a = 0; a < detail_positions.size(); ++a) {
    for (std::size_t b = a + 1; b < detail_positions.size(); ++b) {
      if (detail_positions[a] == detail_positions[b]) {
        throw ConfigError("detail positions must be distinct");
      }
    }
  }
  const double hfov = guide.hfov();
  const double vfov = guide.vfov();
  const double tile_h = hfov / cols + angular_overlap;
  const double tile_v = vfov / rows + angular_overlap;
  if ((cols > 1 && tile_h > hfov) || (rows > 1 && tile_v > vfov) || tile_h >= kPi ||
      tile_v >= kPi) {
    throw ConfigError("angular overlap too large: tiles exceed the guide field of view");
  }

  CameraSpec detail = guide;
  detail.sensor.pixel_pitch = guide.sensor.pixel_pitch / target_scale;
  detail.coc_diameter = guide.coc_diameter / target_scale;
  const double f = guide.lens.focal_length;
  detail.sensor.width_px = even_ceil(2.0 * f * std::tan(0.5 * tile_h) / detail.sensor.pixel_pitch);
  detail.sensor.height_px =
      even_ceil(2.0 * f * std::tan(0.5 * tile_v) / detail.sensor.pixel_pitch);

  RigSpec rig;
  rig.guide = {guide, guide_pose};
  rig.rows = rows;
  rig.cols = cols;
  rig.angular_overlap = angular_overlap;
  rig.target_scale = target_scale;
  for (int r = 0; r < rows; ++r) {
    const double pitch = -0.5 * vfov + (r + 0.5) * vfov / rows;
    for (int c = 0; c < cols; ++c) {
      const double yaw = -0.5 * hfov + (c + 0.5) * hfov / cols;
      Pose pose{guide_pose.rotation * yaw_pitch_rotation(yaw, pitch),
                detail_positions[static_cast<std::size_t>(r) * cols + c]};
      rig.details.push_back({detail, pose});
    }
  }
  rig.validate();
  return rig;
}

RigSpec eyebrow_rig(const EyebrowRigOptions& o) {
  CameraSpec guide;
  guide.lens = {o.focal_length, o.pupil, 1.0};
  guide.sensor = {o.guide_pitch, o.guide_px, o.guide_px, BayerPattern::RGGB, 12};
  guide.coc_diameter = 2.0 * o.guide_pitch;

  const double detail_pitch = o.guide_pitch / o.target_scale;
  const double tile = 2.0 * std::atan(0.5 * o.detail_px * detail_pitch / o.focal_length);
  const double overlap = tile - guide.hfov() / std::max(o.rows, o.cols);
  if (overlap < 0.0) throw ConfigError("detail sensors too small to tile the guide view");

  const int n = o.rows * o.cols;
  std::vector<Vec3> positions;
  for (int i = 0; i < n; ++i) {
    positions.emplace_back((i - 0.5 * (n - 1)) * o.spacing, -o.guide_offset, 0.0);
  }
  RigSpec rig = plan_tiling(guide, Pose{}, o.rows, o.cols, overlap, positions, o.target_scale);
  return rig;
}

RigSpec rig_preset(const std::string& name) {
  if (name == "eyebrow-3x3" || name == "default") return eyebrow_rig();
  if (name == "eyebrow-2x1") {
    EyebrowRigOptions o;
    o.rows = 1;
    o.cols = 2;
    o.detail_px = 1600;
    return eyebrow_rig(o);
  }
  if (name == "identity") {
    CameraSpec guide;
    guide.lens = {3.8e-3, 1.1e-3, 1.0};
    guide.sensor = {5e-6, 768, 768, BayerPattern::RGGB, 12};
    guide.coc_diameter = 10e-6;
    return plan_tiling(guide, Pose{}, 1, 1, 0.0, {Vec3::Zero()}, 4);
  }
  throw ConfigError("unknown rig preset '" + name + "'");
}

double min_covered_distance(const RigSpec& rig) {
  if (!(rig.angular_overlap > 0.0)) return std::numeric_limits<double>::infinity();
  const Vec3 x_axis = rig.guide.pose.rotation.col(0);
  const Vec3 y_axis = rig.guide.pose.rotation.col(1);
  const double denom = 2.0 * std::tan(0.5 * rig.angular_overlap);
  double d = 0.0;
  auto center = [&](int r, int c) {
    return rig.details[static_cast<std::size_t>(r) * rig.cols + c].pose.center;
  };
  for (int r = 0; r < rig.rows; ++r) {
    for (int c = 0; c < rig.cols; ++c) {
      if (c + 1 < rig.cols) {
        d = std::max(d, std::abs((center(r, c + 1) - center(r, c)).dot(x_axis)) / denom);
      }
      if (r + 1 < rig.rows) {
        d = std::max(d, std::abs((center(r + 1, c) - center(r, c)).dot(y_axis)) / denom);
      }
    }
  }
  return d;
}

namespace {

struct SweepTerms {
  Mat3 kd_m;  // K_d R_d^T R_t K_t^-1
  Vec3 kd_t;  // K_d R_d^T (C_t - C_d)
};

SweepTerms sweep_terms(const RigSpec& rig, int detail_index) {
  if (detail_index < 0 || detail_index >= static_cast<int>(rig.details.size())) {
    throw DomainError("detail index out of range");
  }
  const RigCamera& d = rig.details[static_cast<std::size_t>(detail_index)];
  const Pose& t = rig.target_pose();
  const Mat3 kd = intrinsics(d.camera);
  const Mat3 kt_inv = intrinsics(rig.target_camera()).inverse();
  return {kd * d.pose.rotation.transpose() * t.rotation * kt_inv,
          kd * d.pose.rotation.transpose() * (t.center - d.pose.center)};
}

}  // namespace

Mat3 sweep_homography(const RigSpec& rig, int detail_index, double rho) {
  const SweepTerms s = sweep_terms(rig, detail_index);
  Mat3 h = s.kd_m;
  h.col(2) += rho * s.kd_t;
  return h;
}

Mat3 prewarp_homography(const RigSpec& rig, int detail_index, double plane_distance) {
  if (!(plane_distance > 0.0)) throw GeometryError("plane distance must be > 0");
  const RigCamera& d = rig.details.at(static_cast<std::size_t>(detail_index));
  const double detail_z = rig.target_pose().to_camera(d.pose.center).z();
  if (detail_z >= plane_distance) {
    throw GeometryError("reference plane is behind detail camera " + std::to_string(detail_index));
  }
  const Mat3 h = sweep_homography(rig, detail_index, 1.0 / plane_distance);
  const Eigen::FullPivLU<Mat3> lu(h);
  if (!lu.isInvertible()) throw GeometryError("degenerate prewarp homography");
  Mat3 inv = lu.inverse();
  return inv / inv(2, 2);
}

double EpipolarSegment::distance_to_line(const Vec2& p) const {
  const Vec2 dir = far_point - near_point;
  const double len = dir.norm();
  if (len == 0.0) return (p - near_point).norm();
  const Vec2 rel = p - near_point;
  return std::abs(dir.x() * rel.y() - dir.y() * rel.x()) / len;
}

double EpipolarSegment::distance_to_segment(const Vec2& p) const {
  const Vec2 dir = far_point - near_point;
  const double len2 = dir.squaredNorm();
  if (len2 == 0.0) return (p - near_point).norm();
  const double t = std::clamp((p - near_point).dot(dir) / len2, 0.0, 1.0);
  return (p - (near_point + t * dir)).norm();
}

EpipolarSegment epipolar_segment(const RigSpec& rig, int detail_index, const Vec2& target_pixel,
                                 double near, double far, double tolerance) {
  if (!(near > 0.0 && far > near)) throw DomainError("depth range must satisfy 0 < near < far");
  const SweepTerms s = sweep_terms(rig, detail_index);
  const CameraSpec& cam = rig.details[static_cast<std::size_t>(detail_index)].camera;
  const Vec3 a = s.kd_m * Vec3(target_pixel.x(), target_pixel.y(), 1.0);
  const Vec3& b = s.kd_t;

  // Each visibility condition is linear in rho: alpha + rho * beta >= 0.
  double lo = 1.0 / far;
  double hi = 1.0 / near;
  auto clip = [&](double alpha, double beta, double margin) {
    if (beta == 0.0) {
      if (alpha < margin) {
        lo = 1.0;
        hi = 0.0;
      }
      return;
    }
    const double root = (margin - alpha) / beta;
    if (beta > 0.0) lo = std::max(lo, root);
    else hi = std::min(hi, root);
  };
  clip(a.z(), b.z(), 1e-12);
  const double front_lo = lo;
  const double front_hi = hi;

  EpipolarSegment seg;
  seg.tolerance = tolerance;
  if (front_lo > front_hi) return seg;
  auto at = [&](double rho) {
    const Vec3 q = a + rho * b;
    return Vec2(q.x() / q.z(), q.y() / q.z());
  };
  seg.near_point = at(std::min(1.0 / near, front_hi));
  seg.far_point = at(std::max(1.0 / far, front_lo));

  const double w = cam.sensor.width_px;
  const double h = cam.sensor.height_px;
  clip(a.x() + 0.5 * a.z(), b.x() + 0.5 * b.z(), 0.0);            // x >= -0.5
  clip((w - 0.5) * a.z() - a.x(), (w - 0.5) * b.z() - b.x(), 0.0);  // x <= w - 0.5
  clip(a.y() + 0.5 * a.z(), b.y() + 0.5 * b.z(), 0.0);
  clip((h - 0.5) * a.z() - a.y(), (h - 0.5) * b.z() - b.y(), 0.0);
  if (lo <= hi) {
    seg.empty = false;
    seg.rho_min = lo;
    seg.rho_max = hi;
  }
  return seg;
}

PixelRect intersect(const PixelRect& a, const PixelRect& b) {
  const int x0 = std::max(a.x, b.x);
  const int y0 = std::max(a.y, b.y);
  const int x1 = std::min(a.x + a.width, b.x + b.width);
  const int y1 = std::min(a.y + a.height, b.y + b.height);
  if (x1 <= x0 || y1 <= y0) return {};
  return {x0, y0, x1 - x0, y1 - y0};
}

std::vector<PixelRect> tile_grid(int width, int height, int tile_size, int overlap) {
  if (tile_size <= overlap || tile_size < 1) throw ConfigError("tile size must exceed overlap");
  auto starts = [&](int extent) {
    std::vector<int> out;
    if (extent <= tile_size) return std::vector<int>{0};
    const int step = tile_size - overlap;
    for (int s = 0;; s += step) {
      if (s + tile_size >= extent) {
        out.push_back(extent - tile_size);
        break;
      }
      out.push_back(s);
    }
    return out;
  };
  std::vector<PixelRect> tiles;
  for (int y : starts(height)) {
    for (int x : starts(width)) {
      tiles.push_back({x, y, std::min(tile_size, width), std::min(tile_size, height)});
    }
  }
  return tiles;
}

namespace {

double cross(const Vec2& o, const Vec2& a, const Vec2& b) {
  return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
}

std::vector<Vec2> convex_hull(std::vector<Vec2> pts) {
  std::sort(pts.begin(), pts.end(), [](const Vec2& a, const Vec2& b) {
    return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
  });
  if (pts.size() < 3) return pts;
  std::vector<Vec2> hull(2 * pts.size());
  std::size_t k = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i > 0; --i) {
    while (k >= t && cross(hull[k - 2], hull[k - 1], pts[i - 1]) <= 0) --k;
    hull[k++] = pts[i - 1];
  }
  hull.resize(k - 1);
  return hull;
}

// Sutherland-Hodgman against an axis-aligned box.
std::vector<Vec2> clip_polygon(std::vector<Vec2> poly, double x0, double y0, double x1,
                               double y1) {
  auto clip_edge = [&](auto inside, auto cut) {
    std::vector<Vec2> out;
    for (std::size_t i = 0; i < poly.size(); ++i) {
      const Vec2& p = poly[i];
      const Vec2& q = poly[(i + 1) % poly.size()];
      const bool pin = inside(p), qin = inside(q);
      if (pin) out.push_back(p);
      if (pin != qin) out.push_back(cut(p, q));
    }
    poly = std::move(out);
  };
  auto lerp_x = [](const Vec2& p, const Vec2& q, double x) {
    const double t = (x - p.x()) / (q.x() - p.x());
    return Vec2(x, p.y() + t * (q.y() - p.y()));
  };
  auto lerp_y = [](const Vec2& p, const Vec2& q, double y) {
    const double t = (y - p.y()) / (q.y() - p.y());
    return Vec2(p.x() + t * (q.x() - p.x()), y);
  };
  if (poly.size() < 3) return {};
  clip_edge([&](const Vec2& p) { return p.x() >= x0; },
            [&](const Vec2& p, const Vec2& q) { return lerp_x(p, q, x0); });
  if (poly.empty()) return poly;
  clip_edge([&](const Vec2& p) { return p.x() <= x1; },
            [&](const Vec2& p, const Vec2& q) { return lerp_x(p, q, x1); });
  if (poly.empty()) return poly;
  clip_edge([&](const Vec2& p) { return p.y() >= y0; },
            [&](const Vec2& p, const Vec2& q) { return lerp_y(p, q, y0); });
  if (poly.empty()) return poly;
  clip_edge([&](const Vec2& p) { return p.y() <= y1; },
            [&](const Vec2& p, const Vec2& q) { return lerp_y(p, q, y1); });
  return poly;
}

}  // namespace

std::vector<RoiPack> roi_for_tiles(const RigSpec& rig, const std::vector<PixelRect>& tiles,
                                   int margin_px, double near, double far) {
  if (!(near > 0.0 && far > near)) throw DomainError("depth range must satisfy 0 < near < far");
  if (margin_px < 0) throw DomainError("margin must be >= 0");
  std::vector<RoiPack> packs;
  for (const PixelRect& tile : tiles) {
    RoiPack pack;
    pack.tile = tile;
    const double tx0 = tile.x - 0.5, ty0 = tile.y - 0.5;
    const double tx1 = tile.x + tile.width - 0.5, ty1 = tile.y + tile.height - 0.5;
    for (int i = 0; i < static_cast<int>(rig.details.size()); ++i) {
      const CameraSpec& cam = rig.details[static_cast<std::size_t>(i)].camera;
      std::vector<Vec2> pts;
      for (double rho : {1.0 / near, 1.0 / far}) {
        const Mat3 h = sweep_homography(rig, i, rho);
        for (const Vec2& c : {Vec2(tx0, ty0), Vec2(tx1, ty0), Vec2(tx1, ty1), Vec2(tx0, ty1)}) {
          const Vec3 q = h * Vec3(c.x(), c.y(), 1.0);
          // Corners behind the detail camera cannot be seen by it.
          if (q.z() > 1e-12) pts.emplace_back(q.x() / q.z(), q.y() / q.z());
        }
      }
      const auto clipped =
          clip_polygon(convex_hull(pts), -0.5, -0.5, cam.sensor.width_px - 0.5,
                       cam.sensor.height_px - 0.5);
      if (clipped.size() < 3) continue;
      double x0 = clipped[0].x(), x1 = x0, y0 = clipped[0].y(), y1 = y0;
      for (const Vec2& p : clipped) {
        x0 = std::min(x0, p.x());
        x1 = std::max(x1, p.x());
        y0 = std::min(y0, p.y());
        y1 = std::max(y1, p.y());
      }
      const int ix0 = static_cast<int>(std::floor(x0 + 0.5)) - margin_px;
      const int iy0 = static_cast<int>(std::floor(y0 + 0.5)) - margin_px;
      const int ix1 = static_cast<int>(std::ceil(x1 + 0.5)) + margin_px;
      const int iy1 = static_cast<int>(std::ceil(y1 + 0.5)) + margin_px;
      const PixelRect roi = intersect({ix0, iy0, ix1 - ix0, iy1 - iy0},
                                      {0, 0, cam.sensor.width_px, cam.sensor.height_px});
      if (!roi.empty()) pack.entries.push_back({i, roi, {}});
    }
    shelf_pack(pack);
    packs.push_back(std::move(pack));
  }
  return packs;
}

void shelf_pack(RoiPack& pack) {
  pack.canvas_width = 0;
  pack.canvas_height = 0;
  if (pack.entries.empty()) return;
  long long area = 0;
  int widest = 0;
  for (const auto& e : pack.entries) {
    area += e.source.area();
    widest = std::max(widest, e.source.width);
  }
  const int canvas_w =
      std::max(widest, static_cast<int>(std::ceil(std::sqrt(static_cast<double>(area)))));

  std::vector<std::size_t> order(pack.entries.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return pack.entries[a].source.height > pack.entries[b].source.height;
  });

  struct Shelf {
    int y, height, used;
  };
  std::vector<Shelf> shelves;
  for (std::size_t idx : order) {
    RoiEntry& e = pack.entries[idx];
    Shelf* target = nullptr;
    for (auto& s : shelves) {
      if (s.used + e.source.width <= canvas_w && e.source.height <= s.height) {
        target = &s;
        break;
      }
    }
    if (target == nullptr) {
      shelves.push_back({pack.canvas_height, e.source.height, 0});
      pack.canvas_height += e.source.height;
      target = &shelves.back();
    }
    e.placement = {target->used, target->y, e.source.width, e.source.height};
    target->used += e.source.width;
  }
  pack.canvas_width = canvas_w;
}

}  // namespace glassesim
