#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "glassesim/optics.hpp"

namespace glassesim {

using Mat3 = Eigen::Matrix3d;
using Vec3 = Eigen::Vector3d;
using Vec2 = Eigen::Vector2d;

/// Rigid pose. `rotation` maps camera axes (x right, y down, z forward) into
/// the rig frame; `center` is the camera centre in rig coordinates.
struct Pose {
  Mat3 rotation = Mat3::Identity();
  Vec3 center = Vec3::Zero();

  /// Yaw about the camera y axis, then pitch about the yawed x axis.
  /// Positive yaw turns the boresight to +x, positive pitch to +y.
  static Pose from_yaw_pitch(double yaw, double pitch, const Vec3& center = Vec3::Zero());

  Vec3 to_camera(const Vec3& rig_point) const { return rotation.transpose() * (rig_point - center); }
  Vec3 to_rig(const Vec3& camera_point) const { return rotation * camera_point + center; }

  void validate() const;
};

Mat3 yaw_pitch_rotation(double yaw, double pitch);

/// Pinhole intrinsics; pixel centres on integers, principal point at the image centre.
Mat3 intrinsics(const CameraSpec& camera);

struct RigCamera {
  CameraSpec camera;
  Pose pose;
};

struct RigSpec {
  RigCamera guide;
  std::vector<RigCamera> details;  // row-major over the grid
  int rows = 1;
  int cols = 1;
  double angular_overlap = 0.0;            // rad
  double reference_plane_distance = 100.0;  // m
  int target_scale = 1;  // target pixels per guide pixel along each axis

  /// Guide viewpoint at the target resolution.
  CameraSpec target_camera() const;
  const Pose& target_pose() const { return guide.pose; }

  void validate() const;
};

void to_json(nlohmann::json& j, const Pose& pose);
void from_json(const nlohmann::json& j, Pose& pose);
void to_json(nlohmann::json& j, const RigSpec& rig);
void from_json(const nlohmann::json& j, RigSpec& rig);

/// Projects a rig-frame point; empty when the point is not in front of the camera.
std::optional<Vec2> project(const CameraSpec& camera, const Pose& pose, const Vec3& point);

/// Unit ray direction, rig frame, through a pixel.
Vec3 pixel_ray(const CameraSpec& camera, const Pose& pose, const Vec2& pixel);

/// Every detail gets the guide lens, a pitch of guide_pitch / target_scale and a
/// sensor just large enough for guide_fov / n + overlap per axis (rounded up to even).
RigSpec plan_tiling(const CameraSpec& guide, const Pose& guide_pose, int rows, int cols,
                    double angular_overlap, const std::vector<Vec3>& detail_positions,
                    int target_scale = 1);

/// Eyebrow-style layout: details on a horizontal line above a guide at the origin.
struct EyebrowRigOptions {
  double focal_length = 3.8e-3;
  double pupil = 1.1e-3;
  double guide_pitch = 5e-6;
  int guide_px = 768;
  int target_scale = 4;
  int detail_px = 1200;
  int rows = 3;
  int cols = 3;
  double spacing = 8e-3;      // between neighbouring details
  double guide_offset = 15e-3;  // guide below the detail line
};

RigSpec eyebrow_rig(const EyebrowRigOptions& options = {});

/// Named presets: "eyebrow-3x3" (default), "eyebrow-2x1", "identity".
RigSpec rig_preset(const std::string& name);

/// Closest distance beyond which the detail cones jointly cover the guide cone.
/// +infinity when there is no angular overlap.
double min_covered_distance(const RigSpec& rig);

/// Plane-sweep homography target pixel -> detail pixel for the fronto-parallel
/// plane at inverse depth `rho` (1/m) in the target frame.
Mat3 sweep_homography(const RigSpec& rig, int detail_index, double rho);

/// Detail pixel -> target pixel homography induced by the plane at `plane_distance`.
Mat3 prewarp_homography(const RigSpec& rig, int detail_index, double plane_distance);

struct EpipolarSegment {
  Vec2 near_point = Vec2::Zero();  // projection at depth `near`
  Vec2 far_point = Vec2::Zero();   // projection at depth `far`
  double tolerance = 0.0;          // soft band half-width, px
  bool empty = true;               // ray not visible in the detail over the range
  double rho_min = 0.0;            // visible inverse-depth interval
  double rho_max = 0.0;

  double length() const { return (far_point - near_point).norm(); }
  double distance_to_line(const Vec2& p) const;
  double distance_to_segment(const Vec2& p) const;
};

inline constexpr double kDefaultEpipolarTolerance = 3.0;

EpipolarSegment epipolar_segment(const RigSpec& rig, int detail_index, const Vec2& target_pixel,
                                 double near, double far,
                                 double tolerance = kDefaultEpipolarTolerance);

struct PixelRect {
  int x = 0;
  int y = 0;
  int width = 0;
  int height = 0;

  bool empty() const { return width <= 0 || height <= 0; }
  long long area() const { return empty() ? 0 : static_cast<long long>(width) * height; }
  bool operator==(const PixelRect&) const = default;
};

PixelRect intersect(const PixelRect& a, const PixelRect& b);

struct RoiEntry {
  int detail_index = 0;
  PixelRect source;     // in detail pixels
  PixelRect placement;  // in the packed canvas
};

struct RoiPack {
  PixelRect tile;  // in target pixels
  std::vector<RoiEntry> entries;
  int canvas_width = 0;
  int canvas_height = 0;
};

/// Square tiles of `tile_size` with `overlap` pixels shared between neighbours.
std::vector<PixelRect> tile_grid(int width, int height, int tile_size, int overlap);

std::vector<RoiPack> roi_for_tiles(const RigSpec& rig, const std::vector<PixelRect>& tiles,
                                   int margin_px, double near, double far);

/// First-fit decreasing-height shelf packing; fills placements and canvas size.
void shelf_pack(RoiPack& pack);

}  // namespace glassesim
