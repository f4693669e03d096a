#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "glassesim/error.hpp"
#include "glassesim/parallel.hpp"
#include "glassesim/reconstruct.hpp"

namespace glassesim {

namespace {

struct PartialDepth {
  Image<float> depth;
  Mask valid;
};

PartialDepth partial_depth(const CorrespondenceField& field, const RigSpec& rig, int detail_index,
                           const FusionConfig& cfg) {
  if (detail_index < 0 || detail_index >= static_cast<int>(rig.details.size())) {
    throw DomainError("detail index out of range");
  }
  const CameraSpec tcam = rig.target_camera();
  const int w = field.width(), h = field.height();
  if (w != tcam.sensor.width_px || h != tcam.sensor.height_px) {
    throw DomainError("correspondence field does not match the target resolution");
  }
  const RigCamera& det = rig.details[static_cast<std::size_t>(detail_index)];
  const Pose& tp = rig.target_pose();
  const Mat3 kt_inv = intrinsics(tcam).inverse();
  const Mat3 to_target = tp.rotation.transpose() * det.pose.rotation * intrinsics(det.camera).inverse();
  const Vec3 origin = tp.rotation.transpose() * (det.pose.center - tp.center);
  const Mat3 h_far = sweep_homography(rig, detail_index, 1.0 / cfg.far);
  const Mat3 h_near = sweep_homography(rig, detail_index, 1.0 / cfg.near);

  PartialDepth out{Image<float>(w, h, 1, std::numeric_limits<float>::infinity()), Mask(w, h, 1, 0)};
  parallel_for(0, h, [&](int y) {
    for (int x = 0; x < w; ++x) {
      if (!field.valid(x, y)) continue;
      const Vec3 p(x, y, 1.0);
      const Vec3 qa = h_far * p, qb = h_near * p;
      if (qa.z() > 0.0 && qb.z() > 0.0) {
        const double extent = (qa.hnormalized() - qb.hnormalized()).norm();
        if (extent < cfg.min_parallax) continue;
      }
      // Closest points of the target ray s*d1 and the detail ray origin + u*d2.
      const Vec3 d1 = kt_inv * p;
      const Vec3 d2 = to_target * Vec3(x + field.dx(x, y), y + field.dy(x, y), 1.0);
      const double a = d1.dot(d1), b = d1.dot(d2), c = d2.dot(d2);
      const double d = d1.dot(origin), e = d2.dot(origin);
      const double den = a * c - b * b;
      if (!(den > 1e-15 * a * c)) continue;
      const double s = (d * c - b * e) / den;
      const double u = (b * d - a * e) / den;
      const Vec3 mid = 0.5 * (s * d1 + origin + u * d2);
      if (!std::isfinite(mid.z())) continue;
      out.depth(x, y) = static_cast<float>(std::clamp(mid.z(), cfg.near, cfg.far));
      out.valid(x, y) = 1;
    }
  });
  return out;
}

std::vector<PartialDepth> partials(const std::vector<CorrespondenceField>& fields,
                                  const std::vector<int>& detail_indices, const RigSpec& rig,
                                  const FusionConfig& cfg) {
  cfg.validate();
  if (fields.empty()) throw DomainError("triangulation needs at least one field");
  if (fields.size() != detail_indices.size()) {
    throw DomainError("one detail index per correspondence field required");
  }
  std::vector<PartialDepth> out;
  out.reserve(fields.size());
  for (std::size_t i = 0; i < fields.size(); ++i) {
    out.push_back(partial_depth(fields[i], rig, detail_indices[i], cfg));
  }
  return out;
}

Image<float> blend(const std::vector<PartialDepth>& parts, const std::vector<Image<float>>& weights) {
  const int w = parts.front().depth.width(), h = parts.front().depth.height();
  Image<float> out(w, h, 1, std::numeric_limits<float>::infinity());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double sw = 0.0, sd = 0.0, plain = 0.0;
      int n = 0;
      for (std::size_t i = 0; i < parts.size(); ++i) {
        if (!parts[i].valid(x, y)) continue;
        const double z = parts[i].depth(x, y);
        const double wi = weights.empty() ? 0.0 : weights[i](x, y);
        sw += wi;
        sd += wi * z;
        plain += z;
        ++n;
      }
      if (n == 0) continue;
      out(x, y) = static_cast<float>(sw > 0.0 ? sd / sw : plain / n);
    }
  }
  return out;
}

}  // namespace

Image<float> triangulate_depth(const std::vector<CorrespondenceField>& fields,
                               const std::vector<int>& detail_indices, const RigSpec& rig,
                               const FusionConfig& cfg) {
  const auto parts = partials(fields, detail_indices, rig, cfg);
  // Contour pixels (next to an invalid pixel) get weight 0.
  std::vector<Image<float>> weights;
  for (const auto& p : parts) {
    Image<float> d = distance_transform(p.valid);
    const auto cap = static_cast<float>(d.width() + d.height());
    for (float& v : d.values()) v = std::max(0.0f, std::min(v, cap) - 1.0f);
    weights.push_back(std::move(d));
  }
  return blend(parts, weights);
}

Image<float> average_depth(const std::vector<CorrespondenceField>& fields,
                           const std::vector<int>& detail_indices, const RigSpec& rig,
                           const FusionConfig& cfg) {
  return blend(partials(fields, detail_indices, rig, cfg), {});
}

}  // namespace glassesim
