#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "glassesim/degrade.hpp"

namespace glassesim {

/// Rigid 2D motion about an image centre c: p' = R(theta) (p - c) + c + t.
struct RigidTransform {
  double tx = 0.0;
  double ty = 0.0;
  double theta = 0.0;  // rad
};

struct BurstConfig {
  double clip_sigma = 2.5;
  /// Frames whose aligned normalised correlation with the reference falls
  /// below this are dropped.
  double min_correlation = 0.5;
  int refine_iterations = 10;
  int min_pyramid_size = 48;
};

struct FrameReport {
  int index = 0;
  RigidTransform motion;  // full-resolution pixels, reference -> frame
  double correlation = 0.0;
  bool dropped = false;
};

struct BurstResult {
  LinearImage image;
  int reference = 0;
  std::vector<FrameReport> frames;
};

/// Global translation between two same-size grey images by phase correlation.
/// Returns t such that moving(p) ~ fixed(p - t).
Eigen::Vector2d phase_correlate(const Image<float>& fixed, const Image<float>& moving);

/// Coarse-to-fine phase correlation followed by Gauss-Newton refinement of
/// (tx, ty, theta). Maps fixed coordinates into moving coordinates.
RigidTransform align_rigid(const Image<float>& fixed, const Image<float>& moving,
                           const BurstConfig& config = {});

/// Per-2x2-block average of a Bayer mosaic (half resolution, grey).
Image<float> bayer_half_gray(const RawImage& raw);

/// Aligns every frame to the middle one on half-resolution grey images, warps the
/// full-resolution demosaicked frames with bicubic sampling and takes a
/// sigma-clipped mean per pixel.
BurstResult burst_merge(const std::vector<RawImage>& frames, const BurstConfig& config = {});

}  // namespace glassesim
