#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "glassesim/burst.hpp"
#include "glassesim/degrade.hpp"
#include "glassesim/rig.hpp"

namespace glassesim {

struct FusionConfig {
  double tau = 0.5;                 // valid needs confidence (squared NCC) >= tau
  double epipolar_tolerance = kDefaultEpipolarTolerance;  // px
  int block_radius = 16;            // target px; NCC window is (2r+1)^2
  double near = 0.3;                // m
  double far = 100.0;               // m
  int depth_samples = 64;           // minimum inverse-depth planes of the coarse sweep
  double max_sample_spacing = 1.0;  // px between samples along a segment; adds planes (0: off)
  int fine_substeps = 4;            // refinement steps per coarse step
  double lr_tolerance = 2.0;        // px, left-right consistency measured along image structure
  int min_invalid_component = 16;   // invalid blobs at least this large erode the valid mask
  bool lowpass_detail = true;       // match against a detail blurred like the guide
  int tile_size = 256;
  int tile_overlap = 32;
  double guide_floor = 0.0;         // minimum guide weight
  bool gain_compensation = true;
  double min_parallax = 1.0;        // px of epipolar extent needed to triangulate

  void validate() const;
};

void to_json(nlohmann::json& j, const FusionConfig& cfg);
void from_json(const nlohmann::json& j, FusionConfig& cfg);

/// Per target pixel: position in the detail image is (x + dx, y + dy).
struct CorrespondenceField {
  Image<float> dx;
  Image<float> dy;
  Image<float> confidence;  // [0, 1]
  Image<float> rho;         // matched inverse depth in the target frame, 1/m
  Mask valid;

  CorrespondenceField() = default;
  CorrespondenceField(int width, int height);

  int width() const { return valid.width(); }
  int height() const { return valid.height(); }
  double valid_fraction() const;
  double mean_confidence() const;  // over valid pixels
};

/// Euclidean distance from each pixel to the nearest zero of `mask`
/// (pixels with mask == 0 get 0). Pixels outside the image do not count.
Image<float> distance_transform(const Mask& mask);

/// Plane-sweep NCC search along the epipolar segment of each target pixel, with
/// shiftable windows, sub-step refinement, a soft off-segment refinement, a
/// left-right check, and erosion of the valid mask near displacement jumps.
CorrespondenceField match_epipolar(const LinearImage& guide_up, const LinearImage& detail,
                                   const RigSpec& rig, int detail_index, const FusionConfig& cfg);

struct WarpedDetail {
  LinearImage image;
  Mask mask;
};

WarpedDetail warp_detail(const LinearImage& detail, const CorrespondenceField& field);

struct FusionSource {
  LinearImage image;
  Mask mask;
  Image<float> confidence;
};

struct FusionResult {
  LinearImage image;
  Image<float> detail_weight;  // largest source weight used at each pixel
  std::vector<double> gains;   // per source, image-wide median ratio
};

FusionResult fuse(const LinearImage& guide_up, const std::vector<FusionSource>& sources,
                  const FusionConfig& cfg);

/// Midpoint triangulation per field, blended with distance-transform weights.
/// `fields[i]` belongs to `detail_indices[i]`; +inf where no field is valid.
Image<float> triangulate_depth(const std::vector<CorrespondenceField>& fields,
                               const std::vector<int>& detail_indices, const RigSpec& rig,
                               const FusionConfig& cfg);

/// Equal-weight average of the partial depth maps (for comparison with the blend).
Image<float> average_depth(const std::vector<CorrespondenceField>& fields,
                           const std::vector<int>& detail_indices, const RigSpec& rig,
                           const FusionConfig& cfg);

/// One capture: a single raw frame or a burst.
struct Capture {
  std::vector<RawImage> frames;
};

struct Captures {
  Capture guide;
  std::vector<Capture> details;
};

struct ReconstructionOptions {
  FusionConfig fusion;
  BurstConfig burst;
  bool record_timings = false;
};

struct Reconstruction {
  LinearImage image;
  LinearImage guide_up;
  Image<float> depth;
  Image<float> detail_weight;
  std::vector<CorrespondenceField> fields;
  nlohmann::json diagnostics;
};

Reconstruction reconstruct_frame(const Captures& captures, const RigSpec& rig,
                                 const ReconstructionOptions& options = {});

}  // namespace glassesim
