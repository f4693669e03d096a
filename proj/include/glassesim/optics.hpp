#pragma once

#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "glassesim/units.hpp"

namespace glassesim {

enum class BayerPattern { RGGB, BGGR, GRBG, GBRG };

std::string to_string(BayerPattern pattern);
BayerPattern parse_bayer_pattern(const std::string& text);

struct LensSpec {
  double focal_length = 0.0;             // m
  double entrance_pupil_diameter = 0.0;  // m
  double transmission = 1.0;

  double f_number() const { return focal_length / entrance_pupil_diameter; }
  void validate() const;
};

struct SensorSpec {
  double pixel_pitch = 0.0;  // m
  int width_px = 0;
  int height_px = 0;
  BayerPattern bayer_pattern = BayerPattern::RGGB;
  int bit_depth = 12;

  void validate() const;
};

struct CameraSpec {
  LensSpec lens;
  SensorSpec sensor;
  double coc_diameter = 0.0;  // accepted circle of confusion on the sensor, m

  void validate() const;

  /// Angle subtended by one pixel, p / f.
  double ifov() const { return sensor.pixel_pitch / lens.focal_length; }
  double hfov() const;
  double vfov() const;
  /// Focal length expressed in pixels.
  double focal_px() const { return lens.focal_length / sensor.pixel_pitch; }
};

/// Rayleigh-style angular resolution 1.22 lambda / D (small-angle form).
double diffraction_limited_angle(double entrance_pupil_diameter, double wavelength);

/// Smallest entrance pupil that can resolve `delta_theta` at `wavelength`.
double diffraction_limited_pupil(double delta_theta, double wavelength);

/// Geometric (defocus) angular resolution, coc / 2f.
double geometric_angle(const CameraSpec& camera);

/// f * D / (2 * coc). Equals D / (4 * geometric_angle).
double hyperfocal_distance(const CameraSpec& camera);

/// Fixed-focus hyperfocal distance for a target resolution, D / (4 * delta_theta).
double hyperfocal_for_resolution(double entrance_pupil_diameter, double delta_theta);

/// max(geometric, diffraction, IFOV).
double overall_angular_resolution(const CameraSpec& camera,
                                  double wavelength = kDefaultWavelength);

struct TradespaceRow {
  double delta_theta = 0.0;  // rad
  double pupil = 0.0;        // m
  double hyperfocal = 0.0;   // m
  bool feasible = false;
};

/// Pupils within this relative distance below the diffraction bound still
/// count as feasible, so rounded boundary designs are not rejected.
inline constexpr double kFeasibilityRelTolerance = 1e-4;

bool diffraction_feasible(double delta_theta, double pupil, double wavelength);

/// Row-major sweep: for each delta_theta, every pupil.
std::vector<TradespaceRow> tradespace_curve(std::span<const double> delta_theta_values,
                                            std::span<const double> pupil_values,
                                            double wavelength = kDefaultWavelength);

void to_json(nlohmann::json& j, const CameraSpec& camera);
void from_json(const nlohmann::json& j, CameraSpec& camera);

}  // namespace glassesim
