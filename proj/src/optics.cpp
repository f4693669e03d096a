#include "glassesim/optics.hpp"

#include <algorithm>
#include <cmath>

#include "glassesim/error.hpp"

namespace glassesim {

std::string to_string(BayerPattern pattern) {
  switch (pattern) {
    case BayerPattern::RGGB: return "RGGB";
    case BayerPattern::BGGR: return "BGGR";
    case BayerPattern::GRBG: return "GRBG";
    case BayerPattern::GBRG: return "GBRG";
  }
  return "RGGB";
}

BayerPattern parse_bayer_pattern(const std::string& text) {
  if (text == "RGGB") return BayerPattern::RGGB;
  if (text == "BGGR") return BayerPattern::BGGR;
  if (text == "GRBG") return BayerPattern::GRBG;
  if (text == "GBRG") return BayerPattern::GBRG;
  throw ConfigError("unknown Bayer pattern '" + text + "'");
}

void LensSpec::validate() const {
  if (!(focal_length > 0.0)) throw ConfigError("focal_length must be > 0");
  if (!(entrance_pupil_diameter > 0.0)) throw ConfigError("entrance_pupil_diameter must be > 0");
  if (!(transmission > 0.0 && transmission <= 1.0)) {
    throw ConfigError("transmission must be in (0, 1]");
  }
}

void SensorSpec::validate() const {
  if (!(pixel_pitch > 0.0)) throw ConfigError("pixel_pitch must be > 0");
  if (width_px < 2 || height_px < 2) throw ConfigError("sensor must be at least 2x2 pixels");
  if (bit_depth != 8 && bit_depth != 10 && bit_depth != 12 && bit_depth != 16) {
    throw ConfigError("bit_depth must be one of 8, 10, 12, 16");
  }
}

void CameraSpec::validate() const {
  lens.validate();
  sensor.validate();
  if (!(coc_diameter > 0.0)) throw ConfigError("coc_diameter must be > 0");
}

double CameraSpec::hfov() const {
  return 2.0 * std::atan(sensor.width_px * sensor.pixel_pitch / (2.0 * lens.focal_length));
}

double CameraSpec::vfov() const {
  return 2.0 * std::atan(sensor.height_px * sensor.pixel_pitch / (2.0 * lens.focal_length));
}

double diffraction_limited_angle(double entrance_pupil_diameter, double wavelength) {
  if (!(entrance_pupil_diameter > 0.0) || !(wavelength > 0.0)) {
    throw DomainError("diffraction_limited_angle: pupil and wavelength must be > 0");
  }
  return 1.22 * wavelength / entrance_pupil_diameter;
}

double diffraction_limited_pupil(double delta_theta, double wavelength) {
  if (!(delta_theta > 0.0) || !(wavelength > 0.0)) {
    throw DomainError("diffraction_limited_pupil: angle and wavelength must be > 0");
  }
  return 1.22 * wavelength / delta_theta;
}

double geometric_angle(const CameraSpec& camera) {
  return camera.coc_diameter / (2.0 * camera.lens.focal_length);
}

double hyperfocal_distance(const CameraSpec& camera) {
  camera.validate();
  return camera.lens.focal_length * camera.lens.entrance_pupil_diameter /
         (2.0 * camera.coc_diameter);
}

double hyperfocal_for_resolution(double entrance_pupil_diameter, double delta_theta) {
  if (!(entrance_pupil_diameter > 0.0) || !(delta_theta > 0.0)) {
    throw DomainError("hyperfocal_for_resolution: inputs must be > 0");
  }
  return entrance_pupil_diameter / (4.0 * delta_theta);
}

double overall_angular_resolution(const CameraSpec& camera, double wavelength) {
  camera.validate();
  return std::max({geometric_angle(camera),
                   diffraction_limited_angle(camera.lens.entrance_pupil_diameter, wavelength),
                   camera.ifov()});
}

bool diffraction_feasible(double delta_theta, double pupil, double wavelength) {
  return pupil >= diffraction_limited_pupil(delta_theta, wavelength) *
                      (1.0 - kFeasibilityRelTolerance);
}

std::vector<TradespaceRow> tradespace_curve(std::span<const double> delta_theta_values,
                                            std::span<const double> pupil_values,
                                            double wavelength) {
  if (delta_theta_values.empty() || pupil_values.empty()) {
    throw DomainError("tradespace_curve: empty sweep");
  }
  std::vector<TradespaceRow> rows;
  rows.reserve(delta_theta_values.size() * pupil_values.size());
  for (double dtheta : delta_theta_values) {
    for (double pupil : pupil_values) {
      rows.push_back({dtheta, pupil, hyperfocal_for_resolution(pupil, dtheta),
                      diffraction_feasible(dtheta, pupil, wavelength)});
    }
  }
  return rows;
}

void to_json(nlohmann::json& j, const CameraSpec& camera) {
  j = nlohmann::json{{"focal_length_m", camera.lens.focal_length},
                     {"entrance_pupil_diameter_m", camera.lens.entrance_pupil_diameter},
                     {"transmission", camera.lens.transmission},
                     {"pixel_pitch_m", camera.sensor.pixel_pitch},
                     {"width_px", camera.sensor.width_px},
                     {"height_px", camera.sensor.height_px},
                     {"bayer_pattern", to_string(camera.sensor.bayer_pattern)},
                     {"bit_depth", camera.sensor.bit_depth},
                     {"coc_diameter_m", camera.coc_diameter}};
}

void from_json(const nlohmann::json& j, CameraSpec& camera) {
  try {
    camera.lens.focal_length = j.at("focal_length_m").get<double>();
    camera.lens.entrance_pupil_diameter = j.at("entrance_pupil_diameter_m").get<double>();
    camera.lens.transmission = j.at("transmission").get<double>();
    camera.sensor.pixel_pitch = j.at("pixel_pitch_m").get<double>();
    camera.sensor.width_px = j.at("width_px").get<int>();
    camera.sensor.height_px = j.at("height_px").get<int>();
    camera.sensor.bayer_pattern = parse_bayer_pattern(j.at("bayer_pattern").get<std::string>());
    camera.sensor.bit_depth = j.at("bit_depth").get<int>();
    camera.coc_diameter = j.at("coc_diameter_m").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("CameraSpec JSON: ") + e.what());
  }
  camera.validate();
}

}  // namespace glassesim
