#pragma once

#include <numbers>

namespace glassesim {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kArcminToRad = kPi / 10800.0;
inline constexpr double kDegToRad = kPi / 180.0;

/// Wavelength assumed by the optics trade space unless overridden.
inline constexpr double kDefaultWavelength = 500e-9;

constexpr double arcmin_to_rad(double arcmin) { return arcmin * kArcminToRad; }
constexpr double rad_to_arcmin(double rad) { return rad / kArcminToRad; }
constexpr double deg_to_rad(double deg) { return deg * kDegToRad; }
constexpr double rad_to_deg(double rad) { return rad / kDegToRad; }

}  // namespace glassesim
