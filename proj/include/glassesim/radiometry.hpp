#pragma once

#include <array>
#include <vector>

#include "glassesim/optics.hpp"

namespace glassesim {

enum class Channel { R = 0, G = 1, B = 2 };
using Rgb = std::array<double, 3>;

/// Uniformly tabulated function of wavelength; zero outside the table.
struct SpectralTable {
  double start_nm = 0.0;
  double step_nm = 0.0;
  std::vector<double> values;

  bool empty() const { return values.empty(); }
  double end_nm() const { return start_nm + step_nm * (static_cast<double>(values.size()) - 1); }
  double at(double nm) const;
};

struct WavelengthBand {
  double lo_nm = 0.0;
  double hi_nm = 0.0;
};

struct SpectralTables {
  SpectralTable luminosity;  // CIE 1924 photopic V(lambda)
  SpectralTable illuminant;  // CIE Illuminant A relative power
  std::array<WavelengthBand, 3> bands{};  // ideal R, G, B filters
  double planck = 6.62607015e-34;        // J s
  double light_speed = 299792458.0;      // m / s

  /// Embedded 5 nm CIE tables with ideal [600,680], [500,600], [420,500] nm bands.
  static const SpectralTables& cie_default();
  void validate() const;
};

inline constexpr double kLuminousEfficacy = 683.0;  // lm / W

/// Photon arrival rate at a scene surface per unit wavelength,
/// photons s^-1 m^-2 m^-1, for a given illuminance.
class ScenePhotonRate {
 public:
  ScenePhotonRate(const SpectralTables& tables, double illuminance);

  double operator()(double wavelength_m) const;

  /// Trapezoidal integral over a band on the illuminant table nodes,
  /// photons s^-1 m^-2.
  double integrate(const WavelengthBand& band) const;

 private:
  const SpectralTables* tables_;
  double scale_;  // E / (683 * integral(sV) * h * c)
};

ScenePhotonRate scene_photon_rate(const SpectralTables& tables, double illuminance);

struct SceneAssumptions {
  double reflectance = 0.18;
  double illuminance = 0.0;  // lux

  void validate() const;
};

struct PhotonBudget {
  Rgb photons{};
  double exposure = 0.0;  // s
};

/// Per-channel constants of the simplified model N = k * D^2 * IFOV^2 * t * E,
/// in photons s^-1 m^-2 lux^-1, for 18% reflectance and lossless optics.
struct KConstants {
  Rgb k{};

  /// Published values (R, G, B) x 1e14.
  static KConstants published();
  /// Derived from SpectralTables::cie_default() (cached).
  static const KConstants& derived_default();
};

KConstants derive_k_constants(const SpectralTables& tables, double reflectance = 0.18,
                              double transmission = 1.0);

/// Full spectral photon count per pixel: R T / 4 * D^2 p^2 t / f^2 * integral over each band.
PhotonBudget photons_per_pixel(const CameraSpec& camera, const SceneAssumptions& assumptions,
                               double exposure,
                               const SpectralTables& tables = SpectralTables::cie_default());

/// Shot-noise-only bound, sqrt(N) per channel.
Rgb snr_upper_bound(const PhotonBudget& budget);

/// Simplified photon count at 18% reflectance: k * T * D^2 * IFOV^2 * t * E.
double simplified_photons(const CameraSpec& camera, double illuminance, double exposure,
                          Channel channel, const KConstants& k = KConstants::derived_default());

/// Illuminance at which the shot-noise bound reaches target_snr.
double required_illuminance(const CameraSpec& camera, double exposure, double target_snr,
                            Channel channel, const KConstants& k = KConstants::derived_default());

}  // namespace glassesim
