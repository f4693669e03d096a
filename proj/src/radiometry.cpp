#include "glassesim/radiometry.hpp"

#include <algorithm>
#include <cmath>

#include "glassesim/error.hpp"

namespace glassesim {

double SpectralTable::at(double nm) const {
  if (values.empty() || nm < start_nm || nm > end_nm()) return 0.0;
  const double pos = (nm - start_nm) / step_nm;
  const auto i = static_cast<std::size_t>(std::floor(pos));
  if (i + 1 >= values.size()) return values.back();
  const double t = pos - static_cast<double>(i);
  return (1.0 - t) * values[i] + t * values[i + 1];
}

void SpectralTables::validate() const {
  if (luminosity.empty() || illuminant.empty()) throw ConfigError("spectral tables are empty");
  if (!(luminosity.step_nm > 0.0) || !(illuminant.step_nm > 0.0)) {
    throw ConfigError("spectral table step must be > 0");
  }
  for (double v : luminosity.values) {
    if (v < 0.0) throw ConfigError("V(lambda) must be non-negative");
  }
  for (const auto& band : bands) {
    if (!(band.hi_nm > band.lo_nm)) throw ConfigError("filter band must have hi > lo");
  }
}

namespace {

// Trapezoid of f over [lo, hi] nm on the union of table nodes and the interval ends.
template <typename F>
double trapezoid_nm(const SpectralTable& grid, double lo, double hi, F&& f) {
  std::vector<double> nodes{lo};
  for (std::size_t i = 0; i < grid.values.size(); ++i) {
    const double nm = grid.start_nm + grid.step_nm * static_cast<double>(i);
    if (nm > lo && nm < hi) nodes.push_back(nm);
  }
  nodes.push_back(hi);
  double acc = 0.0;
  for (std::size_t i = 1; i < nodes.size(); ++i) {
    acc += 0.5 * (f(nodes[i - 1]) + f(nodes[i])) * (nodes[i] - nodes[i - 1]);
  }
  return acc;
}

}  // namespace

ScenePhotonRate::ScenePhotonRate(const SpectralTables& tables, double illuminance)
    : tables_(&tables) {
  tables.validate();
  if (!(illuminance >= 0.0)) throw DomainError("illuminance must be >= 0");
  const double lo = std::max(tables.luminosity.start_nm, tables.illuminant.start_nm);
  const double hi = std::min(tables.luminosity.end_nm(), tables.illuminant.end_nm());
  // integral of s(lambda) V(lambda) d lambda, lambda in metres.
  const double norm = 1e-9 * trapezoid_nm(tables.illuminant, lo, hi, [&](double nm) {
    return tables.illuminant.at(nm) * tables.luminosity.at(nm);
  });
  if (!(norm > 0.0)) throw ConfigError("illuminant and V(lambda) do not overlap");
  scale_ = illuminance / (kLuminousEfficacy * norm * tables.planck * tables.light_speed);
}

double ScenePhotonRate::operator()(double wavelength_m) const {
  return scale_ * tables_->illuminant.at(wavelength_m * 1e9) * wavelength_m;
}

double ScenePhotonRate::integrate(const WavelengthBand& band) const {
  return 1e-9 * trapezoid_nm(tables_->illuminant, band.lo_nm, band.hi_nm,
                             [&](double nm) { return (*this)(nm * 1e-9); });
}

ScenePhotonRate scene_photon_rate(const SpectralTables& tables, double illuminance) {
  return ScenePhotonRate(tables, illuminance);
}

void SceneAssumptions::validate() const {
  if (!(reflectance > 0.0 && reflectance <= 1.0)) throw DomainError("reflectance must be in (0, 1]");
  if (!(illuminance >= 0.0)) throw DomainError("illuminance must be >= 0");
}

KConstants KConstants::published() { return KConstants{{0.6262e14, 1.654e14, 1.271e14}}; }

const KConstants& KConstants::derived_default() {
  static const KConstants k = derive_k_constants(SpectralTables::cie_default());
  return k;
}

KConstants derive_k_constants(const SpectralTables& tables, double reflectance,
                              double transmission) {
  const ScenePhotonRate rate(tables, 1.0);
  KConstants out;
  for (int c = 0; c < 3; ++c) {
    out.k[c] = reflectance * transmission / 4.0 * rate.integrate(tables.bands[c]);
  }
  return out;
}

PhotonBudget photons_per_pixel(const CameraSpec& camera, const SceneAssumptions& assumptions,
                               double exposure, const SpectralTables& tables) {
  camera.validate();
  assumptions.validate();
  if (!(exposure >= 0.0)) throw DomainError("exposure must be >= 0");
  const ScenePhotonRate rate(tables, assumptions.illuminance);
  const double d = camera.lens.entrance_pupil_diameter;
  const double p = camera.sensor.pixel_pitch;
  const double f = camera.lens.focal_length;
  const double geometry = assumptions.reflectance * camera.lens.transmission / 4.0 * d * d * p *
                          p * exposure / (f * f);
  PhotonBudget budget;
  budget.exposure = exposure;
  for (int c = 0; c < 3; ++c) budget.photons[c] = geometry * rate.integrate(tables.bands[c]);
  return budget;
}

Rgb snr_upper_bound(const PhotonBudget& budget) {
  Rgb snr{};
  for (int c = 0; c < 3; ++c) snr[c] = std::sqrt(std::max(0.0, budget.photons[c]));
  return snr;
}

double simplified_photons(const CameraSpec& camera, double illuminance, double exposure,
                          Channel channel, const KConstants& k) {
  camera.validate();
  const double d_ifov = camera.lens.entrance_pupil_diameter * camera.ifov();
  return k.k[static_cast<int>(channel)] * camera.lens.transmission * d_ifov * d_ifov * exposure *
         illuminance;
}

double required_illuminance(const CameraSpec& camera, double exposure, double target_snr,
                            Channel channel, const KConstants& k) {
  if (!(exposure > 0.0)) throw DomainError("required_illuminance: exposure must be > 0");
  if (!(target_snr > 0.0)) throw DomainError("required_illuminance: target SNR must be > 0");
  camera.validate();
  const double d_ifov = camera.lens.entrance_pupil_diameter * camera.ifov();
  return target_snr * target_snr /
         (k.k[static_cast<int>(channel)] * camera.lens.transmission * d_ifov * d_ifov * exposure);
}

}  // namespace glassesim
