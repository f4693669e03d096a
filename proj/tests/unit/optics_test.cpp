#include <array>
#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "gen.hpp"
#include "glassesim/error.hpp"
#include "glassesim/optics.hpp"
#include "glassesim/units.hpp"

using namespace glassesim;

namespace {

CameraSpec camera(double f, double d, double p, double coc) {
  CameraSpec c;
  c.lens.focal_length = f;
  c.lens.entrance_pupil_diameter = d;
  c.sensor.pixel_pitch = p;
  c.sensor.width_px = 640;
  c.sensor.height_px = 480;
  c.coc_diameter = coc;
  return c;
}

double rayleigh(double d, double lambda) { return 1.22 * lambda / d; }

}  // namespace

TEST(Diffraction, OneArcminNeedsAbout2mm) {
  const double a = diffraction_limited_angle(2.097e-3, 500e-9);
  EXPECT_NEAR(a, 2.909e-4, 0.001e-4);
  EXPECT_NEAR(rad_to_arcmin(a), 1.0, 0.005);
}

TEST(Diffraction, OneMillimetrePupil) {
  const double a = diffraction_limited_angle(1.0e-3, 500e-9);
  EXPECT_DOUBLE_EQ(a, rayleigh(1.0e-3, 500e-9));
  EXPECT_NEAR(rad_to_arcmin(a), 2.10, 0.01);
}

TEST(Diffraction, DoublingPupilHalvesAngle) {
  testgen::Gen g(1);
  for (int n = 0; n < testgen::kCases; ++n) {
    const double d = g.log_uniform(1e-4, 1e-1), l = g.uniform(380e-9, 780e-9);
    EXPECT_DOUBLE_EQ(diffraction_limited_angle(2 * d, l), diffraction_limited_angle(d, l) / 2);
  }
}

TEST(Diffraction, RejectsNonPositive) {
  EXPECT_THROW(diffraction_limited_angle(0.0, 500e-9), DomainError);
  EXPECT_THROW(diffraction_limited_angle(1e-3, -1.0), DomainError);
}

TEST(Hyperfocal, TwoMillimetrePupilAtOneArcmin) {
  const double f = 4e-3, dt = arcmin_to_rad(1.0);
  const double h = hyperfocal_distance(camera(f, 2.0e-3, 1e-6, 2 * f * dt));
  EXPECT_NEAR(h, 1.72, 0.2 * 1.72);
  EXPECT_NEAR(h, 2.0e-3 / (4 * dt), 1e-12);
}

TEST(Hyperfocal, SmallPupilTwoArcmin) {
  const double dt = arcmin_to_rad(2.0);
  EXPECT_NEAR(dt, 5.818e-4, 1e-7);
  EXPECT_NEAR(hyperfocal_for_resolution(1.1e-3, dt), 1.1e-3 / (4 * 5.818e-4), 1e-4);
  EXPECT_NEAR(hyperfocal_for_resolution(1.1e-3, dt), 0.473, 0.001);
}

TEST(Hyperfocal, FocalScalingInvariant) {
  testgen::Gen g(2);
  for (int n = 0; n < testgen::kCases; ++n) {
    const double f = g.log_uniform(1e-3, 5e-2), d = g.log_uniform(5e-4, 1e-2);
    const double coc = g.log_uniform(1e-7, 1e-5), s = g.log_uniform(0.1, 10);
    const double h1 = hyperfocal_distance(camera(f, d, 1e-6, coc));
    const double h2 = hyperfocal_distance(camera(s * f, d, 1e-6, s * coc));
    EXPECT_NEAR(h2 / h1, 1.0, 1e-12);
  }
}

TEST(Hyperfocal, MatchesResolutionForm) {
  testgen::Gen g(3);
  for (int n = 0; n < testgen::kCases; ++n) {
    const double f = g.log_uniform(1e-3, 5e-2), d = g.log_uniform(5e-4, 1e-2);
    const double coc = g.log_uniform(1e-7, 1e-5);
    const double h = hyperfocal_distance(camera(f, d, 1e-6, coc));
    const double ref = d / (4 * (coc / (2 * f)));
    EXPECT_LE(std::abs(h - ref) / ref, 1e-12);
  }
}

TEST(Hyperfocal, Monotone) {
  testgen::Gen g(4);
  for (int n = 0; n < testgen::kCases; ++n) {
    const double d = g.log_uniform(5e-4, 1e-2), dt = g.log_uniform(1e-5, 1e-2);
    const double k = g.uniform(1.001, 3.0);
    EXPECT_GT(hyperfocal_for_resolution(k * d, dt), hyperfocal_for_resolution(d, dt));
    EXPECT_LT(hyperfocal_for_resolution(d, k * dt), hyperfocal_for_resolution(d, dt));
  }
}

TEST(OverallResolution, IfovDominates) {
  // p/f = 1e-3, diffraction 6.1e-4, geometric 1e-4.
  const double f = 1e-3;
  const double d = 1.22 * 500e-9 / 6.1e-4;
  const CameraSpec c = camera(f, d, 1e-6, 2 * f * 1e-4);
  EXPECT_NEAR(overall_angular_resolution(c, 500e-9), 1e-3, 1e-15);
}

TEST(OverallResolution, DeskPrototypeDetail) {
  const CameraSpec c = camera(1.925e-3, 1.1e-3, 1.25e-6, 1e-9);
  const double diff = rayleigh(1.1e-3, 500e-9), ifov = 1.25e-6 / 1.925e-3;
  EXPECT_NEAR(diff, 5.545e-4, 1e-7);
  EXPECT_NEAR(ifov, 6.494e-4, 1e-7);
  EXPECT_DOUBLE_EQ(overall_angular_resolution(c, 500e-9), std::max(diff, ifov));
}

TEST(OverallResolution, IsMaxOfTerms) {
  testgen::Gen g(5);
  for (int n = 0; n < testgen::kCases; ++n) {
    const double f = g.log_uniform(1e-3, 5e-2), d = g.log_uniform(1e-4, 1e-2);
    const double p = g.log_uniform(5e-7, 1e-5), coc = g.log_uniform(1e-7, 1e-4);
    const double l = g.uniform(400e-9, 700e-9);
    const CameraSpec c = camera(f, d, p, coc);
    const std::array<double, 3> terms{coc / (2 * f), rayleigh(d, l), p / f};
    const double r = overall_angular_resolution(c, l);
    for (double t : terms) EXPECT_GE(r, t * (1 - 1e-15));
    EXPECT_NEAR(r, std::max({terms[0], terms[1], terms[2]}), 1e-15 * r);
  }
}

TEST(Tradespace, BoundaryAndRedStar) {
  const std::vector<double> thetas{arcmin_to_rad(1.0), arcmin_to_rad(2.10)};
  const std::vector<double> pupils{2.097e-3, 1.0e-3};
  const auto rows = tradespace_curve(thetas, pupils, 500e-9);
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_DOUBLE_EQ(rows[0].delta_theta, thetas[0]);
  EXPECT_DOUBLE_EQ(rows[0].pupil, pupils[0]);
  EXPECT_DOUBLE_EQ(rows[1].pupil, pupils[1]);
  EXPECT_DOUBLE_EQ(rows[2].delta_theta, thetas[1]);
  EXPECT_NEAR(rows[0].hyperfocal, 1.80, 0.01);
  EXPECT_TRUE(rows[0].feasible);
  EXPECT_FALSE(rows[1].feasible);
  EXPECT_NEAR(rows[3].hyperfocal, 0.41, 0.041);
  EXPECT_TRUE(rows[3].feasible);
}

TEST(Tradespace, FeasibilityBoundaryProperty) {
  testgen::Gen g(6);
  for (int n = 0; n < testgen::kCases; ++n) {
    const double l = g.uniform(380e-9, 780e-9), dt = g.log_uniform(1e-5, 1e-2);
    const double d = 1.22 * l / dt;
    EXPECT_TRUE(diffraction_feasible(dt, d, l));
    EXPECT_FALSE(diffraction_feasible(dt, 0.999 * d, l));
  }
}

TEST(CameraSpecJson, RoundTripAndFieldNames) {
  CameraSpec c = camera(4e-3, 2e-3, 1.4e-6, 2e-6);
  c.sensor.bayer_pattern = BayerPattern::GBRG;
  c.sensor.bit_depth = 10;
  c.lens.transmission = 0.9;
  const nlohmann::json j = c;
  for (const char* k : {"focal_length_m", "entrance_pupil_diameter_m", "transmission", "pixel_pitch_m",
                        "width_px", "height_px", "bayer_pattern", "bit_depth", "coc_diameter_m"})
    EXPECT_TRUE(j.contains(k)) << k;
  const CameraSpec back = j.get<CameraSpec>();
  EXPECT_EQ(nlohmann::json(back), j);
}

TEST(CameraSpecJson, InvalidRejected) {
  nlohmann::json j = camera(4e-3, 2e-3, 1.4e-6, 2e-6);
  j["bit_depth"] = 11;
  EXPECT_ANY_THROW(j.get<CameraSpec>());
  j["bit_depth"] = 12;
  j["transmission"] = 1.5;
  EXPECT_ANY_THROW(j.get<CameraSpec>());
}

TEST(CameraSpec, FieldOfView) {
  const CameraSpec c = camera(4e-3, 2e-3, 2e-6, 2e-6);
  EXPECT_NEAR(c.hfov(), 2 * std::atan(640 * 2e-6 / (2 * 4e-3)), 1e-15);
  EXPECT_NEAR(c.vfov(), 2 * std::atan(480 * 2e-6 / (2 * 4e-3)), 1e-15);
}
