#include "glassesim/radiometry.hpp"

namespace glassesim {

// CIE 1924 photopic luminous efficiency V(lambda), 380-780 nm, 5 nm steps.
static const std::vector<double> kPhotopicV = {
    3.9e-05, 6.4e-05, 0.00012, 0.000217, 0.000396, 0.00064,
    0.00121, 0.00218, 0.004, 0.0073, 0.0116, 0.01684,
    0.023, 0.0298, 0.038, 0.048, 0.06, 0.0739,
    0.09098, 0.1126, 0.13902, 0.1693, 0.20802, 0.2586,
    0.323, 0.4073, 0.503, 0.6082, 0.71, 0.7932,
    0.862, 0.91485, 0.954, 0.9803, 0.99495, 1.0,
    0.995, 0.9786, 0.952, 0.9154, 0.87, 0.8163,
    0.757, 0.6949, 0.631, 0.5668, 0.503, 0.4412,
    0.381, 0.321, 0.265, 0.217, 0.175, 0.1382,
    0.107, 0.0816, 0.061, 0.04458, 0.032, 0.0232,
    0.017, 0.01192, 0.00821, 0.005723, 0.004102, 0.002929,
    0.002091, 0.001484, 0.001047, 0.00074, 0.00052, 0.0003611,
    0.0002492, 0.0001719, 0.00012, 8.48e-05, 6e-05, 4.24e-05,
    3e-05, 2.12e-05, 1.499e-05,
};

// CIE standard illuminant A relative spectral power, 380-780 nm, 5 nm steps.
static const std::vector<double> kIlluminantA = {
    9.7951, 10.8996, 12.0853, 13.3543, 14.708, 16.148,
    17.6753, 19.2907, 20.995, 22.7883, 24.6709, 26.6425,
    28.7027, 30.8508, 33.0859, 35.4068, 37.8121, 40.3002,
    42.8693, 45.5174, 48.2423, 51.0418, 53.9132, 56.8539,
    59.8611, 62.932, 66.0635, 69.2525, 72.4959, 75.7903,
    79.1326, 82.5193, 85.947, 89.4124, 92.912, 96.4423,
    100.0, 103.582, 107.184, 110.803, 114.436, 118.08,
    121.731, 125.386, 129.043, 132.697, 136.346, 139.988,
    143.618, 147.235, 150.836, 154.418, 157.979, 161.516,
    165.028, 168.51, 171.963, 175.383, 178.769, 182.118,
    185.429, 188.701, 191.931, 195.118, 198.261, 201.359,
    204.409, 207.411, 210.365, 213.268, 216.12, 218.92,
    221.667, 224.361, 227.0, 229.585, 232.115, 234.589,
    237.008, 239.37, 241.675,
};

const SpectralTables& SpectralTables::cie_default() {
  static const SpectralTables tables = [] {
    SpectralTables t;
    t.luminosity = {380.0, 5.0, kPhotopicV};
    t.illuminant = {380.0, 5.0, kIlluminantA};
    t.bands = {WavelengthBand{600.0, 680.0}, WavelengthBand{500.0, 600.0},
               WavelengthBand{420.0, 500.0}};
    return t;
  }();
  return tables;
}

}  // namespace glassesim
