#pragma once

#include <vector>

#include "glassesim/image.hpp"
#include "glassesim/rig.hpp"

namespace glassesim {

inline constexpr double kPsnrCap = 99.0;

/// 10 log10(peak^2 / MSE) over all samples; identical images give kPsnrCap.
double psnr(const LinearImage& a, const LinearImage& b, double peak = 1.0);

/// PSNR restricted to pixels where `mask` is set (all channels).
double psnr(const LinearImage& a, const LinearImage& b, const Mask& mask, double peak = 1.0);

struct SsimOptions {
  int window = 8;
  double k1 = 0.01;
  double k2 = 0.03;
  double data_range = 1.0;
};

/// Mean SSIM over every fully contained window x window block of the
/// luminance (Rec. 709 for RGB), using population statistics.
double ssim(const LinearImage& a, const LinearImage& b, const SsimOptions& options = {});

struct QrTarget {
  int modules = 25;       // p, code is p x p modules
  double width = 0.05;    // m
  double distance = 1.0;  // m

  void validate() const;
};

/// Modules per degree of visual angle subtended by the code.
double ppd_qr(const QrTarget& target);

/// Per-channel standard deviation after removing a least-squares plane.
std::vector<double> noise_std(const LinearImage& patch);

/// Slanted-edge MTF50 (cycles/pixel) of a near-vertical edge inside `roi`,
/// measured on luminance with 4x oversampled edge spread.
double mtf50_slanted_edge(const LinearImage& image, const PixelRect& roi);

}  // namespace glassesim
