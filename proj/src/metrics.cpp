#include "glassesim/metrics.hpp"

#include <cmath>
#include <complex>

#include <Eigen/Dense>

#include "glassesim/error.hpp"
#include "glassesim/units.hpp"

namespace glassesim {

namespace {

double psnr_from_mse(double mse, double peak) {
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / mse));
}

Image<float> grey(const LinearImage& image) {
  return image.channels() == 1 ? image : luminance(image);
}

/// Summed-area table with a zero first row/column.
std::vector<double> integral(const Image<float>& a, const Image<float>* b) {
  const int w = a.width(), h = a.height();
  std::vector<double> s(static_cast<std::size_t>(w + 1) * (h + 1), 0.0);
  for (int y = 0; y < h; ++y) {
    double row = 0.0;
    for (int x = 0; x < w; ++x) {
      row += b ? static_cast<double>(a(x, y)) * (*b)(x, y) : a(x, y);
      s[static_cast<std::size_t>(y + 1) * (w + 1) + x + 1] =
          s[static_cast<std::size_t>(y) * (w + 1) + x + 1] + row;
    }
  }
  return s;
}

double window_sum(const std::vector<double>& s, int stride, int x, int y, int n) {
  auto at = [&](int xx, int yy) { return s[static_cast<std::size_t>(yy) * stride + xx]; };
  return at(x + n, y + n) - at(x, y + n) - at(x + n, y) + at(x, y);
}

}  // namespace

double psnr(const LinearImage& a, const LinearImage& b, double peak) {
  if (!a.same_shape(b)) throw DomainError("psnr: image dimensions differ");
  if (a.empty()) throw DomainError("psnr: empty image");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.values().size(); ++i) {
    const double d = static_cast<double>(a.values()[i]) - b.values()[i];
    sum += d * d;
  }
  return psnr_from_mse(sum / static_cast<double>(a.values().size()), peak);
}

double psnr(const LinearImage& a, const LinearImage& b, const Mask& mask, double peak) {
  if (!a.same_shape(b)) throw DomainError("psnr: image dimensions differ");
  if (mask.width() != a.width() || mask.height() != a.height()) {
    throw DomainError("psnr: mask dimensions differ");
  }
  double sum = 0.0;
  std::size_t n = 0;
  for (int y = 0; y < a.height(); ++y) {
    for (int x = 0; x < a.width(); ++x) {
      if (!mask(x, y)) continue;
      for (int c = 0; c < a.channels(); ++c) {
        const double d = static_cast<double>(a(x, y, c)) - b(x, y, c);
        sum += d * d;
        ++n;
      }
    }
  }
  if (n == 0) throw DomainError("psnr: empty mask");
  return psnr_from_mse(sum / static_cast<double>(n), peak);
}

double ssim(const LinearImage& a, const LinearImage& b, const SsimOptions& o) {
  if (!a.same_shape(b)) throw DomainError("ssim: image dimensions differ");
  if (o.window < 2) throw DomainError("ssim: window must be >= 2");
  if (a.width() < o.window || a.height() < o.window) {
    throw DomainError("ssim: image smaller than the window");
  }
  const Image<float> ga = grey(a), gb = grey(b);
  const int w = ga.width(), h = ga.height(), n = o.window, stride = w + 1;
  const auto sa = integral(ga, nullptr), sb = integral(gb, nullptr);
  const auto saa = integral(ga, &ga), sbb = integral(gb, &gb), sab = integral(ga, &gb);
  const double c1 = std::pow(o.k1 * o.data_range, 2), c2 = std::pow(o.k2 * o.data_range, 2);
  const double count = static_cast<double>(n) * n;
  double total = 0.0;
  for (int y = 0; y + n <= h; ++y) {
    for (int x = 0; x + n <= w; ++x) {
      const double ma = window_sum(sa, stride, x, y, n) / count;
      const double mb = window_sum(sb, stride, x, y, n) / count;
      const double va = window_sum(saa, stride, x, y, n) / count - ma * ma;
      const double vb = window_sum(sbb, stride, x, y, n) / count - mb * mb;
      const double cab = window_sum(sab, stride, x, y, n) / count - ma * mb;
      total += ((2 * ma * mb + c1) * (2 * cab + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
  }
  return total / (static_cast<double>(w - n + 1) * (h - n + 1));
}

void QrTarget::validate() const {
  if (modules <= 0) throw DomainError("QR module count must be positive");
  if (!(width > 0.0)) throw DomainError("QR width must be positive");
  if (!(distance > 0.0)) throw DomainError("viewing distance must be positive");
}

double ppd_qr(const QrTarget& t) {
  t.validate();
  return t.modules / (2.0 * rad_to_deg(std::atan(t.width / (2.0 * t.distance))));
}

std::vector<double> noise_std(const LinearImage& patch) {
  const int w = patch.width(), h = patch.height();
  if (w < 16 || h < 16) throw DomainError("noise patch must be at least 16x16");
  const Eigen::Index n = static_cast<Eigen::Index>(w) * h;
  Eigen::MatrixXd design(n, 3);
  const double cx = 0.5 * (w - 1), cy = 0.5 * (h - 1);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      design.row(static_cast<Eigen::Index>(y) * w + x) << 1.0, x - cx, y - cy;
    }
  }
  const auto qr = design.colPivHouseholderQr();
  std::vector<double> out;
  for (int c = 0; c < patch.channels(); ++c) {
    Eigen::VectorXd v(n);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) v(static_cast<Eigen::Index>(y) * w + x) = patch(x, y, c);
    }
    const Eigen::VectorXd resid = v - design * qr.solve(v);
    out.push_back(std::sqrt(resid.squaredNorm() / static_cast<double>(n - 3)));
  }
  return out;
}

double mtf50_slanted_edge(const LinearImage& image, const PixelRect& roi) {
  const PixelRect r = intersect(roi, PixelRect{0, 0, image.width(), image.height()});
  if (r.width < 16 || r.height < 8) throw DomainError("edge ROI too small");
  const Image<float> lum = grey(crop(image, r.x, r.y, r.width, r.height));
  const int w = lum.width(), h = lum.height();

  // Edge position per row: centroid of the horizontal derivative magnitude.
  std::vector<double> ys, xs;
  double contrast = 0.0;
  for (int y = 0; y < h; ++y) {
    double sum = 0.0, moment = 0.0;
    for (int x = 1; x + 1 < w; ++x) {
      const double d = std::abs(0.5 * (lum(x + 1, y) - lum(x - 1, y)));
      sum += d;
      moment += d * x;
    }
    contrast = std::max(contrast, static_cast<double>(std::abs(lum(w - 1, y) - lum(0, y))));
    if (sum > 0.0) {
      ys.push_back(y);
      xs.push_back(moment / sum);
    }
  }
  if (contrast < 1e-3 || ys.size() < 4) throw DomainError("no edge detected in ROI");
  Eigen::MatrixXd design(static_cast<Eigen::Index>(ys.size()), 2);
  Eigen::VectorXd rhs(static_cast<Eigen::Index>(ys.size()));
  for (std::size_t i = 0; i < ys.size(); ++i) {
    design.row(static_cast<Eigen::Index>(i)) << 1.0, ys[i];
    rhs(static_cast<Eigen::Index>(i)) = xs[i];
  }
  const Eigen::Vector2d line = design.colPivHouseholderQr().solve(rhs);
  const double slope = line(1);
  const double cos_t = 1.0 / std::sqrt(1.0 + slope * slope);

  // 4x oversampled edge spread function over perpendicular distance.
  constexpr int kOversample = 4;
  const double bin = 1.0 / kOversample;
  const double half = std::floor(0.5 * w) - 1.0;
  const int nbins = static_cast<int>(2.0 * half * cos_t * kOversample);
  if (nbins < 16) throw DomainError("edge ROI too narrow");
  std::vector<double> esf(static_cast<std::size_t>(nbins), 0.0), cnt(esf.size(), 0.0);
  const double lo = -0.5 * nbins * bin;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double d = (x - (line(0) + slope * y)) * cos_t;
      const int k = static_cast<int>(std::floor((d - lo) / bin));
      if (k < 0 || k >= nbins) continue;
      esf[static_cast<std::size_t>(k)] += lum(x, y);
      cnt[static_cast<std::size_t>(k)] += 1.0;
    }
  }
  for (int k = 0; k < nbins; ++k) {
    if (cnt[static_cast<std::size_t>(k)] > 0) {
      esf[static_cast<std::size_t>(k)] /= cnt[static_cast<std::size_t>(k)];
      continue;
    }
    // Empty bin: borrow the nearest filled neighbour.
    for (int off = 1; off < nbins; ++off) {
      if (k - off >= 0 && cnt[static_cast<std::size_t>(k - off)] > 0) {
        esf[static_cast<std::size_t>(k)] = esf[static_cast<std::size_t>(k - off)];
        break;
      }
      if (k + off < nbins && cnt[static_cast<std::size_t>(k + off)] > 0) {
        esf[static_cast<std::size_t>(k)] =
            esf[static_cast<std::size_t>(k + off)] / cnt[static_cast<std::size_t>(k + off)];
        break;
      }
    }
  }

  std::vector<double> lsf(esf.size(), 0.0);
  for (int k = 1; k + 1 < nbins; ++k) {
    lsf[static_cast<std::size_t>(k)] =
        0.5 * (esf[static_cast<std::size_t>(k + 1)] - esf[static_cast<std::size_t>(k - 1)]);
  }
  for (int k = 0; k < nbins; ++k) {
    lsf[static_cast<std::size_t>(k)] *= 0.54 - 0.46 * std::cos(2.0 * kPi * k / (nbins - 1));
  }
  auto mtf_at = [&](int f) {
    std::complex<double> acc = 0.0;
    for (int k = 0; k < nbins; ++k) {
      acc += lsf[static_cast<std::size_t>(k)] * std::polar(1.0, -2.0 * kPi * f * k / nbins);
    }
    return std::abs(acc);
  };
  const double dc = mtf_at(0);
  if (!(dc > 0.0)) throw DomainError("no edge detected in ROI");
  double prev = 1.0;
  for (int f = 1; f <= nbins / 2; ++f) {
    const double freq = f / (nbins * bin);
    // Undo the transfer of the central-difference derivative.
    const double arg = 2.0 * kPi * freq * bin;
    const double m = mtf_at(f) / dc / std::max(0.1, std::sin(arg) / arg);
    if (m < 0.5) {
      const double f0 = (f - 1) / (nbins * bin);
      return f0 + (prev - 0.5) / (prev - m) * (freq - f0);
    }
    prev = m;
  }
  return nbins / 2 / (nbins * bin);
}

}  // namespace glassesim
