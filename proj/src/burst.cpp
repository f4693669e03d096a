#include "glassesim/burst.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <mutex>

#include <fftw3.h>
#include <Eigen/Dense>

#include "glassesim/demosaic.hpp"
#include "glassesim/error.hpp"
#include "glassesim/parallel.hpp"

namespace glassesim {

namespace {

// FFTW planning is not thread-safe.
std::mutex& fftw_mutex() {
  static std::mutex m;
  return m;
}

struct FftwBuffers {
  int w, h;
  double* real;
  fftw_complex* spec;
  fftw_plan forward, backward;

  FftwBuffers(int width, int height) : w(width), h(height) {
    const std::size_t n_spec = static_cast<std::size_t>(h) * (w / 2 + 1);
    std::lock_guard lock(fftw_mutex());
    real = fftw_alloc_real(static_cast<std::size_t>(w) * h);
    spec = fftw_alloc_complex(n_spec);
    forward = fftw_plan_dft_r2c_2d(h, w, real, spec, FFTW_ESTIMATE);
    backward = fftw_plan_dft_c2r_2d(h, w, spec, real, FFTW_ESTIMATE);
  }
  ~FftwBuffers() {
    std::lock_guard lock(fftw_mutex());
    fftw_destroy_plan(forward);
    fftw_destroy_plan(backward);
    fftw_free(real);
    fftw_free(spec);
  }
  FftwBuffers(const FftwBuffers&) = delete;
  FftwBuffers& operator=(const FftwBuffers&) = delete;
};

std::vector<std::complex<double>> windowed_spectrum(const Image<float>& img, FftwBuffers& fft) {
  const int w = img.width(), h = img.height();
  double mean = 0.0;
  for (float v : img.values()) mean += v;
  mean /= static_cast<double>(img.pixel_count());
  for (int y = 0; y < h; ++y) {
    const double wy = 0.5 - 0.5 * std::cos(2.0 * kPi * (y + 0.5) / h);
    for (int x = 0; x < w; ++x) {
      const double wx = 0.5 - 0.5 * std::cos(2.0 * kPi * (x + 0.5) / w);
      fft.real[static_cast<std::size_t>(y) * w + x] = (img(x, y) - mean) * wx * wy;
    }
  }
  fftw_execute(fft.forward);
  const std::size_t n = static_cast<std::size_t>(h) * (w / 2 + 1);
  std::vector<std::complex<double>> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = {fft.spec[i][0], fft.spec[i][1]};
  return out;
}

double parabola_offset(double left, double mid, double right) {
  const double denom = left - 2.0 * mid + right;
  if (denom >= 0.0) return 0.0;
  return std::clamp(0.5 * (left - right) / denom, -0.5, 0.5);
}

Image<float> half_downsample(const Image<float>& img) {
  const int w = img.width() / 2, h = img.height() / 2;
  Image<float> out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      out(x, y) = 0.25f * (img(2 * x, 2 * y) + img(2 * x + 1, 2 * y) + img(2 * x, 2 * y + 1) +
                           img(2 * x + 1, 2 * y + 1));
    }
  }
  return out;
}

Image<float> translate(const Image<float>& img, double tx, double ty) {
  Image<float> out(img.width(), img.height());
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) out(x, y) = sample_bilinear(img, x + tx, y + ty);
  }
  return out;
}

Eigen::Vector2d map_point(const RigidTransform& t, double cx, double cy, double x, double y) {
  const double c = std::cos(t.theta), s = std::sin(t.theta);
  const double dx = x - cx, dy = y - cy;
  return {c * dx - s * dy + cx + t.tx, s * dx + c * dy + cy + t.ty};
}

}  // namespace

Eigen::Vector2d phase_correlate(const Image<float>& fixed, const Image<float>& moving) {
  if (!fixed.same_shape(moving) || fixed.channels() != 1) {
    throw DomainError("phase correlation needs two same-size grey images");
  }
  const int w = fixed.width(), h = fixed.height();
  FftwBuffers fft(w, h);
  const auto a = windowed_spectrum(fixed, fft);
  const auto b = windowed_spectrum(moving, fft);
  for (std::size_t i = 0; i < a.size(); ++i) {
    std::complex<double> r = b[i] * std::conj(a[i]);
    const double mag = std::abs(r);
    r = mag > 1e-20 ? r / mag : std::complex<double>(0.0, 0.0);
    fft.spec[i][0] = r.real();
    fft.spec[i][1] = r.imag();
  }
  fftw_execute(fft.backward);
  auto at = [&](int x, int y) {
    x = ((x % w) + w) % w;
    y = ((y % h) + h) % h;
    return fft.real[static_cast<std::size_t>(y) * w + x];
  };
  int px = 0, py = 0;
  double best = -1e300;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (at(x, y) > best) {
        best = at(x, y);
        px = x;
        py = y;
      }
    }
  }
  const double sx = px + parabola_offset(at(px - 1, py), best, at(px + 1, py));
  const double sy = py + parabola_offset(at(px, py - 1), best, at(px, py + 1));
  return {sx > w / 2 ? sx - w : sx, sy > h / 2 ? sy - h : sy};
}

RigidTransform align_rigid(const Image<float>& fixed, const Image<float>& moving,
                           const BurstConfig& config) {
  std::vector<Image<float>> pf{fixed}, pm{moving};
  while (std::min(pf.back().width(), pf.back().height()) >= 2 * config.min_pyramid_size) {
    pf.push_back(half_downsample(pf.back()));
    pm.push_back(half_downsample(pm.back()));
  }
  Eigen::Vector2d t = phase_correlate(pf.back(), pm.back());
  for (int level = static_cast<int>(pf.size()) - 2; level >= 0; --level) {
    t *= 2.0;
    const Image<float> shifted = translate(pm[static_cast<std::size_t>(level)], t.x(), t.y());
    t += phase_correlate(pf[static_cast<std::size_t>(level)], shifted);
  }

  // Gauss-Newton on (tx, ty, theta) with the moving image's gradient.
  const int w = fixed.width(), h = fixed.height();
  const double cx = 0.5 * (w - 1), cy = 0.5 * (h - 1);
  Image<float> gx(w, h), gy(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      gx(x, y) = 0.5f * (moving(std::min(x + 1, w - 1), y) - moving(std::max(x - 1, 0), y));
      gy(x, y) = 0.5f * (moving(x, std::min(y + 1, h - 1)) - moving(x, std::max(y - 1, 0)));
    }
  }
  RigidTransform est{t.x(), t.y(), 0.0};
  const int margin = 4;
  for (int iter = 0; iter < config.refine_iterations; ++iter) {
    Eigen::Matrix3d jtj = Eigen::Matrix3d::Zero();
    Eigen::Vector3d jtr = Eigen::Vector3d::Zero();
    const double c = std::cos(est.theta), s = std::sin(est.theta);
    for (int y = margin; y < h - margin; ++y) {
      for (int x = margin; x < w - margin; ++x) {
        const Eigen::Vector2d p = map_point(est, cx, cy, x, y);
        if (p.x() < 1 || p.y() < 1 || p.x() > w - 2 || p.y() > h - 2) continue;
        const double r = sample_bilinear(moving, p.x(), p.y()) - fixed(x, y);
        const double ix = sample_bilinear(gx, p.x(), p.y());
        const double iy = sample_bilinear(gy, p.x(), p.y());
        const double dx = x - cx, dy = y - cy;
        const double dth = ix * (-s * dx - c * dy) + iy * (c * dx - s * dy);
        const Eigen::Vector3d j(ix, iy, dth);
        jtj += j * j.transpose();
        jtr += j * r;
      }
    }
    const Eigen::Vector3d step = jtj.ldlt().solve(-jtr);
    if (!step.allFinite()) break;
    est.tx += step(0);
    est.ty += step(1);
    est.theta += step(2);
    if (step.head<2>().norm() < 1e-4 && std::abs(step(2)) < 1e-7) break;
  }
  return est;
}

Image<float> bayer_half_gray(const RawImage& raw) { return half_downsample(raw.data); }

namespace {

double aligned_correlation(const Image<float>& fixed, const Image<float>& moving,
                           const RigidTransform& t) {
  const int w = fixed.width(), h = fixed.height();
  const double cx = 0.5 * (w - 1), cy = 0.5 * (h - 1);
  double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
  std::size_t n = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const Eigen::Vector2d p = map_point(t, cx, cy, x, y);
      if (p.x() < 0 || p.y() < 0 || p.x() > w - 1 || p.y() > h - 1) continue;
      const double a = fixed(x, y), b = sample_bilinear(moving, p.x(), p.y());
      sa += a;
      sb += b;
      saa += a * a;
      sbb += b * b;
      sab += a * b;
      ++n;
    }
  }
  if (n < 16) return 0.0;
  const double m = static_cast<double>(n);
  const double va = saa / m - (sa / m) * (sa / m), vb = sbb / m - (sb / m) * (sb / m);
  if (va <= 1e-14 || vb <= 1e-14) return va <= 1e-14 && vb <= 1e-14 ? 1.0 : 0.0;
  return (sab / m - sa * sb / (m * m)) / std::sqrt(va * vb);
}

}  // namespace

BurstResult burst_merge(const std::vector<RawImage>& frames, const BurstConfig& config) {
  if (frames.size() < 2) throw DomainError("burst merge needs at least 2 frames");
  for (const auto& f : frames) {
    f.validate();
    if (!f.data.same_shape(frames.front().data) || f.pattern != frames.front().pattern) {
      throw DomainError("burst frames must share size and pattern");
    }
  }
  const int n = static_cast<int>(frames.size());
  BurstResult result;
  result.reference = n / 2;
  const Image<float> ref_gray = bayer_half_gray(frames[static_cast<std::size_t>(result.reference)]);

  std::vector<LinearImage> rgb(frames.size());
  result.frames.resize(frames.size());
  for (int i = 0; i < n; ++i) {
    FrameReport& rep = result.frames[static_cast<std::size_t>(i)];
    rep.index = i;
    if (i == result.reference) {
      rep.correlation = 1.0;
    } else {
      const Image<float> gray = bayer_half_gray(frames[static_cast<std::size_t>(i)]);
      const RigidTransform half = align_rigid(ref_gray, gray, config);
      rep.correlation = aligned_correlation(ref_gray, gray, half);
      // Half-resolution pixel q covers full pixels 2q and 2q+1, so rotation about
      // the image centre carries over and translations double.
      rep.motion = {2.0 * half.tx, 2.0 * half.ty, half.theta};
      rep.dropped = !(rep.correlation >= config.min_correlation);
    }
    if (!rep.dropped) rgb[static_cast<std::size_t>(i)] = demosaic(frames[static_cast<std::size_t>(i)]);
  }

  if (std::all_of(result.frames.begin(), result.frames.end(), [&](const FrameReport& r) {
        return r.index == result.reference || r.dropped;
      })) {
    throw Error("burst merge: every frame failed to align with the reference");
  }

  const int w = frames.front().width(), h = frames.front().height();
  const double cx = 0.5 * (w - 1), cy = 0.5 * (h - 1);
  result.image = LinearImage(w, h, 3);
  parallel_for(0, h, [&](int y) {
    std::vector<float> vals;
    vals.reserve(static_cast<std::size_t>(n));
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        vals.clear();
        for (int i = 0; i < n; ++i) {
          const FrameReport& rep = result.frames[static_cast<std::size_t>(i)];
          if (rep.dropped) continue;
          if (i == result.reference) {
            vals.push_back(rgb[static_cast<std::size_t>(i)](x, y, c));
            continue;
          }
          const Eigen::Vector2d p = map_point(rep.motion, cx, cy, x, y);
          if (p.x() < 0 || p.y() < 0 || p.x() > w - 1 || p.y() > h - 1) continue;
          vals.push_back(sample_bicubic(rgb[static_cast<std::size_t>(i)], p.x(), p.y(), c));
        }
        double mean = 0.0;
        for (float v : vals) mean += v;
        mean /= static_cast<double>(vals.size());
        double var = 0.0;
        for (float v : vals) var += (v - mean) * (v - mean);
        const double bound = config.clip_sigma * std::sqrt(var / static_cast<double>(vals.size()));
        double sum = 0.0;
        int kept = 0;
        for (float v : vals) {
          if (std::abs(v - mean) <= bound) {
            sum += v;
            ++kept;
          }
        }
        result.image(x, y, c) =
            static_cast<float>(std::clamp(kept > 0 ? sum / kept : mean, 0.0, 1.0));
      }
    }
  });
  return result;
}

}  // namespace glassesim
