#include "glassesim/image.hpp"

#include <cmath>
#include <stdexcept>

#include "glassesim/error.hpp"
#include "glassesim/parallel.hpp"

namespace glassesim {
namespace {

inline int clampi(int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); }

inline double keys_weight(double t) {
  constexpr double a = -0.5;
  t = std::abs(t);
  if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
  if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
  return 0.0;
}

}  // namespace

float sample_bilinear(const Image<float>& image, double x, double y, int channel) {
  const int w = image.width();
  const int h = image.height();
  const double fx = std::floor(x);
  const double fy = std::floor(y);
  const double tx = x - fx;
  const double ty = y - fy;
  const int x0 = clampi(static_cast<int>(fx), 0, w - 1);
  const int y0 = clampi(static_cast<int>(fy), 0, h - 1);
  const int x1 = clampi(static_cast<int>(fx) + 1, 0, w - 1);
  const int y1 = clampi(static_cast<int>(fy) + 1, 0, h - 1);
  const double top = (1.0 - tx) * image(x0, y0, channel) + tx * image(x1, y0, channel);
  const double bottom = (1.0 - tx) * image(x0, y1, channel) + tx * image(x1, y1, channel);
  return static_cast<float>((1.0 - ty) * top + ty * bottom);
}

float sample_bicubic(const Image<float>& image, double x, double y, int channel) {
  const int w = image.width();
  const int h = image.height();
  const double fx = std::floor(x);
  const double fy = std::floor(y);
  const int ix = static_cast<int>(fx);
  const int iy = static_cast<int>(fy);
  double wx[4];
  double wy[4];
  for (int k = 0; k < 4; ++k) {
    wx[k] = keys_weight(x - (fx + k - 1));
    wy[k] = keys_weight(y - (fy + k - 1));
  }
  double acc = 0.0;
  for (int j = 0; j < 4; ++j) {
    const int yy = clampi(iy + j - 1, 0, h - 1);
    double row_acc = 0.0;
    for (int i = 0; i < 4; ++i) {
      const int xx = clampi(ix + i - 1, 0, w - 1);
      row_acc += wx[i] * image(xx, yy, channel);
    }
    acc += wy[j] * row_acc;
  }
  return static_cast<float>(acc);
}

LinearImage upsample_bicubic(const LinearImage& image, int factor) {
  if (factor < 1) throw DomainError("upsample factor must be >= 1");
  if (factor == 1) return image;
  const int w = image.width() * factor;
  const int h = image.height() * factor;
  const int channels = image.channels();
  const double offset = (factor - 1) / 2.0;

  // Separable: horizontal pass into an intermediate, then vertical.
  Image<float> horizontal(w, image.height(), channels);
  parallel_for(0, image.height(), [&](int y) {
    for (int x = 0; x < w; ++x) {
      const double sx = (x - offset) / factor;
      for (int c = 0; c < channels; ++c) {
        horizontal(x, y, c) = sample_bicubic(image, sx, y, c);
      }
    }
  });
  LinearImage out(w, h, channels);
  parallel_for(0, h, [&](int y) {
    const double sy = (y - offset) / factor;
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < channels; ++c) out(x, y, c) = sample_bicubic(horizontal, x, sy, c);
    }
  });
  return out;
}

LinearImage box_downsample(const LinearImage& image, int factor) {
  if (factor < 1) throw DomainError("downsample factor must be >= 1");
  if (image.width() % factor != 0 || image.height() % factor != 0) {
    throw DomainError("image dimensions are not divisible by the downsample factor");
  }
  if (factor == 1) return image;
  const int w = image.width() / factor;
  const int h = image.height() / factor;
  const int channels = image.channels();
  LinearImage out(w, h, channels);
  const double norm = 1.0 / (static_cast<double>(factor) * factor);
  parallel_for(0, h, [&](int y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < channels; ++c) {
        double acc = 0.0;
        for (int j = 0; j < factor; ++j) {
          for (int i = 0; i < factor; ++i) acc += image(x * factor + i, y * factor + j, c);
        }
        out(x, y, c) = static_cast<float>(acc * norm);
      }
    }
  });
  return out;
}

Image<float> luminance(const LinearImage& image) {
  if (image.channels() == 1) return image;
  if (image.channels() != 3) throw DomainError("luminance expects 1 or 3 channels");
  Image<float> out(image.width(), image.height(), 1);
  const auto src = image.values();
  auto dst = out.values();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    dst[i] = 0.2126f * src[3 * i] + 0.7152f * src[3 * i + 1] + 0.0722f * src[3 * i + 2];
  }
  return out;
}

Image<float> box_mean(const Image<float>& image, int radius) {
  const int w = image.width();
  const int h = image.height();
  if (radius <= 0) return image;
  // Sliding sums in double; horizontal then vertical, dividing by the clipped count.
  Image<float> horizontal(w, h, 1);
  parallel_for(0, h, [&](int y) {
    const float* src = image.row(y);
    double sum = 0.0;
    int lo = 0;
    int hi = -1;
    for (int x = 0; x < w; ++x) {
      const int want_hi = std::min(w - 1, x + radius);
      const int want_lo = std::max(0, x - radius);
      while (hi < want_hi) sum += src[++hi];
      while (lo < want_lo) sum -= src[lo++];
      horizontal(x, y) = static_cast<float>(sum / (hi - lo + 1));
    }
  });
  Image<float> out(w, h, 1);
  constexpr int kStrip = 64;
  parallel_for(0, (w + kStrip - 1) / kStrip, [&](int strip) {
    const int x0 = strip * kStrip;
    const int x1 = std::min(w, x0 + kStrip);
    std::vector<double> sum(x1 - x0, 0.0);
    int lo = 0;
    int hi = -1;
    for (int y = 0; y < h; ++y) {
      const int want_hi = std::min(h - 1, y + radius);
      const int want_lo = std::max(0, y - radius);
      while (hi < want_hi) {
        ++hi;
        const float* r = horizontal.row(hi);
        for (int x = x0; x < x1; ++x) sum[x - x0] += r[x];
      }
      while (lo < want_lo) {
        const float* r = horizontal.row(lo);
        for (int x = x0; x < x1; ++x) sum[x - x0] -= r[x];
        ++lo;
      }
      const double inv = 1.0 / (hi - lo + 1);
      float* dst = out.row(y);
      for (int x = x0; x < x1; ++x) dst[x] = static_cast<float>(sum[x - x0] * inv);
    }
  });
  return out;
}

Image<float> convolve_separable(const Image<float>& image, std::span<const float> kernel) {
  if (kernel.size() % 2 == 0) throw DomainError("separable kernel must have odd length");
  const int r = static_cast<int>(kernel.size() / 2);
  const int w = image.width();
  const int h = image.height();
  const int channels = image.channels();
  Image<float> tmp(w, h, channels);
  parallel_for(0, h, [&](int y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < channels; ++c) {
        double acc = 0.0;
        for (int k = -r; k <= r; ++k) acc += kernel[k + r] * image(clampi(x + k, 0, w - 1), y, c);
        tmp(x, y, c) = static_cast<float>(acc);
      }
    }
  });
  Image<float> out(w, h, channels);
  parallel_for(0, h, [&](int y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < channels; ++c) {
        double acc = 0.0;
        for (int k = -r; k <= r; ++k) acc += kernel[k + r] * tmp(x, clampi(y + k, 0, h - 1), c);
        out(x, y, c) = static_cast<float>(acc);
      }
    }
  });
  return out;
}

Image<float> extract_channel(const LinearImage& image, int channel) {
  if (channel < 0 || channel >= image.channels()) throw DomainError("channel out of range");
  Image<float> out(image.width(), image.height(), 1);
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) out(x, y) = image(x, y, channel);
  }
  return out;
}

LinearImage crop(const LinearImage& image, int x0, int y0, int width, int height) {
  if (x0 < 0 || y0 < 0 || width < 0 || height < 0 || x0 + width > image.width() ||
      y0 + height > image.height()) {
    throw DomainError("crop rectangle outside the image");
  }
  LinearImage out(width, height, image.channels());
  for (int y = 0; y < height; ++y) {
    std::copy_n(image.row(y0 + y) + static_cast<std::size_t>(x0) * image.channels(),
                static_cast<std::size_t>(width) * image.channels(), out.row(y));
  }
  return out;
}

}  // namespace glassesim
