#pragma once

#include <algorithm>
#include <cassert>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace glassesim {

/// Dense interleaved image, row-major, `channels` values per pixel.
template <typename T>
class Image {
 public:
  Image() = default;
  Image(int width, int height, int channels = 1, T fill = T{})
      : width_(width),
        height_(height),
        channels_(channels),
        data_(static_cast<std::size_t>(width) * height * channels, fill) {
    assert(width >= 0 && height >= 0 && channels >= 1);
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  int channels() const noexcept { return channels_; }
  bool empty() const noexcept { return data_.empty(); }
  std::size_t pixel_count() const noexcept { return static_cast<std::size_t>(width_) * height_; }

  T& operator()(int x, int y, int c = 0) noexcept { return data_[index(x, y, c)]; }
  const T& operator()(int x, int y, int c = 0) const noexcept { return data_[index(x, y, c)]; }

  T* row(int y) noexcept { return data_.data() + static_cast<std::size_t>(y) * width_ * channels_; }
  const T* row(int y) const noexcept {
    return data_.data() + static_cast<std::size_t>(y) * width_ * channels_;
  }

  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  bool contains(int x, int y) const noexcept {
    return x >= 0 && y >= 0 && x < width_ && y < height_;
  }

  template <typename U>
  bool same_shape(const Image<U>& other) const noexcept {
    return width_ == other.width() && height_ == other.height() && channels_ == other.channels();
  }

  bool operator==(const Image& other) const = default;

 private:
  std::size_t index(int x, int y, int c) const noexcept {
    assert(contains(x, y) && c >= 0 && c < channels_);
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<T> data_;
};

/// Linear-light radiance, nominally in [0, 1]. Gamma only exists at file boundaries.
using LinearImage = Image<float>;
using Mask = Image<std::uint8_t>;

/// Bilinear lookup with clamp-to-edge addressing; pixel centres sit on integer coordinates.
float sample_bilinear(const Image<float>& image, double x, double y, int channel = 0);

/// Keys cubic convolution (a = -0.5), clamp-to-edge.
float sample_bicubic(const Image<float>& image, double x, double y, int channel = 0);

/// Integer upsampling with bicubic interpolation. Output pixel x maps to input
/// coordinate (x - (factor - 1) / 2) / factor, matching box_downsample.
LinearImage upsample_bicubic(const LinearImage& image, int factor);

/// Mean over non-overlapping factor x factor blocks. Dimensions must divide.
LinearImage box_downsample(const LinearImage& image, int factor);

/// Rec. 709 luminance of a 3-channel image; single-channel input is copied.
Image<float> luminance(const LinearImage& image);

/// Window mean over (2r+1)^2 neighbourhoods, truncated at the borders.
Image<float> box_mean(const Image<float>& image, int radius);

/// Separable convolution with a symmetric odd kernel, replicate borders.
Image<float> convolve_separable(const Image<float>& image, std::span<const float> kernel);

Image<float> extract_channel(const LinearImage& image, int channel);

LinearImage crop(const LinearImage& image, int x0, int y0, int width, int height);

}  // namespace glassesim
