#include "glassesim/io.hpp"

#include <png.h>

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>
#include <vector>

#include "glassesim/error.hpp"

namespace glassesim::io {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw IoError("cannot open " + path.string());
  return f;
}

[[noreturn]] void png_fail(png_structp, png_const_charp message) { throw IoError(message); }
void png_warn(png_structp, png_const_charp) {}

void write_png(const std::filesystem::path& path, const LinearImage& image, int bit_depth,
               bool srgb) {
  if (image.channels() != 1 && image.channels() != 3) {
    throw IoError("PNG export supports 1 or 3 channels");
  }
  auto file = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* p;
    png_infop* i;
    ~Guard() { png_destroy_write_struct(p, i); }
  } guard{&png, &info};

  png_init_io(png, file.get());
  const int color = image.channels() == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB;
  png_set_IHDR(png, info, image.width(), image.height(), bit_depth, color, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  // No tIME chunk; the file depends only on pixel data.
  png_write_info(png, info);

  const std::size_t row_values = static_cast<std::size_t>(image.width()) * image.channels();
  std::vector<png_byte> row(row_values * (bit_depth / 8));
  const double scale = bit_depth == 16 ? 65535.0 : 255.0;
  for (int y = 0; y < image.height(); ++y) {
    const float* src = image.row(y);
    for (std::size_t i = 0; i < row_values; ++i) {
      float v = std::isfinite(src[i]) ? src[i] : 0.0f;
      v = std::clamp(v, 0.0f, 1.0f);
      if (srgb) v = srgb_encode(v);
      const auto q = static_cast<unsigned>(std::lround(v * scale));
      if (bit_depth == 16) {
        row[2 * i] = static_cast<png_byte>(q >> 8);
        row[2 * i + 1] = static_cast<png_byte>(q & 0xff);
      } else {
        row[i] = static_cast<png_byte>(q);
      }
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
}

}  // namespace

float srgb_encode(float linear) {
  const double v = std::clamp(static_cast<double>(linear), 0.0, 1.0);
  return static_cast<float>(v <= 0.0031308 ? 12.92 * v : 1.055 * std::pow(v, 1.0 / 2.4) - 0.055);
}

float srgb_decode(float encoded) {
  const double v = std::clamp(static_cast<double>(encoded), 0.0, 1.0);
  return static_cast<float>(v <= 0.04045 ? v / 12.92 : std::pow((v + 0.055) / 1.055, 2.4));
}

void write_png16(const std::filesystem::path& path, const LinearImage& image) {
  write_png(path, image, 16, false);
}

void write_png8_srgb(const std::filesystem::path& path, const LinearImage& image) {
  write_png(path, image, 8, true);
}

LinearImage read_png(const std::filesystem::path& path) {
  auto file = open_file(path, "rb");
  png_byte signature[8];
  if (std::fread(signature, 1, 8, file.get()) != 8 || png_sig_cmp(signature, 0, 8) != 0) {
    throw IoError(path.string() + " is not a PNG file");
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* p;
    png_infop* i;
    ~Guard() { png_destroy_read_struct(p, i, nullptr); }
  } guard{&png, &info};

  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const int bit_depth = png_get_bit_depth(png, info);
  const int color = png_get_color_type(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  const int width = static_cast<int>(png_get_image_width(png, info));
  const int height = static_cast<int>(png_get_image_height(png, info));
  const int channels = png_get_channels(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (channels != 1 && channels != 3) throw IoError("unsupported PNG channel layout");

  LinearImage out(width, height, channels);
  std::vector<png_byte> row(png_get_rowbytes(png, info));
  for (int y = 0; y < height; ++y) {
    png_read_row(png, row.data(), nullptr);
    float* dst = out.row(y);
    for (int i = 0; i < width * channels; ++i) {
      if (depth == 16) {
        dst[i] = static_cast<float>(((row[2 * i] << 8) | row[2 * i + 1]) / 65535.0);
      } else {
        dst[i] = srgb_decode(static_cast<float>(row[i] / 255.0));
      }
    }
  }
  return out;
}

void write_pfm(const std::filesystem::path& path, const Image<float>& image) {
  if (image.channels() != 1) throw IoError("PFM export expects a single channel");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string());
  out << "Pf\n" << image.width() << ' ' << image.height() << "\n-1.0\n";
  std::vector<unsigned char> bytes(static_cast<std::size_t>(image.width()) * 4);
  for (int y = image.height() - 1; y >= 0; --y) {
    const float* src = image.row(y);
    for (int x = 0; x < image.width(); ++x) {
      auto bits = std::bit_cast<std::uint32_t>(src[x]);
      for (int b = 0; b < 4; ++b) bytes[4 * x + b] = static_cast<unsigned char>(bits >> (8 * b));
    }
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
  }
  if (!out) throw IoError("failed writing " + path.string());
}

Image<float> read_pfm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string magic;
  int width = 0;
  int height = 0;
  double scale = 0.0;
  in >> magic >> width >> height >> scale;
  in.get();
  if (magic != "Pf" || width <= 0 || height <= 0) throw IoError("unsupported PFM header");
  const bool little = scale < 0.0;
  Image<float> out(width, height, 1);
  std::vector<unsigned char> bytes(static_cast<std::size_t>(width) * 4);
  for (int y = height - 1; y >= 0; --y) {
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!in) throw IoError("truncated PFM " + path.string());
    for (int x = 0; x < width; ++x) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) {
        const int shift = little ? 8 * b : 8 * (3 - b);
        bits |= static_cast<std::uint32_t>(bytes[4 * x + b]) << shift;
      }
      out(x, y) = std::bit_cast<float>(bits);
    }
  }
  return out;
}

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what(), 0);
  }
}

void write_json(const std::filesystem::path& path, const nlohmann::json& value) {
  write_text(path, value.dump(2) + "\n");
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace glassesim::io
