#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "glassesim/image.hpp"
#include "glassesim/optics.hpp"

namespace glassesim {

/// Colour filter (0 = R, 1 = G, 2 = B) at a pixel for a 2x2 pattern.
int bayer_channel(BayerPattern pattern, int x, int y);

struct RawImage {
  Image<float> data;  // single channel, values in [0, 1]
  BayerPattern pattern = BayerPattern::RGGB;
  int bit_depth = 12;

  int width() const { return data.width(); }
  int height() const { return data.height(); }
  void validate() const;
};

struct PsfGrid {
  int rows = 1;
  int cols = 1;
  std::vector<Image<float>> kernels;  // row-major, one per cell
  double kernel_pitch = 0.0;          // m per kernel sample

  const Image<float>& kernel(int r, int c) const {
    return kernels[static_cast<std::size_t>(r) * cols + c];
  }
  void validate() const;

  static PsfGrid delta(int rows = 1, int cols = 1);
  static PsfGrid uniform(const Image<float>& kernel, int rows = 1, int cols = 1);
};

/// Normalised 2D Gaussian of odd size.
Image<float> gaussian_kernel(int size, double sigma);

/// Parametric Gaussian-mixture grids: "desk-7x7" (7 x 7 cells) and "head-6x8" (6 x 8 cells).
PsfGrid psf_preset(const std::string& name);

/// Directory layout: manifest.json plus one raw little-endian float32 file per cell.
void save_psf_grid(const std::filesystem::path& dir, const PsfGrid& grid);
PsfGrid load_psf_grid(const std::filesystem::path& dir);

/// Resolves a preset name or a grid directory.
PsfGrid resolve_psf_grid(const std::string& name_or_dir);

/// Spatially varying blur: every cell's kernel is applied over a square twice the
/// cell pitch (50% overlap with neighbours) and the results are blended with tent
/// weights centred on the cells, which sum to one everywhere. Replicate borders.
LinearImage apply_psf_grid(const LinearImage& image, const PsfGrid& grid);

RawImage mosaic(const LinearImage& image, BayerPattern pattern, int bit_depth = 12);

struct ChannelNoise {
  double lambda_shot = 0.0;
  double lambda_read = 0.0;

  bool operator==(const ChannelNoise&) const = default;
};

/// Per-channel heteroscedastic Gaussian model: var = lambda_read + lambda_shot * x.
struct NoiseModel {
  std::array<ChannelNoise, 3> channels{};  // R, G, B
  std::string gain = "1";

  double variance(int channel, double x) const {
    return channels[channel].lambda_read + channels[channel].lambda_shot * x;
  }
  void validate() const;
  bool operator==(const NoiseModel&) const = default;
};

/// "desk-g1", "head-g1", "head-g22", or "zero".
NoiseModel noise_preset(const std::string& name);

void to_json(nlohmann::json& j, const NoiseModel& model);
void from_json(const nlohmann::json& j, NoiseModel& model);

/// Deterministic per (seed, frame_index, pixel). Output clamped to [0, 1].
RawImage add_noise(const RawImage& raw, const NoiseModel& model, std::uint64_t seed,
                   std::uint64_t frame_index = 0);

struct ChannelFit {
  double lambda_shot = 0.0;
  double lambda_read = 0.0;
  double shot_stderr = 0.0;
  double read_stderr = 0.0;
  std::size_t points = 0;
};

struct NoiseFit {
  NoiseModel model;
  std::array<ChannelFit, 3> channels{};
};

/// Mean/variance line fit per channel over a static stack (>= 16 frames).
/// Pixels touching the clip limits in any frame are excluded.
NoiseFit fit_noise_model(const std::vector<RawImage>& stack);

/// Adds the extra noise that turns a capture under `from` into one under `to`.
RawImage noise_transfer(const RawImage& raw, const NoiseModel& from, const NoiseModel& to,
                        std::uint64_t seed, std::uint64_t frame_index = 0);

struct GuideDegradation {
  int factor = 4;
  BayerPattern pattern = BayerPattern::RGGB;
  int bit_depth = 12;
  /// Binned sensors already carry their blur: the PSF step is skipped.
  bool bin2x2 = false;
};

/// Box downsample, PSF grid, mosaic, noise.
RawImage degrade_guide(const LinearImage& image, const GuideDegradation& options,
                       const PsfGrid& grid, const NoiseModel& model, std::uint64_t seed,
                       std::uint64_t frame_index = 0);

/// Raw mosaic stored as a 16-bit PNG with a sidecar `<name>.json` holding the pattern.
void write_raw(const std::filesystem::path& png_path, const RawImage& raw);
RawImage read_raw(const std::filesystem::path& png_path);

}  // namespace glassesim
