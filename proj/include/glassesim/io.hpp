#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "glassesim/image.hpp"

namespace glassesim::io {

/// Writes a linear image as 16-bit PNG (values clamped to [0,1], scaled by 65535).
void write_png16(const std::filesystem::path& path, const LinearImage& image);

/// 8-bit preview with the sRGB transfer curve applied.
void write_png8_srgb(const std::filesystem::path& path, const LinearImage& image);

/// Reads PNG into linear floats. 16-bit data is taken as linear; 8-bit data
/// is decoded through the sRGB curve. Alpha is dropped.
LinearImage read_png(const std::filesystem::path& path);

/// Single-channel little-endian PFM (negative scale), rows stored bottom-up.
void write_pfm(const std::filesystem::path& path, const Image<float>& image);
Image<float> read_pfm(const std::filesystem::path& path);

nlohmann::json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const nlohmann::json& value);

void write_text(const std::filesystem::path& path, const std::string& text);

float srgb_encode(float linear);
float srgb_decode(float encoded);

}  // namespace glassesim::io
