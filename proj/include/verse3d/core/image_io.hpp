#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "verse3d/core/image.hpp"

namespace verse3d {

/// PNG bytes for a 1- or 3-channel image; samples in [0,1] are quantized to
/// `bit_depth` (8 or 16) bits by rounding.
std::string encode_png(const ImageBuffer& img, int bit_depth = 8);

/// Decodes 8/16-bit gray, gray+alpha, RGB or RGBA PNG into [0,1] samples.
/// Alpha is dropped; palette images are expanded to RGB.
ImageBuffer decode_png(std::string_view bytes);

void write_png(const std::filesystem::path& path, const ImageBuffer& img, int bit_depth = 8);
ImageBuffer read_png(const std::filesystem::path& path);

/// Depth as 16-bit gray PNG: stored = round(depth / scale * 65535).
/// The scale travels in a `depth_scale` tEXt chunk and is returned on decode.
struct EncodedDepth {
  std::string png;
  double scale = 1.0;
};
EncodedDepth encode_depth_png16(const ImageBuffer& depth);
ImageBuffer decode_depth_png16(std::string_view bytes, double scale);
/// Reads the scale from the tEXt chunk.
ImageBuffer decode_depth_png16(std::string_view bytes);

/// Single-channel 32-bit float OpenEXR ("Z" channel).
void write_depth_exr(const std::filesystem::path& path, const ImageBuffer& depth);
ImageBuffer read_depth_exr(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace verse3d
