#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace incrseg {

// 8-bit raster, row-major, interleaved channels.
struct RasterImage {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<std::uint8_t> pixels;
};

// Decodes any 8-bit-or-less PNG to RGB.
RasterImage read_png_rgb(const std::filesystem::path& path);

// Decodes a single-channel PNG without colour conversion: palette images
// yield their raw palette indices, greyscale images their grey levels.
// Throws INVALID_MASK for multi-channel images.
RasterImage read_png_indexed(const std::filesystem::path& path);

// Writes 1-channel (grey) or 3-channel (RGB) rasters.
void write_png(const std::filesystem::path& path, const RasterImage& image);

}  // namespace incrseg
