#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace povmap {

struct Rgb8Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;  // row-major, interleaved RGB
};

// Throws IoError on failure. Grey, palette and alpha inputs are expanded to RGB.
Rgb8Image read_png_rgb(const std::filesystem::path& path);
void write_png_rgb(const std::filesystem::path& path, int width, int height,
                   std::span<const std::uint8_t> rgb);

}  // namespace povmap
