#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace cadbench {

// 8-bit RGB, row-major, interleaved.
struct RawImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;  // height * width * 3

  RawImage() = default;
  RawImage(std::size_t w, std::size_t h, std::uint8_t fill = 0) : width(w), height(h), pixels(w * h * 3, fill) {}

  std::uint8_t& at(std::size_t x, std::size_t y, std::size_t ch) { return pixels[(y * width + x) * 3 + ch]; }
  std::uint8_t at(std::size_t x, std::size_t y, std::size_t ch) const { return pixels[(y * width + x) * 3 + ch]; }
  bool operator==(const RawImage&) const = default;
};

// Binary PPM ("P6", maxval 255).
RawImage read_ppm(const std::filesystem::path& path);
void write_ppm(const RawImage& image, const std::filesystem::path& path);

}  // namespace cadbench
