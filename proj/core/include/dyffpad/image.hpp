#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace dyffpad {

/// 8-bit grayscale raster, row-major.
class GrayImage {
 public:
  GrayImage() = default;
  GrayImage(int width, int height, std::uint8_t fill = 0);
  GrayImage(int width, int height, std::vector<std::uint8_t> data);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  bool empty() const noexcept { return data_.empty(); }

  std::uint8_t at(int x, int y) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  std::uint8_t& at(int x, int y) { return data_[static_cast<std::size_t>(y) * width_ + x]; }

  std::span<const std::uint8_t> data() const noexcept { return data_; }
  std::span<std::uint8_t> data() noexcept { return data_; }

  friend bool operator==(const GrayImage&, const GrayImage&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> data_;
};

/// Half-open pixel box [x0, x1) x [y0, y1).
struct RoiBox {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;

  int width() const noexcept { return x1 - x0; }
  int height() const noexcept { return y1 - y0; }
  friend bool operator==(const RoiBox&, const RoiBox&) = default;
};

GrayImage crop(const GrayImage& img, const RoiBox& box);

/// Bilinear resize to side x side, scaled to [0,1]. Pixel centers are aligned.
std::vector<float> resize_bilinear_unit(const GrayImage& img, int side);

/// Binary PGM (P5, maxval <= 255).
GrayImage read_pgm(const std::filesystem::path& path);
void write_pgm(const GrayImage& img, const std::filesystem::path& path);

/// Dispatches on the file signature: P5 PGM natively, PNG when built with libpng.
GrayImage read_image(const std::filesystem::path& path);

}  // namespace dyffpad
