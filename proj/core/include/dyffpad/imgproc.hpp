#pragma once

#include <cstdint>
#include <numbers>
#include <vector>

#include "dyffpad/image.hpp"

namespace dyffpad {

inline constexpr int kMinBlockSide = 8;
inline constexpr int kDefaultBlockSide = 32;
inline constexpr double kDefaultRoiVarThreshold = 100.0;
/// Mean squared gradient per pixel (on [0,1] intensities) below which a block is flat.
inline constexpr double kFlatBlockEpsilon = 1e-6;

/// Rectangular patch of an image with intensities scaled to [0,1].
class Block {
 public:
  Block() = default;
  /// Throws BlockTooSmall when either side is below kMinBlockSide.
  Block(int rows, int cols, std::vector<double> pixels, int origin_x = 0, int origin_y = 0);

  int rows() const noexcept { return rows_; }
  int cols() const noexcept { return cols_; }
  int origin_x() const noexcept { return origin_x_; }
  int origin_y() const noexcept { return origin_y_; }

  double at(int r, int c) const { return pixels_[static_cast<std::size_t>(r) * cols_ + c]; }
  const std::vector<double>& pixels() const noexcept { return pixels_; }

 private:
  int rows_ = 0;
  int cols_ = 0;
  int origin_x_ = 0;
  int origin_y_ = 0;
  std::vector<double> pixels_;
};

/// Ridge direction measured from the +x axis (image y grows downward), in [0, pi).
class Orientation {
 public:
  Orientation() = default;
  explicit Orientation(double radians);
  double radians() const noexcept { return angle_; }

 private:
  double angle_ = 0.0;
};

/// Smallest signed difference a - b between two orientations, in (-pi/2, pi/2].
double orientation_difference(Orientation a, Orientation b);

enum class RvLabel : std::uint8_t { Valley = 0, Ridge = 1 };

struct BinaryBlock {
  int rows = 0;
  int cols = 0;
  std::vector<RvLabel> labels;

  RvLabel at(int r, int c) const { return labels[static_cast<std::size_t>(r) * cols + c]; }
};

/// Sobel gradients over the block interior (one-pixel border excluded).
struct Gradients {
  std::vector<double> dx;
  std::vector<double> dy;
};
Gradients sobel_gradients(const Block& b);

RoiBox segment_roi(const GrayImage& img, int block = kDefaultBlockSide,
                   double var_threshold = kDefaultRoiVarThreshold);

Block extract_block(const GrayImage& img, int x, int y, int rows, int cols);
std::vector<Block> partition_blocks(const GrayImage& img, int rows, int cols);

Orientation estimate_orientation(const Block& b);
Block rotate_to_vertical(const Block& b, Orientation o);
BinaryBlock binarize(const Block& b);

}  // namespace dyffpad
