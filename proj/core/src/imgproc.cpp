#include "dyffpad/imgproc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dyffpad/error.hpp"

namespace dyffpad {

Block::Block(int rows, int cols, std::vector<double> pixels, int origin_x, int origin_y)
    : rows_(rows), cols_(cols), origin_x_(origin_x), origin_y_(origin_y), pixels_(std::move(pixels)) {
  if (rows < kMinBlockSide || cols < kMinBlockSide) {
    throw Error(ErrorCode::BlockTooSmall,
                "block " + std::to_string(rows) + "x" + std::to_string(cols) + " below 8x8");
  }
  if (pixels_.size() != static_cast<std::size_t>(rows) * cols) {
    throw Error(ErrorCode::ShapeMismatch, "block pixel count differs from rows*cols");
  }
}

Orientation::Orientation(double radians) {
  double a = std::fmod(radians, std::numbers::pi);
  if (a < 0) a += std::numbers::pi;
  if (a >= std::numbers::pi) a = 0.0;
  angle_ = a;
}

double orientation_difference(Orientation a, Orientation b) {
  double d = a.radians() - b.radians();
  if (d > std::numbers::pi / 2) d -= std::numbers::pi;
  if (d <= -std::numbers::pi / 2) d += std::numbers::pi;
  return d;
}

Gradients sobel_gradients(const Block& b) {
  Gradients g;
  const int rows = b.rows();
  const int cols = b.cols();
  g.dx.reserve(static_cast<std::size_t>(rows - 2) * (cols - 2));
  g.dy.reserve(g.dx.capacity());
  for (int r = 1; r < rows - 1; ++r) {
    for (int c = 1; c < cols - 1; ++c) {
      const double gx = (b.at(r - 1, c + 1) + 2 * b.at(r, c + 1) + b.at(r + 1, c + 1)) -
                        (b.at(r - 1, c - 1) + 2 * b.at(r, c - 1) + b.at(r + 1, c - 1));
      const double gy = (b.at(r + 1, c - 1) + 2 * b.at(r + 1, c) + b.at(r + 1, c + 1)) -
                        (b.at(r - 1, c - 1) + 2 * b.at(r - 1, c) + b.at(r - 1, c + 1));
      // Sobel taps sum to 8 per unit slope.
      g.dx.push_back(gx / 8.0);
      g.dy.push_back(gy / 8.0);
    }
  }
  return g;
}

RoiBox segment_roi(const GrayImage& img, int block, double var_threshold) {
  if (block < kMinBlockSide) throw Error(ErrorCode::BlockTooSmall, "ROI block below 8 px");
  const int nby = img.height() / block;
  const int nbx = img.width() / block;
  if (nbx == 0 || nby == 0) throw Error(ErrorCode::ImageTooSmall, "image smaller than one ROI block");

  RoiBox box{std::numeric_limits<int>::max(), std::numeric_limits<int>::max(), 0, 0};
  bool any = false;
  const double n = static_cast<double>(block) * block;
  for (int by = 0; by < nby; ++by) {
    for (int bx = 0; bx < nbx; ++bx) {
      double sum = 0.0;
      double sq = 0.0;
      for (int y = by * block; y < (by + 1) * block; ++y) {
        for (int x = bx * block; x < (bx + 1) * block; ++x) {
          const double v = img.at(x, y);
          sum += v;
          sq += v * v;
        }
      }
      const double mean = sum / n;
      const double var = sq / n - mean * mean;
      if (var >= var_threshold) {
        any = true;
        box.x0 = std::min(box.x0, bx * block);
        box.y0 = std::min(box.y0, by * block);
        box.x1 = std::max(box.x1, (bx + 1) * block);
        box.y1 = std::max(box.y1, (by + 1) * block);
      }
    }
  }
  if (!any) throw Error(ErrorCode::NoForeground, "no block reaches the variance threshold");
  return box;
}

Block extract_block(const GrayImage& img, int x, int y, int rows, int cols) {
  if (x < 0 || y < 0 || x + cols > img.width() || y + rows > img.height()) {
    throw Error(ErrorCode::ShapeMismatch, "block exceeds image bounds");
  }
  std::vector<double> px(static_cast<std::size_t>(rows) * cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) px[static_cast<std::size_t>(r) * cols + c] = img.at(x + c, y + r) / 255.0;
  }
  return Block(rows, cols, std::move(px), x, y);
}

std::vector<Block> partition_blocks(const GrayImage& img, int rows, int cols) {
  if (rows < kMinBlockSide || cols < kMinBlockSide) {
    throw Error(ErrorCode::BlockTooSmall, "partition block below 8 px");
  }
  const int nby = img.height() / rows;
  const int nbx = img.width() / cols;
  if (nbx == 0 || nby == 0) throw Error(ErrorCode::ImageTooSmall, "no complete block fits");
  std::vector<Block> blocks;
  blocks.reserve(static_cast<std::size_t>(nbx) * nby);
  for (int by = 0; by < nby; ++by) {
    for (int bx = 0; bx < nbx; ++bx) blocks.push_back(extract_block(img, bx * cols, by * rows, rows, cols));
  }
  return blocks;
}

Orientation estimate_orientation(const Block& b) {
  const Gradients g = sobel_gradients(b);
  double sxy = 0.0;
  double sxx_yy = 0.0;
  double energy = 0.0;
  for (std::size_t i = 0; i < g.dx.size(); ++i) {
    sxy += 2.0 * g.dx[i] * g.dy[i];
    sxx_yy += g.dx[i] * g.dx[i] - g.dy[i] * g.dy[i];
    energy += g.dx[i] * g.dx[i] + g.dy[i] * g.dy[i];
  }
  if (g.dx.empty() || energy / static_cast<double>(g.dx.size()) < kFlatBlockEpsilon) {
    throw Error(ErrorCode::FlatBlock, "block gradient energy below epsilon");
  }
  // Gradients are normal to ridges; the double-angle mean gives the gradient
  // direction, rotate by a quarter turn for the ridge direction.
  return Orientation(0.5 * std::atan2(sxy, sxx_yy) + std::numbers::pi / 2);
}

namespace {

double sample_bilinear(const Block& b, double x, double y) {
  x = std::clamp(x, 0.0, b.cols() - 1.0);
  y = std::clamp(y, 0.0, b.rows() - 1.0);
  const int x0 = std::min(static_cast<int>(x), b.cols() - 2);
  const int y0 = std::min(static_cast<int>(y), b.rows() - 2);
  const double wx = x - x0;
  const double wy = y - y0;
  const double top = (1 - wx) * b.at(y0, x0) + wx * b.at(y0, x0 + 1);
  const double bot = (1 - wx) * b.at(y0 + 1, x0) + wx * b.at(y0 + 1, x0 + 1);
  return (1 - wy) * top + wy * bot;
}

}  // namespace

Block rotate_to_vertical(const Block& b, Orientation o) {
  const double theta = o.radians();
  const double ct = std::cos(theta);
  const double st = std::sin(theta);
  // Output axes in source coordinates: columns step across ridges, rows along them.
  const double ux = st, uy = -ct;
  const double vx = ct, vy = st;
  const double spread = std::abs(ux) + std::abs(uy);
  const int limit = std::min(b.rows(), b.cols()) - 1;
  const int side = static_cast<int>(std::floor(limit / spread + 1e-9)) + 1;
  if (side < kMinBlockSide) {
    throw Error(ErrorCode::BlockTooSmall,
                "inscribed square after rotation is " + std::to_string(side) + " px");
  }
  const double cx = (b.cols() - 1) / 2.0;
  const double cy = (b.rows() - 1) / 2.0;
  const double half = (side - 1) / 2.0;
  std::vector<double> px(static_cast<std::size_t>(side) * side);
  for (int r = 0; r < side; ++r) {
    const double dv = r - half;
    for (int c = 0; c < side; ++c) {
      const double du = c - half;
      px[static_cast<std::size_t>(r) * side + c] =
          sample_bilinear(b, cx + du * ux + dv * vx, cy + du * uy + dv * vy);
    }
  }
  return Block(side, side, std::move(px), b.origin_x(), b.origin_y());
}

BinaryBlock binarize(const Block& b) {
  const int rows = b.rows();
  const int cols = b.cols();
  const double n = static_cast<double>(rows) * cols;
  const double xm = (cols - 1) / 2.0;
  const double ym = (rows - 1) / 2.0;

  double mean = 0.0;
  for (double v : b.pixels()) mean += v;
  mean /= n;

  double sxz = 0.0, syz = 0.0, sxx = 0.0, syy = 0.0, spread = 0.0;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const double z = b.at(r, c);
      sxz += (c - xm) * z;
      syz += (r - ym) * z;
      sxx += (c - xm) * (c - xm);
      syy += (r - ym) * (r - ym);
      spread = std::max(spread, std::abs(z - mean));
    }
  }

  BinaryBlock out{rows, cols, std::vector<RvLabel>(static_cast<std::size_t>(rows) * cols, RvLabel::Valley)};
  if (spread == 0.0) return out;

  // Centered coordinates on a full grid make the normal equations diagonal.
  // A zero diagonal term means the plane is underdetermined: fall back to the mean.
  const bool degenerate = sxx == 0.0 || syy == 0.0;
  const double alpha = degenerate ? 0.0 : sxz / sxx;
  const double beta = degenerate ? 0.0 : syz / syy;
  const double tol = 1e-9 * spread;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const double plane = alpha * (c - xm) + beta * (r - ym) + mean;
      if (b.at(r, c) - plane < -tol) out.labels[static_cast<std::size_t>(r) * cols + c] = RvLabel::Ridge;
    }
  }
  return out;
}

}  // namespace dyffpad
