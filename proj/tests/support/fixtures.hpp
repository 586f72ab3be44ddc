#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numbers>
#include <random>
#include <algorithm>
#include <string>
#include <vector>

#include "dyffpad/image.hpp"
#include "dyffpad/imgproc.hpp"
#include "dyffpad/rng.hpp"

namespace fixtures {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    dyffpad::Rng rng(std::random_device{}());
    path_ = std::filesystem::temp_directory_path() /
            ("dyffpad_" + tag + "_" + std::to_string(rng.next() % 1000000007) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void spit(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

/// Sinusoidal grating with ridge direction `angle` (radians from +x), 8-bit.
inline dyffpad::GrayImage grating(int side, double period, double angle, double phase = 0.0, double amplitude = 100.0) {
  dyffpad::GrayImage img(side, side);
  const double nx = -std::sin(angle), ny = std::cos(angle);
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      const double v = 128.0 + amplitude * std::cos(2.0 * std::numbers::pi * (nx * x + ny * y) / period + phase);
      img.at(x, y) = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
    }
  }
  return img;
}

inline dyffpad::GrayImage noise_image(int w, int h, std::uint64_t seed) {
  dyffpad::Rng rng(seed);
  dyffpad::GrayImage img(w, h);
  for (auto& v : img.data()) v = static_cast<std::uint8_t>(rng.below(256));
  return img;
}

/// Block from a function of (row, col) with values in [0,1].
template <typename F>
dyffpad::Block make_block(int rows, int cols, F f) {
  std::vector<double> px(static_cast<std::size_t>(rows) * cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) px[static_cast<std::size_t>(r) * cols + c] = f(r, c);
  return dyffpad::Block(rows, cols, std::move(px));
}

}  // namespace fixtures
