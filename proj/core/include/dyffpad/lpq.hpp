#pragma once

#include <array>
#include <cstdint>

#include "dyffpad/image.hpp"

namespace dyffpad::lpq {

struct LpqConfig {
  int window_size = 7;
  /// Frequency in cycles/pixel; zero selects 1/window_size.
  double frequency = 0.0;
  bool decorrelate = false;
  double rho = 0.9;

  double effective_frequency() const noexcept {
    return frequency > 0.0 ? frequency : 1.0 / window_size;
  }
  /// Throws InvalidConfig when a field is out of range.
  void validate() const;
};

inline constexpr int kBins = 256;
using LpqHistogram = std::array<double, kBins>;

/// The eight quantized components for one pixel: Re f(u1..u4), Im f(u1..u4),
/// with u1=(a,0), u2=(0,a), u3=(a,a), u4=(a,-a) in (x, y) order.
using Coefficients = std::array<double, 8>;

/// Windowed Fourier coefficients around (x, y) with a uniform window.
Coefficients local_coefficients(const GrayImage& img, int x, int y, const LpqConfig& cfg);

/// Sign-quantizes the components: bit j set iff component j is positive.
/// Magnitudes below a tiny fraction of `scale` count as zero, which keeps
/// analytically-zero coefficients (e.g. on a flat window) from picking up
/// rounding noise.
std::uint8_t quantize(const Coefficients& g, double scale);

std::uint8_t lpq_code(const GrayImage& img, int x, int y, const LpqConfig& cfg = {});

/// Normalized histogram of codes over every pixel whose window fits inside the image.
LpqHistogram lpq_histogram(const GrayImage& img, const LpqConfig& cfg = {});

/// Chi-squared distance sum (a-b)^2/(a+b) over bins with a+b > 0.
double chi_squared(const LpqHistogram& a, const LpqHistogram& b);

}  // namespace dyffpad::lpq
