#include "dyffpad/lpq.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "dyffpad/error.hpp"

namespace dyffpad::lpq {

namespace {

using cplx = std::complex<double>;

// Relative magnitude below which a component is treated as exactly zero.
constexpr double kZeroTolerance = 1e-10;

void check_window(const GrayImage& img, int x, int y, int r) {
  if (x - r < 0 || y - r < 0 || x + r >= img.width() || y + r >= img.height()) {
    throw Error(ErrorCode::WindowOutOfBounds,
                "window at (" + std::to_string(x) + "," + std::to_string(y) + ") leaves the image");
  }
}

// Whitening transform V^T from the pixel correlation model rho^distance.
Eigen::Matrix<double, 8, 8> whitening_matrix(const LpqConfig& cfg) {
  const int r = cfg.window_size / 2;
  const int w = cfg.window_size;
  const int n = w * w;
  const double a = cfg.effective_frequency();
  const double two_pi = 2.0 * std::numbers::pi;

  Eigen::MatrixXd m(8, n);
  for (int ky = -r; ky <= r; ++ky) {
    for (int kx = -r; kx <= r; ++kx) {
      const int col = (ky + r) * w + (kx + r);
      const std::array<double, 4> phase{two_pi * a * kx, two_pi * a * ky, two_pi * a * (kx + ky),
                                        two_pi * a * (kx - ky)};
      for (int f = 0; f < 4; ++f) {
        m(f, col) = std::cos(phase[f]);
        m(4 + f, col) = -std::sin(phase[f]);
      }
    }
  }
  Eigen::MatrixXd c(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double dx = (i % w) - (j % w);
      const double dy = (i / w) - (j / w);
      c(i, j) = std::pow(cfg.rho, std::sqrt(dx * dx + dy * dy));
    }
  }
  Eigen::Matrix<double, 8, 8> d = m * c * m.transpose();
  // Slightly distinct diagonal scaling separates repeated singular values.
  Eigen::Matrix<double, 8, 1> diag;
  diag << 1.000007, 1.000006, 1.000005, 1.000004, 1.000003, 1.000002, 1.000001, 1.0;
  const Eigen::Matrix<double, 8, 8> scaled = diag.asDiagonal() * d * diag.asDiagonal();
  Eigen::JacobiSVD<Eigen::Matrix<double, 8, 8>> svd(scaled, Eigen::ComputeFullV);
  return svd.matrixV().transpose();
}

Coefficients whiten(const Coefficients& g, const Eigen::Matrix<double, 8, 8>& vt) {
  Eigen::Map<const Eigen::Matrix<double, 8, 1>> in(g.data());
  Coefficients out{};
  Eigen::Map<Eigen::Matrix<double, 8, 1>>(out.data()) = vt * in;
  return out;
}

}  // namespace

void LpqConfig::validate() const {
  if (window_size < 3 || window_size % 2 == 0) {
    throw Error(ErrorCode::InvalidConfig, "LPQ window size must be odd and >= 3");
  }
  const double a = effective_frequency();
  if (!(a > 0.0 && a <= 0.5)) throw Error(ErrorCode::InvalidConfig, "LPQ frequency must lie in (0, 0.5]");
  if (!(rho > 0.0 && rho < 1.0)) throw Error(ErrorCode::InvalidConfig, "LPQ rho must lie in (0, 1)");
}

Coefficients local_coefficients(const GrayImage& img, int x, int y, const LpqConfig& cfg) {
  cfg.validate();
  const int r = cfg.window_size / 2;
  check_window(img, x, y, r);
  const double a = cfg.effective_frequency();
  const double two_pi = 2.0 * std::numbers::pi;
  std::array<cplx, 4> f{};
  for (int ky = -r; ky <= r; ++ky) {
    for (int kx = -r; kx <= r; ++kx) {
      const double v = img.at(x + kx, y + ky);
      const std::array<double, 4> phase{a * kx, a * ky, a * (kx + ky), a * (kx - ky)};
      for (int i = 0; i < 4; ++i) f[i] += v * std::polar(1.0, -two_pi * phase[i]);
    }
  }
  Coefficients g{};
  for (int i = 0; i < 4; ++i) {
    g[i] = f[i].real();
    g[4 + i] = f[i].imag();
  }
  return g;
}

std::uint8_t quantize(const Coefficients& g, double scale) {
  const double tol = kZeroTolerance * (scale + 1.0);
  std::uint8_t code = 0;
  for (int j = 0; j < 8; ++j) {
    if (g[j] > tol) code = static_cast<std::uint8_t>(code | (1u << j));
  }
  return code;
}

std::uint8_t lpq_code(const GrayImage& img, int x, int y, const LpqConfig& cfg) {
  Coefficients g = local_coefficients(img, x, y, cfg);
  const int r = cfg.window_size / 2;
  double scale = 0.0;
  for (int ky = -r; ky <= r; ++ky) {
    for (int kx = -r; kx <= r; ++kx) scale += img.at(x + kx, y + ky);
  }
  if (cfg.decorrelate) g = whiten(g, whitening_matrix(cfg));
  return quantize(g, scale);
}

LpqHistogram lpq_histogram(const GrayImage& img, const LpqConfig& cfg) {
  cfg.validate();
  const int w = cfg.window_size;
  const int r = w / 2;
  if (img.width() < w || img.height() < w) {
    throw Error(ErrorCode::ImageTooSmall, "image smaller than the LPQ window");
  }
  const double a = cfg.effective_frequency();
  std::vector<cplx> kernel(static_cast<std::size_t>(w));
  for (int k = -r; k <= r; ++k) kernel[static_cast<std::size_t>(k + r)] = std::polar(1.0, -2.0 * std::numbers::pi * a * k);

  Eigen::Matrix<double, 8, 8> vt;
  if (cfg.decorrelate) vt = whitening_matrix(cfg);

  // Horizontal pass: box sum and first-frequency response for every valid column.
  const int out_w = img.width() - 2 * r;
  const int h = img.height();
  std::vector<double> h0(static_cast<std::size_t>(out_w) * h);
  std::vector<cplx> h1(static_cast<std::size_t>(out_w) * h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < out_w; ++x) {
      double s0 = 0.0;
      cplx s1 = 0.0;
      for (int k = 0; k < w; ++k) {
        const double v = img.at(x + k, y);
        s0 += v;
        s1 += v * kernel[static_cast<std::size_t>(k)];
      }
      h0[static_cast<std::size_t>(y) * out_w + x] = s0;
      h1[static_cast<std::size_t>(y) * out_w + x] = s1;
    }
  }

  std::array<std::uint64_t, kBins> counts{};
  std::uint64_t total = 0;
  for (int y = r; y < h - r; ++y) {
    for (int x = 0; x < out_w; ++x) {
      double box = 0.0;
      cplx f1 = 0.0, f2 = 0.0, f3 = 0.0, f4 = 0.0;
      for (int k = 0; k < w; ++k) {
        const std::size_t idx = static_cast<std::size_t>(y - r + k) * out_w + x;
        const cplx kv = kernel[static_cast<std::size_t>(k)];
        box += h0[idx];
        f1 += h1[idx];
        f2 += h0[idx] * kv;
        f3 += h1[idx] * kv;
        f4 += h1[idx] * std::conj(kv);
      }
      Coefficients g{f1.real(), f2.real(), f3.real(), f4.real(), f1.imag(), f2.imag(), f3.imag(), f4.imag()};
      if (cfg.decorrelate) g = whiten(g, vt);
      ++counts[quantize(g, box)];
      ++total;
    }
  }

  LpqHistogram hist{};
  for (int i = 0; i < kBins; ++i) hist[i] = static_cast<double>(counts[i]) / static_cast<double>(total);
  return hist;
}

double chi_squared(const LpqHistogram& a, const LpqHistogram& b) {
  double d = 0.0;
  for (int i = 0; i < kBins; ++i) {
    const double s = a[i] + b[i];
    if (s > 0.0) d += (a[i] - b[i]) * (a[i] - b[i]) / s;
  }
  return d;
}

}  // namespace dyffpad::lpq
