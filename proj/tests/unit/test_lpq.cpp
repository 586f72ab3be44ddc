#include <numeric>

#include "doctest.h"
#include "dyffpad/lpq.hpp"
#include "expect.hpp"
#include "fixtures.hpp"
#include "lpq_blur.hpp"
#include "oracles.hpp"

using namespace dyffpad;
using expect::throws_code;

namespace {

double total(const lpq::LpqHistogram& h) { return std::accumulate(h.begin(), h.end(), 0.0); }

}  // namespace

TEST_CASE("constant image codes to zero") {
  GrayImage img(16, 16, 137);
  CHECK(lpq::lpq_code(img, 8, 8) == 0);
  const auto h = lpq::lpq_histogram(img);
  CHECK(h[0] == 1.0);
  CHECK(total(h) == 1.0);
}

TEST_CASE("centred impulse codes to 15") {
  GrayImage img(7, 7, 0);
  img.at(3, 3) = 255;
  CHECK(lpq::lpq_code(img, 3, 3) == 15);
  const auto g = lpq::local_coefficients(img, 3, 3, {});
  for (int j = 0; j < 4; ++j) CHECK(g[static_cast<std::size_t>(j)] > 0.0);
}

TEST_CASE("random windows match the brute-force DFT") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto img = fixtures::noise_image(7, 7, seed);
    CHECK(lpq::lpq_code(img, 3, 3) == oracle::lpq_code(img, 3, 3, 7));
    const auto g = lpq::local_coefficients(img, 3, 3, {});
    const auto ref = oracle::lpq_components(img, 3, 3, 7);
    for (std::size_t j = 0; j < 8; ++j) CHECK(g[j] == doctest::Approx(ref[j]).epsilon(1e-9).scale(255.0));
  }
}

TEST_CASE("every interior pixel of a 64x64 image matches the oracle") {
  const auto img = fixtures::noise_image(64, 64, 77);
  for (int y = 3; y < 61; ++y)
    for (int x = 3; x < 61; ++x) REQUIRE(lpq::lpq_code(img, x, y) == oracle::lpq_code(img, x, y, 7));
}

TEST_CASE("other odd window sizes match the oracle too") {
  for (int w : {3, 5, 9}) {
    lpq::LpqConfig cfg;
    cfg.window_size = w;
    const auto img = fixtures::noise_image(20, 20, static_cast<std::uint64_t>(w));
    for (int y = w / 2; y < 20 - w / 2; ++y)
      for (int x = w / 2; x < 20 - w / 2; ++x) CHECK(lpq::lpq_code(img, x, y, cfg) == oracle::lpq_code(img, x, y, w));
  }
}

TEST_CASE("windows leaving the image are rejected") {
  GrayImage img(10, 10, 1);
  CHECK(throws_code(ErrorCode::WindowOutOfBounds, [&] { lpq::lpq_code(img, 2, 5); }));
  CHECK(throws_code(ErrorCode::WindowOutOfBounds, [&] { lpq::lpq_code(img, 5, 7); }));
  CHECK_NOTHROW(lpq::lpq_code(img, 3, 6));
}

TEST_CASE("histogram needs an image at least one window wide") {
  CHECK(throws_code(ErrorCode::ImageTooSmall, [] { lpq::lpq_histogram(GrayImage(6, 40)); }));
  CHECK_NOTHROW(lpq::lpq_histogram(GrayImage(7, 7)));
}

TEST_CASE("histograms have 256 bins summing to one") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto img = fixtures::noise_image(17 + static_cast<int>(seed), 23, seed);
    const auto h = lpq::lpq_histogram(img);
    CHECK(h.size() == 256);
    CHECK(std::abs(total(h) - 1.0) < 1e-9);
    for (double b : h) CHECK(b >= 0.0);
  }
}

TEST_CASE("shifting a periodic image with wrap leaves the histogram unchanged") {
  // An 8x8 random tile repeated so the 32x32 interior holds whole periods.
  const auto tile = fixtures::noise_image(8, 8, 5);
  // On a torus whose size is a multiple of the period, a (3,3) wrap shift is
  // the tile shifted by (3,3).
  GrayImage img(38, 38), shifted(38, 38);
  for (int y = 0; y < 38; ++y)
    for (int x = 0; x < 38; ++x) {
      img.at(x, y) = tile.at(x % 8, y % 8);
      shifted.at(x, y) = tile.at((x + 5) % 8, (y + 5) % 8);
    }
  CHECK(lpq::lpq_histogram(img) == lpq::lpq_histogram(shifted));
}

TEST_CASE("codes survive positive scaling and offsets") {
  Rng rng(6);
  GrayImage img(24, 24);
  for (auto& v : img.data()) v = static_cast<std::uint8_t>(rng.below(100));
  GrayImage scaled(24, 24), offset(24, 24);
  for (std::size_t i = 0; i < img.data().size(); ++i) {
    scaled.data()[i] = static_cast<std::uint8_t>(2 * img.data()[i]);
    offset.data()[i] = static_cast<std::uint8_t>(img.data()[i] + 77);
  }
  for (int y = 3; y < 21; ++y)
    for (int x = 3; x < 21; ++x) {
      const int c = lpq::lpq_code(img, x, y);
      CHECK(lpq::lpq_code(scaled, x, y) == c);
      CHECK(lpq::lpq_code(offset, x, y) == c);
    }
}

TEST_CASE("blurred grating keeps its histogram") {
  for (double angle : {0.0, 0.5, 1.1, 2.0}) {
    for (double period : {8.0, 11.0}) {
      const auto img = fixtures::grating(96, period, angle, 0.4);
      const double d = lpq::chi_squared(lpq::lpq_histogram(img), lpq::lpq_histogram(fixtures::blur121(img)));
      INFO("angle " << angle << " period " << period << " chi2 " << d);
      CHECK(d < 0.05);
    }
  }
}

TEST_CASE("chi squared distance basics") {
  lpq::LpqHistogram a{}, b{};
  a[0] = 1.0;
  b[1] = 1.0;
  CHECK(lpq::chi_squared(a, a) == 0.0);
  CHECK(lpq::chi_squared(a, b) == doctest::Approx(2.0));
}

TEST_CASE("config validation") {
  lpq::LpqConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.window_size = 6;
  CHECK(throws_code(ErrorCode::InvalidConfig, [&] { cfg.validate(); }));
  cfg.window_size = 1;
  CHECK(throws_code(ErrorCode::InvalidConfig, [&] { cfg.validate(); }));
  cfg = {};
  cfg.rho = 1.0;
  CHECK(throws_code(ErrorCode::InvalidConfig, [&] { cfg.validate(); }));
  cfg = {};
  cfg.frequency = 0.7;
  CHECK(throws_code(ErrorCode::InvalidConfig, [&] { cfg.validate(); }));
  CHECK(lpq::LpqConfig{}.effective_frequency() == doctest::Approx(1.0 / 7.0));
}

TEST_CASE("decorrelated codes are deterministic and still form a distribution") {
  lpq::LpqConfig cfg;
  cfg.decorrelate = true;
  const auto img = fixtures::noise_image(40, 40, 12);
  const auto h1 = lpq::lpq_histogram(img, cfg);
  const auto h2 = lpq::lpq_histogram(img, cfg);
  CHECK(h1 == h2);
  CHECK(std::abs(total(h1) - 1.0) < 1e-9);
  CHECK(lpq::lpq_histogram(GrayImage(12, 12, 9), cfg)[0] == 1.0);
  // Whitening mixes components, so on noise some codes must differ from the plain ones.
  int differ = 0;
  for (int y = 3; y < 37; ++y)
    for (int x = 3; x < 37; ++x) differ += lpq::lpq_code(img, x, y, cfg) != lpq::lpq_code(img, x, y);
  CHECK(differ > 0);
}
