#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "dyffpad/data.hpp"
#include "dyffpad/error.hpp"
#include "dyffpad/rng.hpp"

namespace dyffpad::data {

namespace {

constexpr double kFlowCorrelationFraction = 1.0 / 8.0;  // of the image side
constexpr double kFlowAmplitude = 6.0;                  // px of phase displacement
constexpr double kJitterCorrelation = 4.0;              // px
constexpr double kMaxDutyOffset = 0.9;
constexpr double kMidGray = 128.0;
constexpr double kContrast = 100.0;

std::vector<double> gaussian_kernel(double sigma) {
  const int r = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * r + 1));
  double sum = 0.0;
  for (int i = -r; i <= r; ++i) {
    k[static_cast<std::size_t>(i + r)] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += k[static_cast<std::size_t>(i + r)];
  }
  for (auto& v : k) v /= sum;
  return k;
}

/// Gaussian-smoothed white noise with unit variance, side x side.
std::vector<double> smooth_field(int side, double sigma, Rng& rng) {
  const auto kernel = gaussian_kernel(sigma);
  const int r = static_cast<int>(kernel.size() / 2);
  const int big = side + 2 * r;
  std::vector<double> noise(static_cast<std::size_t>(big) * big);
  for (auto& v : noise) v = rng.normal();

  std::vector<double> tmp(static_cast<std::size_t>(big) * side, 0.0);  // big rows, side cols
  for (int y = 0; y < big; ++y) {
    for (int x = 0; x < side; ++x) {
      double acc = 0.0;
      for (int k = 0; k <= 2 * r; ++k) acc += kernel[static_cast<std::size_t>(k)] * noise[static_cast<std::size_t>(y) * big + x + k];
      tmp[static_cast<std::size_t>(y) * side + x] = acc;
    }
  }
  double energy = 0.0;
  for (double w : kernel) energy += w * w;  // per-axis; 2-D std is energy
  std::vector<double> out(static_cast<std::size_t>(side) * side, 0.0);
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      double acc = 0.0;
      for (int k = 0; k <= 2 * r; ++k) acc += kernel[static_cast<std::size_t>(k)] * tmp[static_cast<std::size_t>(y + k) * side + x];
      out[static_cast<std::size_t>(y) * side + x] = acc / energy;
    }
  }
  return out;
}

void box_blur(std::vector<double>& v, int side, int width) {
  if (width <= 1) return;
  const int r = width / 2;
  std::vector<double> tmp(v.size());
  auto clampi = [side](int i) { return std::clamp(i, 0, side - 1); };
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      double acc = 0.0;
      for (int k = -r; k <= r; ++k) acc += v[static_cast<std::size_t>(y) * side + clampi(x + k)];
      tmp[static_cast<std::size_t>(y) * side + x] = acc / (2 * r + 1);
    }
  }
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      double acc = 0.0;
      for (int k = -r; k <= r; ++k) acc += tmp[static_cast<std::size_t>(clampi(y + k)) * side + x];
      v[static_cast<std::size_t>(y) * side + x] = acc / (2 * r + 1);
    }
  }
}

}  // namespace

void SynthParams::validate() const {
  if (side < 32) throw Error(ErrorCode::InvalidConfig, "synthetic side must be at least 32");
  if (!(period >= 5.0 && period <= 20.0)) throw Error(ErrorCode::InvalidConfig, "ridge period must lie in [5, 20] px");
  if (!(width_jitter >= 0.0)) throw Error(ErrorCode::InvalidConfig, "width_jitter must be >= 0");
  if (blur_width < 1 || blur_width % 2 == 0) throw Error(ErrorCode::InvalidConfig, "blur_width must be odd and >= 1");
  if (!(noise_sigma >= 0.0) || !(live_noise_sigma >= 0.0)) {
    throw Error(ErrorCode::InvalidConfig, "noise levels must be >= 0");
  }
}

GrayImage synth_fingerprint(const SynthParams& p, Label cls) {
  p.validate();
  const int side = p.side;
  const std::size_t n = static_cast<std::size_t>(side) * side;

  Rng flow_rng(mix_seed(p.seed, 1));
  const double theta = std::numbers::pi * flow_rng.uniform();
  const double phase0 = 2.0 * std::numbers::pi * flow_rng.uniform();
  const auto warp = smooth_field(side, side * kFlowCorrelationFraction, flow_rng);
  const double nx = -std::sin(theta);
  const double ny = std::cos(theta);
  const double k = 2.0 * std::numbers::pi / p.period;

  std::vector<double> phase(n);
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * side + x;
      phase[i] = k * (nx * x + ny * y + kFlowAmplitude * warp[i]) + phase0;
    }
  }

  std::vector<double> v(n);
  double noise = p.live_noise_sigma;
  if (cls == Label::Live) {
    for (std::size_t i = 0; i < n; ++i) v[i] = std::cos(phase[i]);
  } else {
    // Shifting the cosine before clipping moves the ridge/valley boundary; near
    // the zero crossing a unit offset changes the ridge width by period/pi px.
    Rng jitter_rng(mix_seed(p.seed, 2));
    const auto field = smooth_field(side, kJitterCorrelation, jitter_rng);
    const double scale = p.width_jitter * std::numbers::pi / p.period;
    for (std::size_t i = 0; i < n; ++i) {
      const double delta = std::clamp(scale * field[i], -kMaxDutyOffset, kMaxDutyOffset);
      v[i] = std::clamp(std::cos(phase[i]) + delta, -1.0, 1.0);
    }
    box_blur(v, side, p.blur_width);
    noise = p.noise_sigma;
  }

  Rng noise_rng(mix_seed(p.seed, cls == Label::Live ? 3 : 4));
  GrayImage img(side, side);
  auto data = img.data();
  for (std::size_t i = 0; i < n; ++i) {
    // Ridges (cos = 1) are dark.
    const double level = kMidGray - kContrast * v[i] + 255.0 * noise * noise_rng.normal();
    data[i] = static_cast<std::uint8_t>(std::clamp(std::lround(level), 0L, 255L));
  }
  return img;
}

DatasetManifest make_synthetic_set(const std::filesystem::path& dir, int count_per_class, const SynthParams& base) {
  base.validate();
  if (count_per_class < 1) throw Error(ErrorCode::InvalidConfig, "count per class must be >= 1");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + dir.string() + ": " + ec.message());

  DatasetManifest m;
  m.sensor = "synthetic";
  m.base_dir = dir;
  const auto count = static_cast<std::size_t>(count_per_class);
  const std::size_t train_count = (count * 8 + 5) / 10;

  for (Label cls : {Label::Live, Label::Spoof}) {
    const std::uint64_t cls_id = cls == Label::Live ? 0 : 1;
    std::vector<std::size_t> order(count);
    for (std::size_t i = 0; i < count; ++i) order[i] = i;
    Rng split_rng(mix_seed(base.seed, 100 + cls_id));
    for (std::size_t i = count; i > 1; --i) std::swap(order[i - 1], order[split_rng.below(i)]);
    std::vector<bool> is_train(count, false);
    for (std::size_t i = 0; i < train_count && i < count; ++i) is_train[order[i]] = true;
    // Keep both classes in the train split even for tiny counts.
    if (train_count == 0) is_train[order[0]] = true;

    for (std::size_t i = 0; i < count; ++i) {
      SynthParams p = base;
      p.seed = mix_seed(base.seed, 1000 + 2 * i + cls_id);
      char name[64];
      std::snprintf(name, sizeof name, "%s_%04zu.pgm", cls == Label::Live ? "live" : "spoof", i);
      write_pgm(synth_fingerprint(p, cls), dir / name);
      ManifestEntry e;
      e.path = name;
      e.label = cls;
      e.material = cls == Label::Live ? "live" : "synthetic";
      e.split = is_train[i] ? Split::Train : Split::Test;
      m.entries.push_back(std::move(e));
    }
  }
  write_manifest(m, dir / "manifest.csv");
  return m;
}

}  // namespace dyffpad::data
