#include "dyffpad/quality.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "dyffpad/error.hpp"

namespace dyffpad::quality {

void QualityConfig::validate() const {
  if (block_rows < kMinBlockSide || block_cols < kMinBlockSide) {
    throw Error(ErrorCode::InvalidConfig, "quality block must be at least 8x8");
  }
  if (!(fda_weight >= 0.0 && fda_weight <= 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "fda_weight must lie in [0, 1]");
  }
  if (!(abnormal_threshold > 0.0)) throw Error(ErrorCode::InvalidConfig, "abnormal_threshold must be > 0");
  if (gabor_orientations < 4) throw Error(ErrorCode::InvalidConfig, "need at least 4 Gabor orientations");
  if (!(gabor_frequency > 0.0 && gabor_frequency <= 0.5) || !(gabor_sigma > 0.0)) {
    throw Error(ErrorCode::InvalidConfig, "Gabor frequency must lie in (0, 0.5] and sigma be positive");
  }
  if (!(ridge_width_min > 0.0 && ridge_width_min <= ridge_width_max)) {
    throw Error(ErrorCode::InvalidConfig, "ridge width range is empty");
  }
  if (!(foreground_var_threshold >= 0.0)) {
    throw Error(ErrorCode::InvalidConfig, "foreground variance threshold must be >= 0");
  }
}

MeanStd mean_std(std::span<const double> values) {
  if (values.empty()) return {};
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  double sum = 0.0;
  for (double x : v) sum += x;
  const double mean = sum / static_cast<double>(v.size());
  double sq = 0.0;
  for (double x : v) sq += (x - mean) * (x - mean);
  return {mean, std::sqrt(sq / static_cast<double>(v.size()))};
}

// ---------------------------------------------------------------- FDA

std::vector<double> ridge_signature(const Block& vertical) {
  std::vector<double> sig(static_cast<std::size_t>(vertical.cols()), 0.0);
  for (int r = 0; r < vertical.rows(); ++r) {
    for (int c = 0; c < vertical.cols(); ++c) sig[static_cast<std::size_t>(c)] += vertical.at(r, c);
  }
  for (double& s : sig) s /= vertical.rows();
  return sig;
}

double fda_from_signature(std::span<const double> signature, double weight) {
  const int n = static_cast<int>(signature.size());
  const int half = n / 2;
  if (half < 1) throw Error(ErrorCode::DegenerateSignature, "signature too short");
  std::vector<double> amp(static_cast<std::size_t>(half) + 2, 0.0);  // amp[0] and amp[half+1] stay 0
  double total = 0.0, mass = 0.0;
  for (double v : signature) mass += std::abs(v);
  for (int f = 1; f <= half; ++f) {
    std::complex<double> acc = 0.0;
    for (int x = 0; x < n; ++x) {
      acc += signature[static_cast<std::size_t>(x)] * std::polar(1.0, -2.0 * std::numbers::pi * f * x / n);
    }
    amp[static_cast<std::size_t>(f)] = std::abs(acc);
    total += amp[static_cast<std::size_t>(f)];
  }
  if (total <= 1e-12 * mass) throw Error(ErrorCode::DegenerateSignature, "zero non-DC spectrum");
  int fmax = 1;
  for (int f = 2; f <= half; ++f) {
    if (amp[static_cast<std::size_t>(f)] > amp[static_cast<std::size_t>(fmax)]) fmax = f;
  }
  const std::size_t k = static_cast<std::size_t>(fmax);
  const double num = amp[k] + weight * (amp[k - 1] * (fmax > 1) + amp[k + 1]);
  return std::clamp(num / total, 0.0, 1.0);
}

double fda(const Block& vertical, double weight) {
  const auto sig = ridge_signature(vertical);
  return fda_from_signature(sig, weight);
}

// ---------------------------------------------------------------- OCL

double ocl_from_gradients(std::span<const double> dx, std::span<const double> dy) {
  if (dx.size() != dy.size()) throw Error(ErrorCode::ShapeMismatch, "dx/dy length differ");
  if (dx.empty()) return 0.0;
  double a = 0.0, b = 0.0, c = 0.0;
  for (std::size_t i = 0; i < dx.size(); ++i) {
    a += dx[i] * dx[i];
    b += dy[i] * dy[i];
    c += dx[i] * dy[i];
  }
  const double n = static_cast<double>(dx.size());
  a /= n;
  b /= n;
  c /= n;
  const double root = std::sqrt((a - b) * (a - b) + 4.0 * c * c);
  const double lmax = (a + b + root) / 2.0;
  const double lmin = (a + b - root) / 2.0;
  if (!(lmax > 0.0)) return 0.0;
  return std::clamp(1.0 - lmin / lmax, 0.0, 1.0);
}

double ocl(const Block& b) {
  const Gradients g = sobel_gradients(b);
  return ocl_from_gradients(g.dx, g.dy);
}

// ---------------------------------------------------------------- Gabor

GaborBank::GaborBank(int orientations, double frequency, double sigma)
    : radius_(static_cast<int>(std::ceil(3.0 * sigma))) {
  if (orientations < 1 || !(sigma > 0.0)) throw Error(ErrorCode::InvalidConfig, "bad Gabor bank");
  const int side = 2 * radius_ + 1;
  kernels_.reserve(static_cast<std::size_t>(orientations));
  for (int i = 0; i < orientations; ++i) {
    const double theta = std::numbers::pi * i / orientations;
    const double ct = std::cos(theta), st = std::sin(theta);
    std::vector<std::complex<double>> k(static_cast<std::size_t>(side) * side);
    std::vector<double> env(k.size());
    std::complex<double> ksum = 0.0;
    double esum = 0.0;
    for (int y = -radius_; y <= radius_; ++y) {
      for (int x = -radius_; x <= radius_; ++x) {
        const std::size_t idx = static_cast<std::size_t>(y + radius_) * side + (x + radius_);
        env[idx] = std::exp(-(x * x + y * y) / (2.0 * sigma * sigma));
        k[idx] = env[idx] * std::polar(1.0, 2.0 * std::numbers::pi * frequency * (x * ct + y * st));
        ksum += k[idx];
        esum += env[idx];
      }
    }
    // Remove the DC response with an envelope-shaped correction.
    const std::complex<double> kappa = ksum / esum;
    for (std::size_t idx = 0; idx < k.size(); ++idx) k[idx] -= kappa * env[idx];
    kernels_.push_back(std::move(k));
  }
}

std::vector<double> GaborBank::mean_magnitudes(const Block& b) const {
  const int side = support();
  if (b.rows() < side || b.cols() < side) {
    throw Error(ErrorCode::BlockTooSmall, "block smaller than the Gabor support");
  }
  std::vector<double> out;
  out.reserve(kernels_.size());
  const int ny = b.rows() - side + 1;
  const int nx = b.cols() - side + 1;
  for (const auto& k : kernels_) {
    double acc = 0.0;
    for (int y = 0; y < ny; ++y) {
      for (int x = 0; x < nx; ++x) {
        std::complex<double> resp = 0.0;
        for (int ky = 0; ky < side; ++ky) {
          const auto* krow = &k[static_cast<std::size_t>(ky) * side];
          for (int kx = 0; kx < side; ++kx) resp += krow[kx] * b.at(y + ky, x + kx);
        }
        acc += std::abs(resp);
      }
    }
    out.push_back(acc / (static_cast<double>(nx) * ny));
  }
  return out;
}

double gabor_quality(const Block& b, const GaborBank& bank) {
  const auto mags = bank.mean_magnitudes(b);
  return mean_std(mags).std;
}

double gabor_quality(const Block& b, const QualityConfig& cfg) {
  return gabor_quality(b, GaborBank(cfg.gabor_orientations, cfg.gabor_frequency, cfg.gabor_sigma));
}

// ---------------------------------------------------------------- ridge/valley runs

RidgeValleyProfile ridge_valley_profile(const BinaryBlock& bb) {
  RidgeValleyProfile p;
  p.rows.resize(static_cast<std::size_t>(bb.rows));
  bool any = false;
  for (int r = 0; r < bb.rows; ++r) {
    std::vector<Run> runs;
    int start = 0;
    for (int c = 1; c <= bb.cols; ++c) {
      if (c == bb.cols || bb.at(r, c) != bb.at(r, start)) {
        runs.push_back({bb.at(r, start), start, c - start});
        start = c;
      }
    }
    // First and last runs are cut by the block edge.
    if (runs.size() >= 4) {
      p.rows[static_cast<std::size_t>(r)].assign(runs.begin() + 1, runs.end() - 1);
      any = true;
    }
  }
  if (!any) throw Error(ErrorCode::EmptyProfile, "no row holds two interior runs");
  return p;
}

namespace {

int overlap(const Run& a, const Run& b) {
  return std::min(a.start + a.width, b.start + b.width) - std::max(a.start, b.start);
}

double pop_std(const std::vector<int>& w) {
  std::vector<double> d(w.begin(), w.end());
  return mean_std(d).std;
}

}  // namespace

std::vector<Track> track_runs(const RidgeValleyProfile& p) {
  std::vector<Track> tracks;
  struct Active {
    std::size_t track;
    Run run;
  };
  std::vector<Active> active;
  for (const auto& row : p.rows) {
    if (row.empty()) {
      active.clear();
      continue;
    }
    std::vector<bool> claimed(row.size(), false);
    std::vector<Active> next;
    for (const auto& prev : active) {
      int best = -1;
      int best_overlap = 0;
      for (std::size_t j = 0; j < row.size(); ++j) {
        if (claimed[j] || row[j].label != prev.run.label) continue;
        const int ov = overlap(prev.run, row[j]);
        if (ov > best_overlap) {
          best_overlap = ov;
          best = static_cast<int>(j);
        }
      }
      if (best >= 0) {
        claimed[static_cast<std::size_t>(best)] = true;
        tracks[prev.track].widths.push_back(row[static_cast<std::size_t>(best)].width);
        next.push_back({prev.track, row[static_cast<std::size_t>(best)]});
      }
    }
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (claimed[j]) continue;
      tracks.push_back({row[j].label, {row[j].width}});
      next.push_back({tracks.size() - 1, row[j]});
    }
    std::sort(next.begin(), next.end(), [](const Active& a, const Active& b) { return a.run.start < b.run.start; });
    active = std::move(next);
  }
  std::erase_if(tracks, [](const Track& t) { return t.widths.size() < 2; });
  return tracks;
}

double rvc(const RidgeValleyProfile& p) {
  std::vector<double> rw, vw;
  for (const auto& row : p.rows) {
    for (const auto& run : row) (run.label == RvLabel::Ridge ? rw : vw).push_back(run.width);
  }
  if (rw.empty() && vw.empty()) throw Error(ErrorCode::EmptyProfile, "profile has no runs");
  const double rmean = mean_std(rw).mean;
  const double vmean = mean_std(vw).mean;
  double dev = 0.0, total = 0.0;
  for (double w : rw) {
    dev += std::abs(w - rmean);
    total += w;
  }
  for (double w : vw) {
    dev += std::abs(w - vmean);
    total += w;
  }
  return dev / total;
}

AbnormalCounts abnormal_counts(const RidgeValleyProfile& p, double threshold) {
  const auto tracks = track_runs(p);
  if (tracks.empty()) throw Error(ErrorCode::EmptyProfile, "no run spans two rows");
  AbnormalCounts out;
  for (const auto& t : tracks) {
    if (pop_std(t.widths) > threshold) ++(t.label == RvLabel::Ridge ? out.ridges : out.valleys);
  }
  return out;
}

Smoothness rvs(const RidgeValleyProfile& p) {
  const auto tracks = track_runs(p);
  if (tracks.empty()) throw Error(ErrorCode::EmptyProfile, "no run spans two rows");
  std::vector<double> rs, vs;
  for (const auto& t : tracks) (t.label == RvLabel::Ridge ? rs : vs).push_back(pop_std(t.widths));
  return {mean_std(rs).mean, mean_std(vs).mean};
}

// ---------------------------------------------------------------- aggregation

BlockQuality block_quality(const Block& b, const QualityConfig& cfg, const GaborBank& bank) {
  BlockQuality q;
  Orientation o;
  try {
    o = estimate_orientation(b);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::FlatBlock) return q;
    throw;
  }
  q.valid = true;
  q.ocl = ocl(b);
  q.gabor = gabor_quality(b, bank);

  Block vertical;
  try {
    vertical = rotate_to_vertical(b, o);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::BlockTooSmall) return q;
    throw;
  }
  try {
    q.fda = fda(vertical, cfg.fda_weight);
    q.fda_valid = true;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::DegenerateSignature) throw;
  }
  try {
    const auto profile = ridge_valley_profile(binarize(vertical));
    q.rvc = rvc(profile);
    const auto counts = abnormal_counts(profile, cfg.abnormal_threshold);
    const auto smooth = rvs(profile);
    q.r_ab = counts.ridges;
    q.v_ab = counts.valleys;
    q.rws = smooth.ridge;
    q.vws = smooth.valley;
    q.profile_valid = true;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::EmptyProfile) throw;
  }
  return q;
}

std::string_view quality_name(int index) {
  static constexpr std::array<std::string_view, kQualityDim> names{
      "rws_mean", "rws_std", "vws_mean", "vws_std", "rab_mean", "vab_mean", "rvc_mean",
      "rvc_std",  "fda_mean", "fda_std", "ocl_mean", "ocl_std", "gabor_mean"};
  return names.at(static_cast<std::size_t>(index));
}

QualityVector aggregate(std::span<const BlockQuality> blocks) {
  std::vector<double> rws, vws, rab, vab, rvcs, fdas, ocls, gabors;
  for (const auto& b : blocks) {
    if (!b.valid) continue;
    ocls.push_back(b.ocl);
    gabors.push_back(b.gabor);
    if (b.fda_valid) fdas.push_back(b.fda);
    if (b.profile_valid) {
      rws.push_back(b.rws);
      vws.push_back(b.vws);
      rab.push_back(b.r_ab);
      vab.push_back(b.v_ab);
      rvcs.push_back(b.rvc);
    }
  }
  const auto rw = mean_std(rws), vw = mean_std(vws), rv = mean_std(rvcs), fd = mean_std(fdas),
             oc = mean_std(ocls);
  return {rw.mean, rw.std, vw.mean, vw.std, mean_std(rab).mean, mean_std(vab).mean, rv.mean,
          rv.std,  fd.mean, fd.std, oc.mean, oc.std, mean_std(gabors).mean};
}

QualityVector quality_vector(const GrayImage& img, const QualityConfig& cfg) {
  cfg.validate();
  RoiBox roi;
  try {
    roi = segment_roi(img, std::min(cfg.block_rows, cfg.block_cols), cfg.foreground_var_threshold);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::NoForeground || e.code() == ErrorCode::ImageTooSmall) {
      throw Error(ErrorCode::NoValidBlocks, e.what());
    }
    throw;
  }
  const GrayImage fg = crop(img, roi);
  const auto blocks = partition_blocks(fg, cfg.block_rows, cfg.block_cols);
  const GaborBank bank(cfg.gabor_orientations, cfg.gabor_frequency, cfg.gabor_sigma);

  std::vector<BlockQuality> results;
  results.reserve(blocks.size());
  // Foreground test on the [0,255] scale used by the ROI segmentation.
  const double var_threshold = cfg.foreground_var_threshold / (255.0 * 255.0);
  for (const auto& b : blocks) {
    const auto ms = mean_std(b.pixels());
    if (ms.std * ms.std < var_threshold) continue;
    results.push_back(block_quality(b, cfg, bank));
  }
  if (std::none_of(results.begin(), results.end(), [](const BlockQuality& q) { return q.valid; })) {
    throw Error(ErrorCode::NoValidBlocks, "no foreground block with usable gradients");
  }
  return aggregate(results);
}

}  // namespace dyffpad::quality
