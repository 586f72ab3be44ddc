#pragma once

#include <array>
#include <complex>
#include <span>
#include <string_view>
#include <vector>

#include "dyffpad/image.hpp"
#include "dyffpad/imgproc.hpp"

namespace dyffpad::quality {

struct QualityConfig {
  int block_rows = kDefaultBlockSide;
  int block_cols = kDefaultBlockSide;
  /// Weight of the two spectral neighbours in the FDA numerator.
  double fda_weight = 0.3;
  /// Width standard deviation (px) above which a tracked ridge/valley is abnormal.
  double abnormal_threshold = 1.0;
  int gabor_orientations = 8;
  double gabor_frequency = 0.1;
  double gabor_sigma = 4.0;
  /// Expected ridge/valley width at 500 dpi. Reported in the config echo only.
  double ridge_width_min = 5.0;
  double ridge_width_max = 10.0;
  /// Intensity variance on the [0,255] scale a block needs to count as foreground.
  double foreground_var_threshold = kDefaultRoiVarThreshold;

  void validate() const;
};

// ---------------------------------------------------------------- FDA

/// Column-mean signature of a vertically aligned block.
std::vector<double> ridge_signature(const Block& vertical);

/// Throws DegenerateSignature when the non-DC spectrum is identically zero.
double fda_from_signature(std::span<const double> signature, double weight);
double fda(const Block& vertical, double weight = 0.3);

// ---------------------------------------------------------------- OCL

double ocl_from_gradients(std::span<const double> dx, std::span<const double> dy);
double ocl(const Block& b);

// ---------------------------------------------------------------- Gabor

/// Zero-mean complex Gabor kernels at evenly spaced orientations.
class GaborBank {
 public:
  GaborBank(int orientations, double frequency, double sigma);

  int orientations() const noexcept { return static_cast<int>(kernels_.size()); }
  int support() const noexcept { return 2 * radius_ + 1; }
  /// Mean response magnitude per orientation over every position where the kernel fits.
  std::vector<double> mean_magnitudes(const Block& b) const;

 private:
  int radius_;
  std::vector<std::vector<std::complex<double>>> kernels_;
};

double gabor_quality(const Block& b, const GaborBank& bank);
double gabor_quality(const Block& b, const QualityConfig& cfg);

// ---------------------------------------------------------------- ridge/valley runs

struct Run {
  RvLabel label = RvLabel::Valley;
  int start = 0;
  int width = 0;
};

/// Interior runs per row; rows with fewer than two interior runs are left empty.
struct RidgeValleyProfile {
  std::vector<std::vector<Run>> rows;
};

struct Track {
  RvLabel label = RvLabel::Valley;
  std::vector<int> widths;
};

RidgeValleyProfile ridge_valley_profile(const BinaryBlock& bb);

/// Links runs row to row by maximal column overlap; returns tracks spanning >= 2 rows.
std::vector<Track> track_runs(const RidgeValleyProfile& p);

double rvc(const RidgeValleyProfile& p);

struct AbnormalCounts {
  int ridges = 0;
  int valleys = 0;
};
AbnormalCounts abnormal_counts(const RidgeValleyProfile& p, double threshold);

struct Smoothness {
  double ridge = 0.0;
  double valley = 0.0;
};
Smoothness rvs(const RidgeValleyProfile& p);

// ---------------------------------------------------------------- aggregation

struct BlockQuality {
  double fda = 0.0;
  double ocl = 0.0;
  double gabor = 0.0;
  double rvc = 0.0;
  double rws = 0.0;
  double vws = 0.0;
  int r_ab = 0;
  int v_ab = 0;
  /// Foreground and non-flat.
  bool valid = false;
  bool fda_valid = false;
  bool profile_valid = false;
};

BlockQuality block_quality(const Block& b, const QualityConfig& cfg, const GaborBank& bank);

inline constexpr int kQualityDim = 13;

enum QualityIndex : int {
  kRwsMean = 0,
  kRwsStd,
  kVwsMean,
  kVwsStd,
  kRabMean,
  kVabMean,
  kRvcMean,
  kRvcStd,
  kFdaMean,
  kFdaStd,
  kOclMean,
  kOclStd,
  kGaborMean,
};

using QualityVector = std::array<double, kQualityDim>;

std::string_view quality_name(int index);

/// Aggregates over a list of per-block results (population std; empty feature lists give 0).
QualityVector aggregate(std::span<const BlockQuality> blocks);

/// Full pipeline: ROI crop, block tiling, per-block features, aggregation.
/// Throws NoValidBlocks when no foreground, non-flat block exists.
QualityVector quality_vector(const GrayImage& img, const QualityConfig& cfg = {});

/// Mean and population standard deviation, summed in sorted order.
struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};
MeanStd mean_std(std::span<const double> values);

}  // namespace dyffpad::quality
