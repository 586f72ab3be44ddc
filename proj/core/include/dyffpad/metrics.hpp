#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace dyffpad::metrics {

enum class Label { Spoof = 0, Live = 1 };

/// Higher score means more live. A sample is predicted live iff score >= threshold.
struct ScoredSample {
  double score = 0.0;
  Label label = Label::Live;
  std::string material;
};

inline constexpr double kDefaultThreshold = 0.5;

/// Percent of spoofs predicted live. Throws NoSpoofSamples.
double apcer(std::span<const ScoredSample> samples, double threshold);
/// Percent of live samples predicted spoof. Throws NoLiveSamples.
double bpcer(std::span<const ScoredSample> samples, double threshold);

struct AceAccuracy {
  double ace = 0.0;
  double accuracy = 0.0;
};
AceAccuracy ace_and_accuracy(double apcer, double bpcer);

struct MaterialApcer {
  std::string material;
  std::size_t total = 0;
  std::size_t misclassified = 0;
  double apcer = 0.0;
};

struct EvalReport {
  double threshold = kDefaultThreshold;
  double apcer = 0.0;
  double bpcer = 0.0;
  double ace = 0.0;
  double accuracy = 0.0;
  std::size_t live_total = 0;
  std::size_t spoof_total = 0;
  std::size_t live_misclassified = 0;
  std::size_t spoof_misclassified = 0;
  /// Spoof materials in lexicographic order.
  std::vector<MaterialApcer> per_material;
};

/// Throws SingleClassDataset unless both classes are present.
EvalReport evaluate(std::span<const ScoredSample> samples, double threshold = kDefaultThreshold);

struct DetPoint {
  double threshold = 0.0;
  double apcer = 0.0;
  double bpcer = 0.0;
};

struct DetCurve {
  /// Ascending thresholds: every distinct score plus 0 and 1.
  std::vector<DetPoint> points;
  /// Empty when no threshold brings APCER down to 1%.
  std::optional<double> bpcer_at_apcer_1;
};

/// Throws SingleClassDataset.
DetCurve det_curve(std::span<const ScoredSample> samples);

/// BPCER at the given APCER, linearly interpolated between neighbouring points.
std::optional<double> bpcer_at_apcer(std::span<const DetPoint> points, double target_apcer);

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
};

/// Non-decreasing in both coordinates, from (0,0) to (1,1). Throws SingleClassDataset.
std::vector<RocPoint> roc_curve(std::span<const ScoredSample> samples);
/// Trapezoidal area.
double auc(std::span<const RocPoint> points);

/// `echo` is embedded verbatim under "config" when it parses as JSON.
std::string report_json(const EvalReport& report, const std::string& echo = {});
void write_report_json(const EvalReport& report, const std::filesystem::path& path, const std::string& echo = {});
void write_det_csv(const DetCurve& curve, const std::filesystem::path& path);
void write_roc_csv(std::span<const RocPoint> points, const std::filesystem::path& path);

/// Reads a DET CSV back (comment lines skipped).
DetCurve read_det_csv(const std::filesystem::path& path);

/// Per-sample scores: id,label,material,score. `ids` must match `samples` in length.
void write_scores_csv(std::span<const ScoredSample> samples, std::span<const std::string> ids,
                      const std::filesystem::path& path);
/// Throws ParseError.
std::vector<ScoredSample> read_scores_csv(const std::filesystem::path& path);

}  // namespace dyffpad::metrics
