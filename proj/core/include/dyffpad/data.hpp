#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "dyffpad/fusion.hpp"
#include "dyffpad/image.hpp"
#include "dyffpad/lpq.hpp"
#include "dyffpad/metrics.hpp"
#include "dyffpad/quality.hpp"

namespace dyffpad::data {

using metrics::Label;

enum class Split { Train, Test };

std::string_view label_name(Label label) noexcept;
std::string_view split_name(Split split) noexcept;

// ---------------------------------------------------------------- manifest

struct ManifestEntry {
  /// As written in the manifest (relative paths are relative to the manifest).
  std::string path;
  Label label = Label::Live;
  std::string material = "live";
  Split split = Split::Train;
};

struct DatasetManifest {
  std::string sensor;
  std::string version = "1";
  std::vector<ManifestEntry> entries;
  /// Directory that relative entry paths resolve against.
  std::filesystem::path base_dir;

  std::filesystem::path resolve(const ManifestEntry& e) const;
  std::map<std::tuple<Label, std::string, Split>, std::size_t> counts() const;
};

/// Parses manifest text. Throws ParseError on malformed rows or duplicate paths,
/// SingleClassTrainSplit when the train split lacks a class.
DatasetManifest parse_manifest(const std::string& text, const std::filesystem::path& base_dir);
/// parse_manifest plus a file check; throws MissingFile naming the first absent image.
DatasetManifest load_manifest(const std::filesystem::path& path);
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

// ---------------------------------------------------------------- synthetic data

struct SynthParams {
  int side = 128;
  /// Ridge-to-ridge distance in pixels.
  double period = 8.0;
  /// Standard deviation (px) of the spoof ridge-width perturbation.
  double width_jitter = 2.0;
  /// Box blur width applied to spoofs (1 disables).
  int blur_width = 3;
  /// Spoof sensor noise, as a fraction of the 8-bit range.
  double noise_sigma = 0.05;
  /// Live sensor noise, as a fraction of the 8-bit range.
  double live_noise_sigma = 0.02;
  std::uint64_t seed = 0;

  /// Throws InvalidConfig.
  void validate() const;
};

/// Oriented sinusoidal ridges following a smooth random flow field. Both
/// classes share the same flow for a given seed; spoofs add width jitter,
/// blur and stronger noise.
GrayImage synth_fingerprint(const SynthParams& p, Label cls);

/// Writes 2*count PGM files and manifest.csv into `dir` with a seeded 80/20
/// train/test split per class. Returns the manifest. Throws IoError.
DatasetManifest make_synthetic_set(const std::filesystem::path& dir, int count_per_class, const SynthParams& base);

// ---------------------------------------------------------------- features

inline constexpr int kFeatureDim = fusion::kFeatureDim;
using FeatureVector = std::array<double, kFeatureDim>;

struct ExtractionConfig {
  quality::QualityConfig quality;
  lpq::LpqConfig lpq;

  void validate() const;
  /// Canonical JSON.
  std::string to_json() const;
  /// Missing keys keep defaults. Throws InvalidConfig.
  static ExtractionConfig from_json(const std::string& text);
  /// Eight hex digits of the CRC-32 of to_json().
  std::string hash() const;
};

/// Foreground box used for the LPQ histogram and the CNN input.
RoiBox foreground_box(const GrayImage& img, const ExtractionConfig& cfg);

/// 13 quality values followed by the 256-bin LPQ histogram of the foreground.
FeatureVector extract_features(const GrayImage& img, const ExtractionConfig& cfg);

/// Foreground crop resized to side x side in [0,1].
std::vector<float> preprocess_image(const GrayImage& img, const ExtractionConfig& cfg, int side);

/// Column names: path, the quality feature names, lpq_0..lpq_255.
std::vector<std::string> feature_columns();

struct CachedFeatures {
  std::string path;
  FeatureVector values{};
};

struct FeatureCache {
  std::string config_hash;
  std::string config_json;
  std::vector<CachedFeatures> rows;
};

/// Atomic write (temp file + rename).
void write_feature_cache(const FeatureCache& cache, const std::filesystem::path& path);
/// Throws ParseError on malformed content.
FeatureCache read_feature_cache(const std::filesystem::path& path);
/// Returns the cache only when its header hash matches `cfg`.
std::optional<FeatureCache> load_valid_cache(const std::filesystem::path& path, const ExtractionConfig& cfg);

struct LabeledSample {
  std::string path;
  Label label = Label::Live;
  std::string material;
  Split split = Split::Train;
  FeatureVector features{};
  /// Preprocessed CNN input; empty when not requested.
  std::vector<float> image;
};

struct ExtractionFailure {
  std::string path;
  std::string reason;
};

struct SplitData {
  std::vector<LabeledSample> train;
  std::vector<LabeledSample> test;
  std::vector<ExtractionFailure> failures;
};

struct BuildOptions {
  /// CNN input side; 0 skips image preprocessing.
  int image_side = 0;
  /// Reuse features from this cache when its config hash matches.
  const FeatureCache* cache = nullptr;
  /// Rethrow the first extraction failure instead of skipping the sample.
  bool strict = false;
};

/// Reads, extracts and (optionally) preprocesses every manifest entry.
/// Failing samples are skipped and listed. Throws EmptySplit when nothing survives.
SplitData build_split(const DatasetManifest& manifest, const ExtractionConfig& cfg, const BuildOptions& opt = {});

/// Packs samples into model tensors (labels: live = 1).
fusion::TensorDataset to_tensors(const std::vector<LabeledSample>& samples, int image_side);

FeatureCache make_cache(const std::vector<LabeledSample>& samples, const ExtractionConfig& cfg);

}  // namespace dyffpad::data
