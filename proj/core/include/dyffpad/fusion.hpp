#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dyffpad/nn/layers.hpp"
#include "dyffpad/nn/optim.hpp"

namespace dyffpad::fusion {

using nn::Mode;
using nn::NamedTensor;
using nn::Tensor;

/// Which branches feed the final head. Single-branch modes exist for ablations.
enum class BranchMode { Fused, FeaturesOnly, CnnOnly };

std::string_view branch_name(BranchMode mode) noexcept;
BranchMode parse_branch(std::string_view name);

struct StemSpec {
  int kernel = 3;
  int stride = 2;
  int pad = 1;
  int channels = 16;
  /// 2x2 average pool after the stem when set (0 disables).
  int pool = 0;
  friend bool operator==(const StemSpec&, const StemSpec&) = default;
};

inline constexpr int kBranchWidth = 32;
inline constexpr int kFeatureDim = 269;
inline constexpr int kQualityFeatures = 13;

struct DyffpadConfig {
  int input_side = 64;
  StemSpec stem;
  std::vector<nn::DenseBlockSpec> blocks{{2, 8}, {2, 8}};
  /// Output channels of the transition after every block but the last.
  std::vector<int> transitions{16};
  std::vector<int> cnn_head{512, 256, 32};
  std::vector<int> feat_dnn{128, 64, 32};
  std::vector<int> final_head{32, 1};
  int feature_dim = kFeatureDim;
  double bn_eps = 1e-5;
  double bn_momentum = 0.1;
  BranchMode branch = BranchMode::Fused;

  /// Small configuration that trains in minutes on one CPU core.
  static DyffpadConfig desk();
  /// DenseNet-121 layout at 224x224.
  static DyffpadConfig full();

  bool uses_images() const noexcept { return branch != BranchMode::FeaturesOnly; }
  bool uses_features() const noexcept { return branch != BranchMode::CnnOnly; }
  int final_input_width() const noexcept { return branch == BranchMode::Fused ? 2 * kBranchWidth : kBranchWidth; }
  /// Channel count entering the global pool.
  int cnn_channels() const;

  /// Throws InvalidConfig.
  void validate() const;

  /// Canonical JSON text (sorted keys, no whitespace).
  std::string to_json() const;
  /// Missing keys keep their desk defaults. Throws InvalidConfig on bad types.
  static DyffpadConfig from_json(const std::string& text);

  friend bool operator==(const DyffpadConfig&, const DyffpadConfig&) = default;
};

/// Both branches, the fusion head, and the z-score statistics for the
/// quality part of the feature vector.
template <typename T>
class BasicDyffpadModel {
 public:
  BasicDyffpadModel(DyffpadConfig cfg, std::uint64_t seed);

  BasicDyffpadModel(const BasicDyffpadModel&) = delete;
  BasicDyffpadModel& operator=(const BasicDyffpadModel&) = delete;
  BasicDyffpadModel(BasicDyffpadModel&&) noexcept = default;
  BasicDyffpadModel& operator=(BasicDyffpadModel&&) noexcept = default;

  const DyffpadConfig& config() const noexcept { return cfg_; }

  /// images: (N,1,S,S), may be empty when the CNN branch is off.
  /// features: (N,feature_dim), may be empty when the feature branch is off.
  /// Returns (N,1) pre-sigmoid logits.
  Tensor<T> forward_logits(const Tensor<T>& images, const Tensor<T>& features, Mode mode);
  /// Sigmoid of forward_logits.
  Tensor<T> forward(const Tensor<T>& images, const Tensor<T>& features, Mode mode);
  /// Accumulates parameter gradients from d(loss)/d(logits) of the last forward.
  void backward(const Tensor<T>& grad_logits);

  std::vector<NamedTensor<T>> parameters();
  /// Running statistics and feature normalizer.
  std::vector<NamedTensor<T>> buffers();
  /// parameters() followed by buffers(); the serialized order.
  std::vector<NamedTensor<T>> state();
  std::size_t parameter_count();

  /// Sets the quality-feature mean/std from a (N,feature_dim) training matrix.
  void fit_normalizer(const Tensor<T>& features);
  Tensor<T>& feature_mean() { return norm_mean_; }
  Tensor<T>& feature_std() { return norm_std_; }

 private:
  Tensor<T> normalize(const Tensor<T>& features) const;
  void check_inputs(const Tensor<T>& images, const Tensor<T>& features, std::size_t& batch) const;

  DyffpadConfig cfg_;
  std::unique_ptr<nn::Sequential<T>> cnn_;
  std::unique_ptr<nn::Sequential<T>> cnn_head_;
  std::unique_ptr<nn::Sequential<T>> feat_dnn_;
  std::unique_ptr<nn::Sequential<T>> final_head_;
  Tensor<T> norm_mean_;
  Tensor<T> norm_std_;
  std::size_t last_batch_ = 0;
};

using DyffpadModel = BasicDyffpadModel<float>;

/// Same as constructing the model; validates the config first.
DyffpadModel build_model(const DyffpadConfig& cfg, std::uint64_t seed);

// ---------------------------------------------------------------- weight file

inline constexpr std::uint32_t kWeightFormatVersion = 1;

struct WeightEntry {
  std::string name;
  nn::Shape shape;
  std::size_t offset = 0;  // in floats
};

struct WeightHeader {
  std::uint32_t version = kWeightFormatVersion;
  DyffpadConfig config;
  std::vector<WeightEntry> entries;
  /// Free-form provenance (e.g. the run configuration), stored verbatim.
  std::string echo;
};

void save_weights(DyffpadModel& model, const std::filesystem::path& path, const std::string& echo = {});
/// Throws CorruptFile, ChecksumMismatch, ConfigMismatch.
DyffpadModel load_weights(const std::filesystem::path& path, const DyffpadConfig& cfg);
/// Loads using the config stored in the file.
DyffpadModel load_weights(const std::filesystem::path& path);
WeightHeader read_weight_header(const std::filesystem::path& path);

// ---------------------------------------------------------------- training

struct TensorDataset {
  Tensor<float> images;    // (N,1,S,S) or empty
  Tensor<float> features;  // (N,feature_dim) or empty
  std::vector<float> labels;  // 1 = live, 0 = spoof

  std::size_t size() const noexcept { return labels.size(); }
  /// Rows `index` gathered into a new dataset.
  TensorDataset subset(std::span<const std::size_t> index) const;
};

struct TrainOptions {
  int epochs = 50;
  int batch_size = 32;
  double lr = 1e-3;
  std::uint64_t seed = 1;
};

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;
  double train_acc = 0.0;
  std::optional<double> val_acc;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  /// 1-based epoch whose weights the model holds; 0 when no epoch ran.
  int selected_epoch = 0;
};

/// One Adam step on a batch; returns the mean BCE loss before the step.
double backward_step(DyffpadModel& model, const TensorDataset& batch, nn::Adam<float>& opt);

/// Throws SingleClassDataset when the training labels hold one class.
TrainResult train(DyffpadModel& model, const TensorDataset& train_set, const TensorDataset* validation,
                  const TrainOptions& opt);

/// Inference-mode scores in dataset order.
std::vector<double> predict(DyffpadModel& model, const TensorDataset& data, int batch_size = 64);

/// Fraction of scores on the correct side of 0.5 (live iff score >= 0.5).
double accuracy(std::span<const double> scores, std::span<const float> labels);

void write_history_csv(const std::vector<EpochRecord>& history, const std::filesystem::path& path);

}  // namespace dyffpad::fusion
