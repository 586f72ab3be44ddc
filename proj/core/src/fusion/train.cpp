#include <cmath>
#include <fstream>
#include <numeric>

#include "dyffpad/error.hpp"
#include "dyffpad/fusion.hpp"
#include "text.hpp"

namespace dyffpad::fusion {

namespace {

struct StepOutcome {
  double loss = 0.0;
  std::size_t correct = 0;
};

StepOutcome step_impl(DyffpadModel& model, const TensorDataset& batch, nn::Adam<float>& opt) {
  const std::size_t n = batch.size();
  if (n < 2) throw Error(ErrorCode::BatchTooSmall, "training batches need at least 2 samples, got " + std::to_string(n));
  opt.zero_grad();
  const Tensor<float> logits = model.forward_logits(batch.images, batch.features, Mode::Train);
  const Tensor<float> scores = nn::sigmoid_forward(logits);
  StepOutcome out;
  out.loss = static_cast<double>(nn::bce_loss<float>(scores, batch.labels));
  // Sigmoid and BCE fused: d(loss)/d(logit) = (s - y) / N.
  Tensor<float> grad({n, 1});
  for (std::size_t i = 0; i < n; ++i) {
    grad[i] = (scores[i] - batch.labels[i]) / static_cast<float>(n);
    if ((scores[i] >= 0.5f) == (batch.labels[i] >= 0.5f)) ++out.correct;
  }
  model.backward(grad);
  opt.step();
  return out;
}

}  // namespace

TensorDataset TensorDataset::subset(std::span<const std::size_t> index) const {
  TensorDataset out;
  const std::size_t n = index.size();
  out.labels.reserve(n);
  for (std::size_t i : index) out.labels.push_back(labels.at(i));
  if (!images.empty()) {
    const std::size_t row = images.size() / images.dim(0);
    nn::Shape shape = images.shape();
    shape[0] = n;
    out.images = Tensor<float>(shape);
    for (std::size_t k = 0; k < n; ++k) {
      std::copy_n(images.data() + index[k] * row, row, out.images.data() + k * row);
    }
  }
  if (!features.empty()) {
    const std::size_t row = features.dim(1);
    out.features = Tensor<float>({n, row});
    for (std::size_t k = 0; k < n; ++k) {
      std::copy_n(features.data() + index[k] * row, row, out.features.data() + k * row);
    }
  }
  return out;
}

double backward_step(DyffpadModel& model, const TensorDataset& batch, nn::Adam<float>& opt) {
  return step_impl(model, batch, opt).loss;
}

double accuracy(std::span<const double> scores, std::span<const float> labels) {
  if (scores.size() != labels.size() || scores.empty()) {
    throw Error(ErrorCode::ShapeMismatch, "accuracy needs equally sized, non-empty score and label lists");
  }
  std::size_t ok = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if ((scores[i] >= 0.5) == (labels[i] >= 0.5f)) ++ok;
  }
  return static_cast<double>(ok) / static_cast<double>(scores.size());
}

std::vector<double> predict(DyffpadModel& model, const TensorDataset& data, int batch_size) {
  if (batch_size < 1) throw Error(ErrorCode::InvalidConfig, "batch_size must be positive");
  std::vector<double> scores;
  scores.reserve(data.size());
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t stop = std::min(data.size(), start + static_cast<std::size_t>(batch_size));
    idx.resize(stop - start);
    std::iota(idx.begin(), idx.end(), start);
    const TensorDataset batch = data.subset(idx);
    const Tensor<float> s = model.forward(batch.images, batch.features, Mode::Infer);
    for (float v : s.values()) scores.push_back(static_cast<double>(v));
  }
  return scores;
}

TrainResult train(DyffpadModel& model, const TensorDataset& train_set, const TensorDataset* validation,
                  const TrainOptions& opt) {
  if (opt.epochs < 0) throw Error(ErrorCode::InvalidConfig, "epochs must be >= 0");
  if (opt.batch_size < 2) throw Error(ErrorCode::InvalidConfig, "batch_size must be >= 2");
  if (train_set.size() == 0) throw Error(ErrorCode::EmptySplit, "training set is empty");
  std::size_t live = 0;
  for (float y : train_set.labels) live += y >= 0.5f ? 1 : 0;
  if (live == 0 || live == train_set.size()) {
    throw Error(ErrorCode::SingleClassDataset, "training set holds only " + std::string(live ? "live" : "spoof") +
                                                   " samples");
  }

  TrainResult result;
  if (opt.epochs == 0) return result;

  if (model.config().uses_features()) model.fit_normalizer(train_set.features);
  nn::Adam<float> adam(model.parameters(), nn::AdamConfig{opt.lr});
  nn::Rng rng(opt.seed ^ 0x9E3779B97F4A7C15ULL);

  const std::size_t n = train_set.size();
  const auto bs = static_cast<std::size_t>(opt.batch_size);
  std::vector<std::size_t> order(n);
  std::vector<std::vector<float>> best_state;
  double best_val = -1.0;

  for (int epoch = 1; epoch <= opt.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < n;) {
      std::size_t stop = std::min(n, start + bs);
      // A trailing singleton cannot be batch-normalized; fold it into this batch.
      if (n - stop == 1) stop = n;
      const std::span<const std::size_t> idx(order.data() + start, stop - start);
      const StepOutcome s = step_impl(model, train_set.subset(idx), adam);
      loss_sum += s.loss * static_cast<double>(idx.size());
      correct += s.correct;
      start = stop;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss = loss_sum / static_cast<double>(n);
    rec.train_acc = static_cast<double>(correct) / static_cast<double>(n);
    if (validation && validation->size() > 0) {
      const auto scores = predict(model, *validation);
      rec.val_acc = accuracy(scores, validation->labels);
      if (*rec.val_acc > best_val) {
        best_val = *rec.val_acc;
        result.selected_epoch = epoch;
        best_state.clear();
        for (const auto& s : model.state()) best_state.emplace_back(s.tensor->values().begin(), s.tensor->values().end());
      }
    }
    result.history.push_back(rec);
  }

  if (!best_state.empty()) {
    auto state = model.state();
    for (std::size_t i = 0; i < state.size(); ++i) {
      std::copy(best_state[i].begin(), best_state[i].end(), state[i].tensor->values().begin());
    }
  } else {
    result.selected_epoch = opt.epochs;
  }
  return result;
}

void write_history_csv(const std::vector<EpochRecord>& history, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << "epoch,loss,train_acc,val_acc\n";
  for (const auto& r : history) {
    out << r.epoch << ',' << detail::format_double(r.loss) << ',' << detail::format_double(r.train_acc) << ',';
    if (r.val_acc) out << detail::format_double(*r.val_acc);
    out << '\n';
  }
  if (!out) throw Error(ErrorCode::IoError, "short write to " + path.string());
}

}  // namespace dyffpad::fusion
