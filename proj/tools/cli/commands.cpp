#include "commands.hpp"

#include <CLI11.hpp>
#include <charconv>
#include <fstream>
#include <json.hpp>
#include <optional>
#include <ostream>
#include <sstream>

#include "dyffpad/data.hpp"
#include "dyffpad/fusion.hpp"
#include "dyffpad/metrics.hpp"
#include "dyffpad/rng.hpp"

namespace dyffpad::cli {

namespace fs = std::filesystem;
using nlohmann::json;

int exit_code_for(ErrorCode code) noexcept { return static_cast<int>(error_family(code)); }

namespace {

std::string num(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

/// Everything that shapes a run except file locations.
struct RunConfig {
  std::uint64_t seed = 1;
  int count = 100;
  data::SynthParams synth;
  data::ExtractionConfig extraction;
  fusion::DyffpadConfig model = fusion::DyffpadConfig::desk();
  bool model_given = false;
  fusion::TrainOptions train;
  double val_fraction = 0.0;
  double threshold = metrics::kDefaultThreshold;

  std::string echo() const {
    json j;
    j["seed"] = seed;
    j["synth"] = {{"count", count},
                  {"side", synth.side},
                  {"period", synth.period},
                  {"width_jitter", synth.width_jitter},
                  {"blur_width", synth.blur_width},
                  {"noise_sigma", synth.noise_sigma},
                  {"live_noise_sigma", synth.live_noise_sigma}};
    j["extraction"] = json::parse(extraction.to_json());
    j["model"] = json::parse(model.to_json());
    j["train"] = {{"epochs", train.epochs},
                  {"batch_size", train.batch_size},
                  {"lr", train.lr},
                  {"val_fraction", val_fraction}};
    j["eval"] = {{"threshold", threshold}};
    return j.dump();
  }
};

void load_config_file(const fs::path& path, RunConfig& rc) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::InvalidConfig, "cannot read config file " + path.string());
  json j;
  try {
    j = json::parse(in);
    if (!j.is_object()) throw Error(ErrorCode::InvalidConfig, "config file must hold a JSON object");
    if (j.contains("seed")) rc.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("synth")) {
      const auto& s = j.at("synth");
      rc.count = s.value("count", rc.count);
      rc.synth.side = s.value("side", rc.synth.side);
      rc.synth.period = s.value("period", rc.synth.period);
      rc.synth.width_jitter = s.value("width_jitter", rc.synth.width_jitter);
      rc.synth.blur_width = s.value("blur_width", rc.synth.blur_width);
      rc.synth.noise_sigma = s.value("noise_sigma", rc.synth.noise_sigma);
      rc.synth.live_noise_sigma = s.value("live_noise_sigma", rc.synth.live_noise_sigma);
    }
    if (j.contains("extraction")) rc.extraction = data::ExtractionConfig::from_json(j.at("extraction").dump());
    if (j.contains("model")) {
      rc.model = fusion::DyffpadConfig::from_json(j.at("model").dump());
      rc.model_given = true;
    }
    if (j.contains("train")) {
      const auto& t = j.at("train");
      rc.train.epochs = t.value("epochs", rc.train.epochs);
      rc.train.batch_size = t.value("batch_size", rc.train.batch_size);
      rc.train.lr = t.value("lr", rc.train.lr);
      rc.val_fraction = t.value("val_fraction", rc.val_fraction);
    }
    if (j.contains("eval")) rc.threshold = j.at("eval").value("threshold", rc.threshold);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, path.string() + ": " + e.what());
  }
}

/// Flags that override the config file when given.
struct Overrides {
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  // synth
  std::optional<int> count, side, blur;
  std::optional<double> period, jitter, noise, live_noise;
  // extraction
  std::optional<int> block, lpq_window;
  std::optional<double> fda_weight, abnormal_threshold;
  bool lpq_decorrelate = false;
  // model / training
  std::optional<std::string> preset, branch;
  std::optional<int> epochs, batch;
  std::optional<double> lr, val_fraction, threshold;
};

RunConfig resolve(const Overrides& o) {
  RunConfig rc;
  if (o.config) load_config_file(*o.config, rc);
  if (o.seed) rc.seed = *o.seed;
  if (o.count) rc.count = *o.count;
  if (o.side) rc.synth.side = *o.side;
  if (o.blur) rc.synth.blur_width = *o.blur;
  if (o.period) rc.synth.period = *o.period;
  if (o.jitter) rc.synth.width_jitter = *o.jitter;
  if (o.noise) rc.synth.noise_sigma = *o.noise;
  if (o.live_noise) rc.synth.live_noise_sigma = *o.live_noise;
  if (o.block) rc.extraction.quality.block_rows = rc.extraction.quality.block_cols = *o.block;
  if (o.lpq_window) rc.extraction.lpq.window_size = *o.lpq_window;
  if (o.fda_weight) rc.extraction.quality.fda_weight = *o.fda_weight;
  if (o.abnormal_threshold) rc.extraction.quality.abnormal_threshold = *o.abnormal_threshold;
  if (o.lpq_decorrelate) rc.extraction.lpq.decorrelate = true;
  if (o.preset) {
    const auto branch = rc.model.branch;
    if (*o.preset == "desk") rc.model = fusion::DyffpadConfig::desk();
    else if (*o.preset == "full") rc.model = fusion::DyffpadConfig::full();
    else throw Error(ErrorCode::InvalidConfig, "unknown preset '" + *o.preset + "' (desk, full)");
    rc.model.branch = branch;
    rc.model_given = true;
  }
  if (o.branch) {
    rc.model.branch = fusion::parse_branch(*o.branch);
    rc.model_given = true;
  }
  if (o.epochs) rc.train.epochs = *o.epochs;
  if (o.batch) rc.train.batch_size = *o.batch;
  if (o.lr) rc.train.lr = *o.lr;
  if (o.val_fraction) rc.val_fraction = *o.val_fraction;
  if (o.threshold) rc.threshold = *o.threshold;
  rc.synth.seed = rc.seed;
  rc.train.seed = rc.seed;
  rc.extraction.validate();
  rc.model.validate();
  if (!(rc.val_fraction >= 0.0 && rc.val_fraction < 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "val_fraction must lie in [0, 1)");
  }
  return rc;
}

void add_common(CLI::App* sub, Overrides& o) {
  sub->add_option("--config", o.config, "JSON run configuration (flags take precedence)");
  sub->add_option("--seed", o.seed, "Random seed");
}

void add_extraction(CLI::App* sub, Overrides& o) {
  sub->add_option("--block", o.block, "Quality block side in pixels");
  sub->add_option("--fda-weight", o.fda_weight, "Weight of the spectral neighbours in FDA");
  sub->add_option("--abnormal-threshold", o.abnormal_threshold, "Width std (px) marking an abnormal ridge/valley");
  sub->add_option("--lpq-window", o.lpq_window, "LPQ window size (odd)");
  sub->add_flag("--lpq-decorrelate", o.lpq_decorrelate, "Whiten LPQ coefficients before quantization");
}

void report_failures(const data::SplitData& split, std::ostream& err) {
  for (const auto& f : split.failures) err << "warning: skipped " << f.path << ": " << f.reason << '\n';
  if (!split.failures.empty()) err << "warning: " << split.failures.size() << " sample(s) excluded\n";
}

std::optional<data::FeatureCache> maybe_cache(const std::optional<std::string>& path,
                                              const data::ExtractionConfig& cfg, std::ostream& err) {
  if (!path) return std::nullopt;
  auto cache = data::load_valid_cache(*path, cfg);
  if (!cache) err << "warning: feature cache " << *path << " missing or built with another config; re-extracting\n";
  return cache;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + dir.string() + ": " + ec.message());
}

std::vector<metrics::ScoredSample> scored(const std::vector<data::LabeledSample>& samples,
                                          const std::vector<double>& scores) {
  std::vector<metrics::ScoredSample> out;
  out.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    out.push_back({scores[i], samples[i].label, samples[i].material});
  }
  return out;
}

// ---------------------------------------------------------------- subcommands

int cmd_synth(const Overrides& o, const std::string& out_dir, std::ostream& out) {
  const RunConfig rc = resolve(o);
  const auto m = data::make_synthetic_set(out_dir, rc.count, rc.synth);
  std::size_t train = 0;
  for (const auto& e : m.entries) train += e.split == data::Split::Train ? 1 : 0;
  out << "wrote " << m.entries.size() << " images (" << train << " train, " << m.entries.size() - train
      << " test) and " << (fs::path(out_dir) / "manifest.csv").string() << '\n';
  return kExitOk;
}

int cmd_extract(const Overrides& o, const std::string& manifest_path, const std::string& cache_path, bool strict,
                std::ostream& out, std::ostream& err) {
  const RunConfig rc = resolve(o);
  const auto manifest = data::load_manifest(manifest_path);
  data::BuildOptions opt;
  opt.strict = strict;
  const auto split = data::build_split(manifest, rc.extraction, opt);
  report_failures(split, err);
  std::vector<data::LabeledSample> all = split.train;
  all.insert(all.end(), split.test.begin(), split.test.end());
  data::write_feature_cache(data::make_cache(all, rc.extraction), cache_path);
  out << "extracted " << all.size() << " feature vectors into " << cache_path << " (config " << rc.extraction.hash()
      << ")\n";
  return kExitOk;
}

int cmd_train(const Overrides& o, const std::string& manifest_path, const std::string& out_dir,
              const std::optional<std::string>& cache_path, std::ostream& out, std::ostream& err) {
  const RunConfig rc = resolve(o);
  const auto manifest = data::load_manifest(manifest_path);
  const auto cache = maybe_cache(cache_path, rc.extraction, err);
  data::BuildOptions opt;
  opt.image_side = rc.model.uses_images() ? rc.model.input_side : 0;
  opt.cache = cache ? &*cache : nullptr;
  const auto split = data::build_split(manifest, rc.extraction, opt);
  report_failures(split, err);
  if (split.train.empty()) throw Error(ErrorCode::EmptySplit, "no usable training samples");

  std::vector<data::LabeledSample> train_samples = split.train;
  std::vector<data::LabeledSample> val_samples;
  if (rc.val_fraction > 0.0) {
    std::vector<std::size_t> order(train_samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(mix_seed(rc.seed, 77));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    const auto n_val = static_cast<std::size_t>(rc.val_fraction * static_cast<double>(order.size()) + 0.5);
    std::vector<bool> is_val(order.size(), false);
    for (std::size_t i = 0; i < n_val; ++i) is_val[order[i]] = true;
    std::vector<data::LabeledSample> kept;
    for (std::size_t i = 0; i < train_samples.size(); ++i) {
      (is_val[i] ? val_samples : kept).push_back(std::move(train_samples[i]));
    }
    train_samples = std::move(kept);
  }

  const int side = opt.image_side;
  const auto train_set = data::to_tensors(train_samples, side);
  std::optional<fusion::TensorDataset> val_set;
  if (!val_samples.empty()) val_set = data::to_tensors(val_samples, side);

  auto model = fusion::build_model(rc.model, rc.seed);
  out << "model " << fusion::branch_name(rc.model.branch) << ": " << model.parameter_count() << " parameters, "
      << train_set.size() << " train / " << (val_set ? val_set->size() : 0) << " validation / " << split.test.size()
      << " test samples\n";
  const auto result = fusion::train(model, train_set, val_set ? &*val_set : nullptr, rc.train);
  for (const auto& r : result.history) {
    out << "epoch " << r.epoch << " loss " << num(r.loss) << " train_acc " << num(r.train_acc);
    if (r.val_acc) out << " val_acc " << num(*r.val_acc);
    out << '\n';
  }

  ensure_dir(out_dir);
  const std::string echo = rc.echo();
  fusion::save_weights(model, fs::path(out_dir) / "weights.bin", echo);
  fusion::write_history_csv(result.history, fs::path(out_dir) / "history.csv");
  out << "selected epoch " << result.selected_epoch << "; weights written to "
      << (fs::path(out_dir) / "weights.bin").string() << '\n';
  if (!split.test.empty()) {
    const auto test_set = data::to_tensors(split.test, side);
    const auto scores = fusion::predict(model, test_set);
    out << "test_accuracy " << num(100.0 * fusion::accuracy(scores, test_set.labels)) << '\n';
  }
  return kExitOk;
}

int cmd_eval(const Overrides& o, const std::string& weights, const std::string& manifest_path,
             const std::string& out_dir, const std::optional<std::string>& cache_path, const std::string& which,
             std::ostream& out, std::ostream& err) {
  RunConfig rc = resolve(o);
  auto model = rc.model_given ? fusion::load_weights(weights, rc.model) : fusion::load_weights(weights);
  rc.model = model.config();
  const auto manifest = data::load_manifest(manifest_path);
  const auto cache = maybe_cache(cache_path, rc.extraction, err);
  data::BuildOptions opt;
  opt.image_side = rc.model.uses_images() ? rc.model.input_side : 0;
  opt.cache = cache ? &*cache : nullptr;
  const auto split = data::build_split(manifest, rc.extraction, opt);
  report_failures(split, err);

  std::vector<data::LabeledSample> samples;
  if (which == "test" || which == "all") samples.insert(samples.end(), split.test.begin(), split.test.end());
  if (which == "train" || which == "all") samples.insert(samples.end(), split.train.begin(), split.train.end());
  if (samples.empty()) throw Error(ErrorCode::EmptySplit, "no usable samples in the '" + which + "' split");

  const auto scores = fusion::predict(model, data::to_tensors(samples, opt.image_side));
  const auto ss = scored(samples, scores);
  const auto report = metrics::evaluate(ss, rc.threshold);
  const auto det = metrics::det_curve(ss);
  const auto roc = metrics::roc_curve(ss);

  ensure_dir(out_dir);
  const fs::path dir(out_dir);
  std::vector<std::string> ids;
  for (const auto& s : samples) ids.push_back(s.path);
  metrics::write_report_json(report, dir / "report.json", rc.echo());
  metrics::write_det_csv(det, dir / "det.csv");
  metrics::write_roc_csv(roc, dir / "roc.csv");
  metrics::write_scores_csv(ss, ids, dir / "scores.csv");

  out << "threshold " << num(report.threshold) << " apcer " << num(report.apcer) << " bpcer " << num(report.bpcer)
      << " ace " << num(report.ace) << " accuracy " << num(report.accuracy) << '\n';
  for (const auto& m : report.per_material) out << "  apcer[" << m.material << "] " << num(m.apcer) << '\n';
  out << "bpcer@apcer=1% " << (det.bpcer_at_apcer_1 ? num(*det.bpcer_at_apcer_1) : std::string("n/a")) << '\n';
  out << "auc " << num(metrics::auc(roc)) << '\n';
  return kExitOk;
}

int cmd_det(const std::string& scores_path, const std::string& det_path, const std::optional<std::string>& roc_path,
            std::ostream& out) {
  const auto samples = metrics::read_scores_csv(scores_path);
  const auto det = metrics::det_curve(samples);
  metrics::write_det_csv(det, det_path);
  if (roc_path) {
    const auto roc = metrics::roc_curve(samples);
    metrics::write_roc_csv(roc, *roc_path);
    out << "auc " << num(metrics::auc(roc)) << '\n';
  }
  out << det.points.size() << " DET points; bpcer@apcer=1% "
      << (det.bpcer_at_apcer_1 ? num(*det.bpcer_at_apcer_1) : std::string("n/a")) << '\n';
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Fingerprint presentation attack detection: synthetic data, feature extraction, training, evaluation",
               "dyffpad"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "dyffpad 0.1.0");
  app.footer(
      "Exit codes: 0 ok, 1 internal error, 2 usage, 3 io, 4 file format, 5 configuration, 6 dataset, 7 compute.");

  Overrides o;
  std::string out_dir, manifest, cache_out, weights, scores, det_out;
  std::optional<std::string> cache_in, roc_out;
  std::string which = "test";
  bool strict = false;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic live/spoof set with a manifest");
  add_common(synth, o);
  synth->add_option("--out", out_dir, "Output directory")->required();
  synth->add_option("--count", o.count, "Images per class");
  synth->add_option("--side", o.side, "Image side in pixels");
  synth->add_option("--period", o.period, "Ridge period in pixels");
  synth->add_option("--jitter", o.jitter, "Spoof ridge-width jitter (px)");
  synth->add_option("--blur", o.blur, "Spoof box-blur width");
  synth->add_option("--noise", o.noise, "Spoof noise sigma (fraction of 255)");
  synth->add_option("--live-noise", o.live_noise, "Live noise sigma (fraction of 255)");

  auto* extract = app.add_subcommand("extract", "Extract the 269-value feature vectors into a cache CSV");
  add_common(extract, o);
  add_extraction(extract, o);
  extract->add_option("--manifest", manifest, "Dataset manifest CSV")->required();
  extract->add_option("--out", cache_out, "Feature cache CSV to write")->required();
  extract->add_flag("--strict", strict, "Fail on the first unreadable or featureless image");

  auto* train = app.add_subcommand("train", "Train a model and write weights.bin and history.csv");
  add_common(train, o);
  add_extraction(train, o);
  train->add_option("--manifest", manifest, "Dataset manifest CSV")->required();
  train->add_option("--out-dir", out_dir, "Directory for weights.bin and history.csv")->required();
  train->add_option("--cache", cache_in, "Feature cache to reuse when its config matches");
  train->add_option("--preset", o.preset, "Model preset: desk or full");
  train->add_option("--branch", o.branch, "fused, features or cnn");
  train->add_option("--epochs", o.epochs, "Training epochs");
  train->add_option("--batch", o.batch, "Batch size (>= 2)");
  train->add_option("--lr", o.lr, "Adam learning rate");
  train->add_option("--val-fraction", o.val_fraction, "Hold out this fraction of train for checkpoint selection");

  auto* eval = app.add_subcommand("eval", "Score a split and write report.json, det.csv, roc.csv, scores.csv");
  add_common(eval, o);
  add_extraction(eval, o);
  eval->add_option("--weights", weights, "Weight file from train")->required();
  eval->add_option("--manifest", manifest, "Dataset manifest CSV")->required();
  eval->add_option("--out-dir", out_dir, "Output directory")->required();
  eval->add_option("--cache", cache_in, "Feature cache to reuse when its config matches");
  eval->add_option("--threshold", o.threshold, "Decision threshold (live iff score >= threshold)");
  eval->add_option("--split", which, "Samples to score: test, train or all")
      ->check(CLI::IsMember({"test", "train", "all"}));
  eval->add_option("--preset", o.preset, "Expected model preset; mismatching weights are rejected");
  eval->add_option("--branch", o.branch, "Expected branch mode; mismatching weights are rejected");

  auto* det = app.add_subcommand("det", "Build DET (and ROC) curves from an eval scores.csv");
  det->add_option("--scores", scores, "scores.csv written by eval")->required();
  det->add_option("--out", det_out, "DET CSV to write")->required();
  det->add_option("--roc", roc_out, "Optional ROC CSV to write");

  std::vector<std::string> argv_store{"dyffpad"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : argv_store) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  try {
    if (synth->parsed()) return cmd_synth(o, out_dir, out);
    if (extract->parsed()) return cmd_extract(o, manifest, cache_out, strict, out, err);
    if (train->parsed()) return cmd_train(o, manifest, out_dir, cache_in, out, err);
    if (eval->parsed()) return cmd_eval(o, weights, manifest, out_dir, cache_in, which, out, err);
    if (det->parsed()) return cmd_det(scores, det_out, roc_out, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitInternal;
  }
  return kExitUsage;
}

}  // namespace dyffpad::cli
