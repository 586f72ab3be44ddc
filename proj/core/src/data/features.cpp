#include <zlib.h>

#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <unordered_map>

#include "dyffpad/data.hpp"
#include "dyffpad/error.hpp"
#include "dyffpad/imgproc.hpp"
#include "text.hpp"

namespace dyffpad::data {

using nlohmann::json;

void ExtractionConfig::validate() const {
  quality.validate();
  lpq.validate();
}

std::string ExtractionConfig::to_json() const {
  json j;
  const auto& q = quality;
  j["quality"] = {{"block_rows", q.block_rows},
                  {"block_cols", q.block_cols},
                  {"fda_weight", q.fda_weight},
                  {"abnormal_threshold", q.abnormal_threshold},
                  {"gabor_orientations", q.gabor_orientations},
                  {"gabor_frequency", q.gabor_frequency},
                  {"gabor_sigma", q.gabor_sigma},
                  {"ridge_width_min", q.ridge_width_min},
                  {"ridge_width_max", q.ridge_width_max},
                  {"foreground_var_threshold", q.foreground_var_threshold}};
  j["lpq"] = {{"window_size", lpq.window_size},
              {"frequency", lpq.frequency},
              {"decorrelate", lpq.decorrelate},
              {"rho", lpq.rho}};
  return j.dump();
}

ExtractionConfig ExtractionConfig::from_json(const std::string& text) {
  ExtractionConfig c;
  try {
    const json j = json::parse(text);
    if (!j.is_object()) throw Error(ErrorCode::InvalidConfig, "extraction config must be a JSON object");
    if (j.contains("quality")) {
      const auto& q = j.at("quality");
      auto& d = c.quality;
      d.block_rows = q.value("block_rows", d.block_rows);
      d.block_cols = q.value("block_cols", d.block_cols);
      d.fda_weight = q.value("fda_weight", d.fda_weight);
      d.abnormal_threshold = q.value("abnormal_threshold", d.abnormal_threshold);
      d.gabor_orientations = q.value("gabor_orientations", d.gabor_orientations);
      d.gabor_frequency = q.value("gabor_frequency", d.gabor_frequency);
      d.gabor_sigma = q.value("gabor_sigma", d.gabor_sigma);
      d.ridge_width_min = q.value("ridge_width_min", d.ridge_width_min);
      d.ridge_width_max = q.value("ridge_width_max", d.ridge_width_max);
      d.foreground_var_threshold = q.value("foreground_var_threshold", d.foreground_var_threshold);
    }
    if (j.contains("lpq")) {
      const auto& l = j.at("lpq");
      c.lpq.window_size = l.value("window_size", c.lpq.window_size);
      c.lpq.frequency = l.value("frequency", c.lpq.frequency);
      c.lpq.decorrelate = l.value("decorrelate", c.lpq.decorrelate);
      c.lpq.rho = l.value("rho", c.lpq.rho);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("extraction config: ") + e.what());
  }
  return c;
}

std::string ExtractionConfig::hash() const {
  const std::string text = to_json();
  const auto crc = crc32(crc32(0L, Z_NULL, 0), reinterpret_cast<const Bytef*>(text.data()),
                         static_cast<uInt>(text.size()));
  char buf[16];
  std::snprintf(buf, sizeof buf, "%08lx", static_cast<unsigned long>(crc));
  return buf;
}

RoiBox foreground_box(const GrayImage& img, const ExtractionConfig& cfg) {
  return segment_roi(img, std::min(cfg.quality.block_rows, cfg.quality.block_cols),
                     cfg.quality.foreground_var_threshold);
}

FeatureVector extract_features(const GrayImage& img, const ExtractionConfig& cfg) {
  cfg.validate();
  FeatureVector out{};
  const auto q = quality::quality_vector(img, cfg.quality);
  std::copy(q.begin(), q.end(), out.begin());
  const auto h = lpq::lpq_histogram(crop(img, foreground_box(img, cfg)), cfg.lpq);
  std::copy(h.begin(), h.end(), out.begin() + quality::kQualityDim);
  return out;
}

std::vector<float> preprocess_image(const GrayImage& img, const ExtractionConfig& cfg, int side) {
  return resize_bilinear_unit(crop(img, foreground_box(img, cfg)), side);
}

std::vector<std::string> feature_columns() {
  std::vector<std::string> cols{"path"};
  for (int i = 0; i < quality::kQualityDim; ++i) cols.emplace_back(quality::quality_name(i));
  for (int i = 0; i < lpq::kBins; ++i) cols.push_back("lpq_" + std::to_string(i));
  return cols;
}

namespace {

std::string header_line() {
  std::string out;
  for (const auto& c : feature_columns()) {
    if (!out.empty()) out += ',';
    out += c;
  }
  return out;
}

[[noreturn]] void cache_error(const std::filesystem::path& path, std::size_t line, const std::string& why) {
  throw Error(ErrorCode::ParseError, path.string() + ":" + std::to_string(line) + ": " + why);
}

}  // namespace

void write_feature_cache(const FeatureCache& cache, const std::filesystem::path& path) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + tmp.string());
    json h;
    h["config_hash"] = cache.config_hash;
    h["extraction"] = cache.config_json.empty() ? json::object() : json::parse(cache.config_json);
    out << "# " << h.dump() << '\n' << header_line() << '\n';
    for (const auto& row : cache.rows) {
      out << row.path;
      for (double v : row.values) out << ',' << detail::format_double(v);
      out << '\n';
    }
    if (!out) throw Error(ErrorCode::IoError, "short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot rename " + tmp.string() + ": " + ec.message());
}

FeatureCache read_feature_cache(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open feature cache " + path.string());
  FeatureCache cache;
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(in, line) || !line.starts_with("# ")) cache_error(path, 1, "missing JSON header");
  ++lineno;
  try {
    const json h = json::parse(line.substr(2));
    cache.config_hash = h.at("config_hash").get<std::string>();
    cache.config_json = h.at("extraction").dump();
  } catch (const json::exception& e) {
    cache_error(path, lineno, std::string("bad header: ") + e.what());
  }
  if (!std::getline(in, line)) cache_error(path, 2, "missing column header");
  ++lineno;
  if (detail::trim(line) != header_line()) cache_error(path, lineno, "unexpected column header");
  while (std::getline(in, line)) {
    ++lineno;
    const std::string_view v = detail::trim(line);
    if (v.empty()) continue;
    const auto f = detail::split_csv_line(v);
    if (f.size() != static_cast<std::size_t>(kFeatureDim) + 1) {
      cache_error(path, lineno, "expected " + std::to_string(kFeatureDim + 1) + " columns");
    }
    CachedFeatures row;
    row.path = std::string(f[0]);
    for (int i = 0; i < kFeatureDim; ++i) {
      if (!detail::parse_double(f[static_cast<std::size_t>(i) + 1], row.values[static_cast<std::size_t>(i)])) {
        cache_error(path, lineno, "bad number in column " + std::to_string(i + 1));
      }
    }
    cache.rows.push_back(std::move(row));
  }
  return cache;
}

std::optional<FeatureCache> load_valid_cache(const std::filesystem::path& path, const ExtractionConfig& cfg) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) return std::nullopt;
  FeatureCache cache = read_feature_cache(path);
  if (cache.config_hash != cfg.hash()) return std::nullopt;
  return cache;
}

SplitData build_split(const DatasetManifest& manifest, const ExtractionConfig& cfg, const BuildOptions& opt) {
  cfg.validate();
  std::unordered_map<std::string, const FeatureVector*> cached;
  if (opt.cache && opt.cache->config_hash == cfg.hash()) {
    for (const auto& row : opt.cache->rows) cached.emplace(row.path, &row.values);
  }

  SplitData out;
  for (const auto& e : manifest.entries) {
    LabeledSample s;
    s.path = e.path;
    s.label = e.label;
    s.material = e.material;
    s.split = e.split;
    try {
      const auto hit = cached.find(e.path);
      std::optional<GrayImage> img;
      if (hit != cached.end()) {
        s.features = *hit->second;
      } else {
        img = read_image(manifest.resolve(e));
        s.features = extract_features(*img, cfg);
      }
      if (opt.image_side > 0) {
        if (!img) img = read_image(manifest.resolve(e));
        s.image = preprocess_image(*img, cfg, opt.image_side);
      }
    } catch (const Error& err) {
      if (opt.strict) throw;
      out.failures.push_back({e.path, err.what()});
      continue;
    }
    (s.split == Split::Train ? out.train : out.test).push_back(std::move(s));
  }
  if (out.train.empty() && out.test.empty()) {
    throw Error(ErrorCode::EmptySplit, "no manifest entry survived feature extraction");
  }
  return out;
}

fusion::TensorDataset to_tensors(const std::vector<LabeledSample>& samples, int image_side) {
  fusion::TensorDataset d;
  const std::size_t n = samples.size();
  d.features = nn::Tensor<float>({n, static_cast<std::size_t>(kFeatureDim)});
  if (image_side > 0) {
    const auto s = static_cast<std::size_t>(image_side);
    d.images = nn::Tensor<float>({n, 1, s, s});
  }
  d.labels.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& smp = samples[i];
    for (int j = 0; j < kFeatureDim; ++j) {
      d.features[i * kFeatureDim + static_cast<std::size_t>(j)] = static_cast<float>(smp.features[static_cast<std::size_t>(j)]);
    }
    if (image_side > 0) {
      const std::size_t row = static_cast<std::size_t>(image_side) * static_cast<std::size_t>(image_side);
      if (smp.image.size() != row) {
        throw Error(ErrorCode::ShapeMismatch, smp.path + ": preprocessed image missing or of the wrong size");
      }
      std::copy(smp.image.begin(), smp.image.end(), d.images.data() + i * row);
    }
    d.labels.push_back(smp.label == Label::Live ? 1.0f : 0.0f);
  }
  return d;
}

FeatureCache make_cache(const std::vector<LabeledSample>& samples, const ExtractionConfig& cfg) {
  FeatureCache c;
  c.config_hash = cfg.hash();
  c.config_json = cfg.to_json();
  c.rows.reserve(samples.size());
  for (const auto& s : samples) c.rows.push_back({s.path, s.features});
  return c;
}

}  // namespace dyffpad::data
