#include "dyffpad/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <map>

#include "dyffpad/error.hpp"
#include "text.hpp"

namespace dyffpad::metrics {

namespace {

void check_scores(std::span<const ScoredSample> samples) {
  for (const auto& s : samples) {
    if (!std::isfinite(s.score) || s.score < 0.0 || s.score > 1.0) {
      throw Error(ErrorCode::InvalidConfig, "score " + detail::format_double(s.score) + " outside [0, 1]");
    }
  }
}

double percent(std::size_t count, std::size_t total) {
  return 100.0 * static_cast<double>(count) / static_cast<double>(total);
}

struct Counts {
  std::size_t live = 0;
  std::size_t spoof = 0;
};

Counts count_labels(std::span<const ScoredSample> samples) {
  Counts c;
  for (const auto& s : samples) (s.label == Label::Live ? c.live : c.spoof)++;
  return c;
}

void require_both(const Counts& c) {
  if (c.live == 0 || c.spoof == 0) {
    throw Error(ErrorCode::SingleClassDataset, std::string("no ") + (c.live == 0 ? "live" : "spoof") + " samples");
  }
}

}  // namespace

double apcer(std::span<const ScoredSample> samples, double threshold) {
  check_scores(samples);
  std::size_t total = 0;
  std::size_t wrong = 0;
  for (const auto& s : samples) {
    if (s.label != Label::Spoof) continue;
    ++total;
    if (s.score >= threshold) ++wrong;
  }
  if (total == 0) throw Error(ErrorCode::NoSpoofSamples, "apcer needs at least one spoof sample");
  return percent(wrong, total);
}

double bpcer(std::span<const ScoredSample> samples, double threshold) {
  check_scores(samples);
  std::size_t total = 0;
  std::size_t wrong = 0;
  for (const auto& s : samples) {
    if (s.label != Label::Live) continue;
    ++total;
    if (s.score < threshold) ++wrong;
  }
  if (total == 0) throw Error(ErrorCode::NoLiveSamples, "bpcer needs at least one live sample");
  return percent(wrong, total);
}

AceAccuracy ace_and_accuracy(double apcer_pct, double bpcer_pct) {
  const double ace = (apcer_pct + bpcer_pct) / 2.0;
  return {ace, 100.0 - ace};
}

EvalReport evaluate(std::span<const ScoredSample> samples, double threshold) {
  check_scores(samples);
  require_both(count_labels(samples));
  EvalReport r;
  r.threshold = threshold;
  std::map<std::string, MaterialApcer> by_material;
  for (const auto& s : samples) {
    const bool predicted_live = s.score >= threshold;
    if (s.label == Label::Live) {
      ++r.live_total;
      if (!predicted_live) ++r.live_misclassified;
    } else {
      ++r.spoof_total;
      if (predicted_live) ++r.spoof_misclassified;
      auto& m = by_material[s.material];
      m.material = s.material;
      ++m.total;
      if (predicted_live) ++m.misclassified;
    }
  }
  r.apcer = percent(r.spoof_misclassified, r.spoof_total);
  r.bpcer = percent(r.live_misclassified, r.live_total);
  const auto a = ace_and_accuracy(r.apcer, r.bpcer);
  r.ace = a.ace;
  r.accuracy = a.accuracy;
  for (auto& [name, m] : by_material) {
    m.apcer = percent(m.misclassified, m.total);
    r.per_material.push_back(m);
  }
  return r;
}

DetCurve det_curve(std::span<const ScoredSample> samples) {
  check_scores(samples);
  const Counts c = count_labels(samples);
  require_both(c);

  std::vector<double> live;
  std::vector<double> spoof;
  for (const auto& s : samples) (s.label == Label::Live ? live : spoof).push_back(s.score);
  std::sort(live.begin(), live.end());
  std::sort(spoof.begin(), spoof.end());

  std::vector<double> thresholds{0.0, 1.0};
  for (const auto& s : samples) thresholds.push_back(s.score);
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

  DetCurve curve;
  curve.points.reserve(thresholds.size());
  std::size_t live_below = 0;
  std::size_t spoof_below = 0;
  for (double t : thresholds) {
    while (live_below < live.size() && live[live_below] < t) ++live_below;
    while (spoof_below < spoof.size() && spoof[spoof_below] < t) ++spoof_below;
    curve.points.push_back({t, percent(spoof.size() - spoof_below, spoof.size()), percent(live_below, live.size())});
  }
  curve.bpcer_at_apcer_1 = bpcer_at_apcer(curve.points, 1.0);
  return curve;
}

std::optional<double> bpcer_at_apcer(std::span<const DetPoint> points, double target) {
  for (std::size_t j = 0; j < points.size(); ++j) {
    if (points[j].apcer > target) continue;
    if (j == 0 || points[j].apcer == target) return points[j].bpcer;
    const DetPoint& a = points[j - 1];
    const DetPoint& b = points[j];
    return a.bpcer + (target - a.apcer) * (b.bpcer - a.bpcer) / (b.apcer - a.apcer);
  }
  return std::nullopt;
}

std::vector<RocPoint> roc_curve(std::span<const ScoredSample> samples) {
  const DetCurve det = det_curve(samples);
  std::vector<RocPoint> out;
  out.reserve(det.points.size() + 1);
  for (auto it = det.points.rbegin(); it != det.points.rend(); ++it) {
    out.push_back({it->apcer / 100.0, 1.0 - it->bpcer / 100.0});
  }
  if (out.front().fpr != 0.0 || out.front().tpr != 0.0) out.insert(out.begin(), RocPoint{0.0, 0.0});
  return out;
}

double auc(std::span<const RocPoint> points) {
  double area = 0.0;
  for (std::size_t i = 1; i < points.size(); ++i) {
    area += (points[i].fpr - points[i - 1].fpr) * (points[i].tpr + points[i - 1].tpr) / 2.0;
  }
  return area;
}

std::string report_json(const EvalReport& r, const std::string& echo) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["threshold"] = r.threshold;
  j["apcer"] = r.apcer;
  j["bpcer"] = r.bpcer;
  j["ace"] = r.ace;
  j["accuracy"] = r.accuracy;
  j["counts"] = {{"live_total", r.live_total},
                 {"spoof_total", r.spoof_total},
                 {"live_misclassified", r.live_misclassified},
                 {"spoof_misclassified", r.spoof_misclassified}};
  ordered_json mats = ordered_json::array();
  for (const auto& m : r.per_material) {
    mats.push_back({{"material", m.material}, {"total", m.total}, {"misclassified", m.misclassified}, {"apcer", m.apcer}});
  }
  j["per_material"] = mats;
  if (!echo.empty()) {
    auto parsed = ordered_json::parse(echo, nullptr, false);
    j["config"] = parsed.is_discarded() ? ordered_json(echo) : parsed;
  }
  return j.dump(2) + "\n";
}

void write_report_json(const EvalReport& report, const std::filesystem::path& path, const std::string& echo) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << report_json(report, echo);
  if (!out) throw Error(ErrorCode::IoError, "short write to " + path.string());
}

void write_det_csv(const DetCurve& curve, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << "# bpcer_at_apcer_1: "
      << (curve.bpcer_at_apcer_1 ? detail::format_double(*curve.bpcer_at_apcer_1) : std::string("nan")) << '\n';
  out << "threshold,apcer,bpcer\n";
  for (const auto& p : curve.points) {
    out << detail::format_double(p.threshold) << ',' << detail::format_double(p.apcer) << ','
        << detail::format_double(p.bpcer) << '\n';
  }
  if (!out) throw Error(ErrorCode::IoError, "short write to " + path.string());
}

void write_roc_csv(std::span<const RocPoint> points, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << "fpr,tpr\n";
  for (const auto& p : points) out << detail::format_double(p.fpr) << ',' << detail::format_double(p.tpr) << '\n';
  if (!out) throw Error(ErrorCode::IoError, "short write to " + path.string());
}

DetCurve read_det_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  DetCurve curve;
  std::string line;
  bool header = false;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string_view v = detail::trim(line);
    if (v.empty()) continue;
    if (v.front() == '#') {
      constexpr std::string_view key = "# bpcer_at_apcer_1:";
      double x = 0.0;
      if (v.starts_with(key) && detail::parse_double(v.substr(key.size()), x)) curve.bpcer_at_apcer_1 = x;
      continue;
    }
    if (!header) {
      if (v != "threshold,apcer,bpcer") throw Error(ErrorCode::ParseError, path.string() + ": unexpected DET header");
      header = true;
      continue;
    }
    const auto f = detail::split_csv_line(v);
    DetPoint p;
    if (f.size() != 3 || !detail::parse_double(f[0], p.threshold) || !detail::parse_double(f[1], p.apcer) ||
        !detail::parse_double(f[2], p.bpcer)) {
      throw Error(ErrorCode::ParseError, path.string() + ":" + std::to_string(lineno) + ": malformed DET row");
    }
    curve.points.push_back(p);
  }
  return curve;
}

void write_scores_csv(std::span<const ScoredSample> samples, std::span<const std::string> ids,
                      const std::filesystem::path& path) {
  if (samples.size() != ids.size()) throw Error(ErrorCode::ShapeMismatch, "one id per scored sample required");
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << "id,label,material,score\n";
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    out << ids[i] << ',' << (s.label == Label::Live ? "live" : "spoof") << ',' << s.material << ','
        << detail::format_double(s.score) << '\n';
  }
  if (!out) throw Error(ErrorCode::IoError, "short write to " + path.string());
}

std::vector<ScoredSample> read_scores_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ParseError, "cannot read scores " + path.string());
  std::vector<ScoredSample> out;
  std::string line;
  std::size_t lineno = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string_view v = detail::trim(line);
    if (v.empty() || v.front() == '#') continue;
    if (!header) {
      if (v != "id,label,material,score") throw Error(ErrorCode::ParseError, path.string() + ": unexpected header");
      header = true;
      continue;
    }
    const auto f = detail::split_csv_line(v);
    ScoredSample s;
    const auto where = path.string() + ":" + std::to_string(lineno);
    if (f.size() != 4 || !detail::parse_double(f[3], s.score)) throw Error(ErrorCode::ParseError, where + ": malformed row");
    const auto label = detail::trim(f[1]);
    if (label == "live") s.label = Label::Live;
    else if (label == "spoof") s.label = Label::Spoof;
    else throw Error(ErrorCode::ParseError, where + ": label must be live or spoof");
    s.material = std::string(detail::trim(f[2]));
    out.push_back(std::move(s));
  }
  if (!header) throw Error(ErrorCode::ParseError, path.string() + ": empty scores file");
  return out;
}

}  // namespace dyffpad::metrics
