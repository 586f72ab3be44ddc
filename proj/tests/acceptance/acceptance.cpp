#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <sstream>

#include "benchmark_set.hpp"
#include "commands.hpp"
#include "dyffpad/lpq.hpp"
#include "dyffpad/metrics.hpp"
#include "dyffpad/quality.hpp"
#include "fixtures.hpp"
#include "gradcheck.hpp"
#include "lpq_blur.hpp"
#include "oracles.hpp"

using namespace dyffpad;

namespace {

struct Verdict {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      if (pass) detail << "failed: ";
      else detail << "; ";
      detail << what;
      pass = false;
    }
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

bool throws(ErrorCode code, const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code() == code;
  }
  return false;
}

// ---------------------------------------------------------------- criteria

void gradients(Verdict& v) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto cases = gradcheck::run_suite<float>(2024);
  const double secs = seconds_since(t0);
  double worst = 0.0;
  std::string worst_name;
  bool has_graph = false;
  for (const auto& c : cases) {
    has_graph |= c.name == "fused graph";
    for (const auto& t : c.tensors) {
      if (t.rel_error > worst) {
        worst = t.rel_error;
        worst_name = c.name + "/" + t.name;
      }
    }
  }
  v.require(cases.size() >= 20, "fewer than 20 cases");
  v.require(has_graph, "fused graph not checked");
  v.require(worst < 1e-3, "relative error " + std::to_string(worst) + " at " + worst_name);
  v.require(secs < 120.0, "took " + std::to_string(secs) + " s");
  if (v.pass) v.detail << cases.size() << " cases, worst " << worst << " (" << worst_name << "), " << secs << " s";
}

void lpq_oracle(Verdict& v) {
  std::size_t pixels = 0;
  double worst_sum = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto img = fixtures::noise_image(32, 32, 900 + seed);
    for (int y = 3; y < 29; ++y)
      for (int x = 3; x < 29; ++x) {
        ++pixels;
        if (lpq::lpq_code(img, x, y) != oracle::lpq_code(img, x, y, 7)) {
          v.require(false, "code mismatch at (" + std::to_string(x) + "," + std::to_string(y) + ") seed " + std::to_string(seed));
          return;
        }
      }
    const auto h = lpq::lpq_histogram(img);
    double sum = 0.0;
    for (double b : h) sum += b;
    worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
  }
  v.require(worst_sum <= 1e-9, "histogram sum off by " + std::to_string(worst_sum));
  if (v.pass) v.detail << pixels << " pixels equal, max |sum-1| " << worst_sum;
}

void lpq_blur(Verdict& v) {
  double worst = 0.0;
  for (double angle : {0.0, 0.5, 1.1, 2.0})
    for (double period : {8.0, 11.0}) {
      const auto img = fixtures::grating(96, period, angle, 0.4);
      worst = std::max(worst, lpq::chi_squared(lpq::lpq_histogram(img), lpq::lpq_histogram(fixtures::blur121(img))));
    }
  v.require(worst < 0.05, "chi2 " + std::to_string(worst));
  if (v.pass) v.detail << "max chi2 " << worst << " over 8 gratings";
}

void quality_bounds(Verdict& v) {
  using namespace quality;
  const QualityConfig cfg;
  const GaborBank bank(cfg.gabor_orientations, cfg.gabor_frequency, cfg.gabor_sigma);
  Rng rng(1234);
  int valid = 0;
  for (int i = 0; i < 1000; ++i) {
    const double angle = rng.uniform(0.0, std::numbers::pi), period = rng.uniform(4.0, 14.0), noise = rng.uniform(0.0, 0.5);
    const bool structured = i % 3 != 0;
    const Block b = fixtures::make_block(32, 32, [&](int r, int c) {
      const double s = structured ? 0.4 * std::cos(2 * std::numbers::pi * (-std::sin(angle) * c + std::cos(angle) * r) / period) : 0.0;
      return std::clamp(0.5 + s + noise * (rng.uniform() - 0.5) * 2.0, 0.0, 1.0);
    });
    const auto q = block_quality(b, cfg, bank);
    if (!q.valid) continue;
    ++valid;
    if (q.fda_valid && !(q.fda >= 0.0 && q.fda <= 1.0)) v.require(false, "fda out of range");
    if (!(q.ocl >= 0.0 && q.ocl <= 1.0)) v.require(false, "ocl out of range");
  }
  v.require(valid > 900, "only " + std::to_string(valid) + " valid blocks");

  std::vector<double> sig(32);
  for (int i = 0; i < 32; ++i) sig[static_cast<std::size_t>(i)] = 0.5 + 0.3 * std::cos(2 * std::numbers::pi * i / 8.0 + 0.3);
  const double f = fda_from_signature(sig, 0.3);
  v.require(f >= 0.99, "sinusoid FDA " + std::to_string(f));

  const std::vector<double> dx1{1, -2, 0.5, 3}, dy1(4, 0.0);
  const std::vector<double> dx2{1, 0, -1, 0}, dy2{0, 1, 0, -1};
  v.require(ocl_from_gradients(dx1, dy1) == 1.0, "rank-one OCL");
  v.require(std::abs(ocl_from_gradients(dx2, dy2)) < 1e-12, "isotropic OCL");

  RidgeValleyProfile p;
  const int widths[] = {4, 4, 4, 4, 8, 4, 8, 4};
  std::vector<Run> row;
  int at = 0;
  for (int k = 0; k < 8; ++k) {
    row.push_back({k % 2 ? RvLabel::Valley : RvLabel::Ridge, at, widths[k]});
    at += widths[k];
  }
  p.rows.push_back(row);
  // Independent evaluation of the same formula.
  const double ref = (std::abs(4 - 6.0) * 2 + std::abs(8 - 6.0) * 2) / (24.0 + 16.0);
  const double got = rvc(p);
  v.require(std::abs(got - 0.2) < 1e-12 && std::abs(got - ref) < 1e-12, "RVC " + std::to_string(got));
  if (v.pass) v.detail << valid << " valid random blocks in range; sinusoid FDA " << f << "; RVC " << got;
}

void metric_identities(Verdict& v) {
  using namespace metrics;
  const auto a = ace_and_accuracy(3.51, 3.51);
  v.require(std::abs(a.accuracy - 96.49) < 1e-12, "ACE 3.51 gives " + std::to_string(a.accuracy));
  Rng rng(77);
  std::vector<ScoredSample> s;
  for (int i = 0; i < 1000; ++i) s.push_back({std::floor(rng.uniform() * 200.0) / 200.0, i % 2 ? Label::Spoof : Label::Live, ""});
  for (int k = 0; k < 20; ++k) {
    const auto r = evaluate(s, rng.uniform());
    v.require(r.accuracy == 100.0 - r.ace, "accuracy != 100 - ace");
  }
  const auto det = det_curve(s);
  for (std::size_t i = 0; i < det.points.size(); ++i) {
    const auto& p = det.points[i];
    const auto [ap, bp] = oracle::recount(s, p.threshold);
    if (p.apcer != ap || p.bpcer != bp) {
      v.require(false, "DET differs from recount at threshold " + std::to_string(p.threshold));
      break;
    }
    if (i > 0 && (p.apcer > det.points[i - 1].apcer || p.bpcer < det.points[i - 1].bpcer)) {
      v.require(false, "DET not monotone");
      break;
    }
  }
  if (v.pass) v.detail << "96.49 from ACE 3.51; " << det.points.size() << " DET points equal the recount and are monotone";
}

void desk_end_to_end(Verdict& v) {
  const auto t0 = std::chrono::steady_clock::now();
  std::ostringstream runs;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto b = bench::make_benchmark(seed);
    const auto feats = bench::run_branch(b, bench::BranchMode::FeaturesOnly, seed);
    const auto cnn = bench::run_branch(b, bench::BranchMode::CnnOnly, seed);
    const auto fused = bench::run_branch(b, bench::BranchMode::Fused, seed);
    runs << (seed > 1 ? "; " : "") << "seed " << seed << " feat " << 100 * feats.test_acc << " cnn " << 100 * cnn.test_acc
         << " fused " << 100 * fused.test_acc;
    v.require(fused.test_acc >= 0.95, "seed " + std::to_string(seed) + " fused below 95%");
    v.require(fused.test_acc >= std::max(feats.test_acc, cnn.test_acc) - 0.01,
              "seed " + std::to_string(seed) + " fused trails a single branch by more than 1 point");
  }
  const double secs = seconds_since(t0);
  v.require(secs < 1800.0, "took " + std::to_string(secs) + " s");
  v.detail << (v.pass ? "" : " | ") << runs.str() << "; " << secs << " s";
}

int cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  return cli::run_cli(args, out, err);
}

void determinism(Verdict& v) {
  fixtures::TempDir a("accept"), b("accept");
  for (const auto* dir : {&a, &b}) {
    const auto set = (*dir / "set").string();
    const auto manifest = (*dir / "set" / "manifest.csv").string();
    const int rc = cli({"synth", "--out", set, "--count", "30", "--seed", "11"}) +
                   cli({"extract", "--manifest", manifest, "--out", (*dir / "features.csv").string()}) +
                   cli({"train", "--manifest", manifest, "--out-dir", (*dir / "run").string(), "--epochs", "3",
                        "--batch", "8", "--seed", "11"}) +
                   cli({"eval", "--weights", (*dir / "run" / "weights.bin").string(), "--manifest", manifest,
                        "--out-dir", (*dir / "eval").string()});
    v.require(rc == 0, "pipeline exited nonzero");
  }
  int compared = 0;
  for (const char* f : {"features.csv", "run/weights.bin", "run/history.csv", "eval/report.json", "eval/det.csv",
                        "eval/roc.csv", "eval/scores.csv"}) {
    v.require(fixtures::slurp(a / f) == fixtures::slurp(b / f), std::string(f) + " differs");
    ++compared;
  }
  if (v.pass) v.detail << compared << " artifacts byte-identical across two runs";
}

void serialization(Verdict& v) {
  using namespace fusion;
  fixtures::TempDir dir("accept");
  const auto cfg = DyffpadConfig::desk();
  auto m = build_model(cfg, 5);
  Rng rng(6);
  TensorDataset d;
  d.images = gradcheck::random_tensor<float>({8, 1, 64, 64}, rng, 0.0, 1.0);
  d.features = gradcheck::random_tensor<float>({8, 269}, rng, 0.0, 1.0);
  d.labels.assign(8, 1.0f);
  m.fit_normalizer(d.features);
  save_weights(m, dir / "w.bin");
  auto back = load_weights(dir / "w.bin", cfg);
  const auto s1 = predict(m, d), s2 = predict(back, d);
  bool exact = s1.size() == s2.size();
  for (std::size_t i = 0; exact && i < s1.size(); ++i) exact = std::bit_cast<std::uint64_t>(s1[i]) == std::bit_cast<std::uint64_t>(s2[i]);
  v.require(exact, "scores differ after reload");

  const std::string bytes = fixtures::slurp(dir / "w.bin");
  fixtures::spit(dir / "trunc.bin", bytes.substr(0, bytes.size() / 2));
  std::string flipped = bytes;
  flipped[bytes.size() - 64] = static_cast<char>(flipped[bytes.size() - 64] ^ 0x01);
  fixtures::spit(dir / "flip.bin", flipped);
  v.require(throws(ErrorCode::CorruptFile, [&] { load_weights(dir / "trunc.bin", cfg); }), "truncated file accepted");
  v.require(throws(ErrorCode::ChecksumMismatch, [&] { load_weights(dir / "flip.bin", cfg); }), "bit flip accepted");
  v.require(throws(ErrorCode::ConfigMismatch, [&] { load_weights(dir / "w.bin", DyffpadConfig::full()); }),
            "config mismatch accepted");
  if (v.pass) v.detail << "8 scores bit-exact; truncation, bit flip and config mismatch rejected";
}

}  // namespace

int main() {
  const std::pair<const char*, void (*)(Verdict&)> criteria[] = {
      {"gradient certification", gradients},
      {"lpq oracle equivalence", lpq_oracle},
      {"lpq blur insensitivity", lpq_blur},
      {"quality bounds and oracles", quality_bounds},
      {"metric identities", metric_identities},
      {"desk end-to-end", desk_end_to_end},
      {"pipeline determinism", determinism},
      {"weight serialization", serialization},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    Verdict v;
    try {
      run(v);
    } catch (const std::exception& e) {
      v.require(false, std::string("exception: ") + e.what());
    }
    std::printf("%s %s: %s\n", v.pass ? "PASS" : "FAIL", name, v.detail.str().c_str());
    std::fflush(stdout);
    failed += v.pass ? 0 : 1;
  }
  return failed == 0 ? 0 : 1;
}
