#include <algorithm>
#include <bit>
#include <filesystem>

#include "doctest.h"
#include "dyffpad/data.hpp"
#include "expect.hpp"
#include "fixtures.hpp"

using namespace dyffpad;
using namespace dyffpad::data;
using expect::throws_code;

namespace {

SynthParams params(std::uint64_t seed) {
  SynthParams p;
  p.seed = seed;
  return p;
}

void write_images(const std::filesystem::path& dir, std::initializer_list<const char*> names) {
  for (const char* n : names) write_pgm(GrayImage(8, 8, 100), dir / n);
}

bool same_bits(const FeatureVector& a, const FeatureVector& b) {
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::bit_cast<std::uint64_t>(a[i]) != std::bit_cast<std::uint64_t>(b[i])) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("manifest with four present files loads") {
  fixtures::TempDir dir("data");
  write_images(dir.path(), {"a.pgm", "b.pgm", "c.pgm", "d.pgm"});
  fixtures::spit(dir / "m.csv",
                 "path,label,material,split\n"
                 "a.pgm,live,,train\n"
                 "b.pgm,spoof,latex,train\n"
                 "c.pgm,live,live,test\n"
                 "d.pgm,spoof,gelatin,test\n");
  const auto m = load_manifest(dir / "m.csv");
  REQUIRE(m.entries.size() == 4);
  CHECK(m.entries[0].material == "live");
  CHECK(m.entries[1].material == "latex");
  CHECK(m.resolve(m.entries[3]) == dir / "d.pgm");
  const auto counts = m.counts();
  CHECK(counts.at({Label::Spoof, "gelatin", Split::Test}) == 1);
  CHECK(counts.at({Label::Live, "live", Split::Train}) == 1);
}

TEST_CASE("missing listed file is named") {
  fixtures::TempDir dir("data");
  write_images(dir.path(), {"a.pgm"});
  fixtures::spit(dir / "m.csv", "path,label,material,split\na.pgm,live,,train\ngone.pgm,spoof,latex,train\n");
  const auto text = expect::error_text([&] { load_manifest(dir / "m.csv"); });
  CHECK(throws_code(ErrorCode::MissingFile, [&] { load_manifest(dir / "m.csv"); }));
  CHECK(text.find("gone.pgm") != std::string::npos);
}

TEST_CASE("train split needs both classes") {
  CHECK(throws_code(ErrorCode::SingleClassTrainSplit, [] {
    parse_manifest("path,label,material,split\na,live,,train\nb,live,,train\nc,spoof,x,test\n", ".");
  }));
}

TEST_CASE("malformed manifests are parse errors") {
  const char* bad[] = {
      "",
      "file,label,material,split\na,live,,train\nb,spoof,x,train\n",
      "path,label,material,split\na,alive,,train\nb,spoof,x,train\n",
      "path,label,material,split\na,live,,validate\nb,spoof,x,train\n",
      "path,label,material,split\na,live,,train\nb,spoof\n",
      "path,label,material,split\na,live,,train\na,spoof,x,train\n",
  };
  for (const char* text : bad) {
    INFO(text);
    CHECK(throws_code(ErrorCode::ParseError, [&] { parse_manifest(text, "."); }));
  }
  fixtures::TempDir dir("data");
  CHECK(throws_code(ErrorCode::ParseError, [&] { load_manifest(dir / "absent.csv"); }));
}

TEST_CASE("manifest write and reload") {
  fixtures::TempDir dir("data");
  write_images(dir.path(), {"a.pgm", "b.pgm"});
  DatasetManifest m;
  m.entries = {{"a.pgm", Label::Live, "live", Split::Train}, {"b.pgm", Label::Spoof, "latex", Split::Train}};
  write_manifest(m, dir / "m.csv");
  const auto back = load_manifest(dir / "m.csv");
  REQUIRE(back.entries.size() == 2);
  CHECK(back.entries[1].material == "latex");
  CHECK(back.entries[1].label == Label::Spoof);
}

TEST_CASE("generator is deterministic") {
  for (Label cls : {Label::Live, Label::Spoof}) {
    const auto a = synth_fingerprint(params(5), cls);
    const auto b = synth_fingerprint(params(5), cls);
    CHECK(a == b);
  }
  CHECK_FALSE(synth_fingerprint(params(5), Label::Live) == synth_fingerprint(params(6), Label::Live));
}

TEST_CASE("generator parameters are validated") {
  auto p = params(1);
  p.period = 3.0;
  CHECK(throws_code(ErrorCode::InvalidConfig, [&] { synth_fingerprint(p, Label::Live); }));
  p = params(1);
  p.width_jitter = -1.0;
  CHECK(throws_code(ErrorCode::InvalidConfig, [&] { synth_fingerprint(p, Label::Live); }));
  p = params(1);
  p.blur_width = 4;
  CHECK(throws_code(ErrorCode::InvalidConfig, [&] { synth_fingerprint(p, Label::Live); }));
}

TEST_CASE("generated live images have concentrated ridge spectra" * doctest::may_fail()) {
  double fda = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) fda += quality::quality_vector(synth_fingerprint(params(seed), Label::Live))[quality::kFdaMean] / 10.0;
  CHECK(fda >= 0.9);
}

TEST_CASE("generated live images have coherent orientation") {
  double ocl = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) ocl += quality::quality_vector(synth_fingerprint(params(seed), Label::Live))[quality::kOclMean] / 10.0;
  CHECK(ocl >= 0.9);
}

TEST_CASE("spoofs are rougher than their paired live image") {
  int larger = 0;
  std::vector<double> live_rws, spoof_rws;
  double live_fda = 0.0, spoof_fda = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto l = quality::quality_vector(synth_fingerprint(params(seed), Label::Live));
    const auto s = quality::quality_vector(synth_fingerprint(params(seed), Label::Spoof));
    if (s[quality::kRwsMean] > l[quality::kRwsMean]) ++larger;
    live_fda += l[quality::kFdaMean];
    spoof_fda += s[quality::kFdaMean];
  }
  CHECK(larger >= 95);
  CHECK(live_fda > spoof_fda);
}

TEST_CASE("a threshold on ridge roughness alone separates 200 pairs at 80% or better") {
  std::vector<std::pair<double, int>> pts;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    pts.emplace_back(quality::quality_vector(synth_fingerprint(params(5000 + seed), Label::Live))[quality::kRwsMean], 1);
    pts.emplace_back(quality::quality_vector(synth_fingerprint(params(5000 + seed), Label::Spoof))[quality::kRwsMean], 0);
  }
  std::sort(pts.begin(), pts.end());
  // Live iff rws < t; sweep every cut.
  std::size_t best = 0, live_below = 0;
  const std::size_t spoof_total = 200;
  for (std::size_t cut = 0; cut <= pts.size(); ++cut) {
    if (cut > 0) live_below += static_cast<std::size_t>(pts[cut - 1].second);
    const std::size_t spoof_below = cut - live_below;
    best = std::max(best, live_below + (spoof_total - spoof_below));
  }
  CHECK(static_cast<double>(best) / 400.0 >= 0.8);
}

TEST_CASE("synthetic set writes images, manifest and an 80/20 split") {
  fixtures::TempDir dir("data");
  const auto m = make_synthetic_set(dir / "set", 10, params(3));
  REQUIRE(m.entries.size() == 20);
  const auto back = load_manifest(dir / "set" / "manifest.csv");
  CHECK(back.entries.size() == 20);
  const auto counts = back.counts();
  CHECK(counts.at({Label::Live, "live", Split::Train}) == 8);
  CHECK(counts.at({Label::Live, "live", Split::Test}) == 2);
  CHECK(counts.at({Label::Spoof, "synthetic", Split::Train}) == 8);
  CHECK(counts.at({Label::Spoof, "synthetic", Split::Test}) == 2);
  fixtures::TempDir again("data");
  make_synthetic_set(again / "set", 10, params(3));
  CHECK(fixtures::slurp(dir / "set" / "manifest.csv") == fixtures::slurp(again / "set" / "manifest.csv"));
  CHECK(fixtures::slurp(dir / "set" / "spoof_0003.pgm") == fixtures::slurp(again / "set" / "spoof_0003.pgm"));
}

TEST_CASE("build_split extracts 269 features per sample") {
  fixtures::TempDir dir("data");
  const auto m = make_synthetic_set(dir.path(), 5, params(9));
  const ExtractionConfig cfg;
  const auto split = build_split(m, cfg, {32, nullptr, false});
  CHECK(split.train.size() + split.test.size() == 10);
  CHECK(split.failures.empty());
  for (const auto& s : split.train) {
    CHECK(s.features.size() == 269);
    CHECK(s.image.size() == 32 * 32);
    double lpq_sum = 0.0;
    for (std::size_t i = quality::kQualityDim; i < s.features.size(); ++i) lpq_sum += s.features[i];
    CHECK(lpq_sum == doctest::Approx(1.0).epsilon(1e-9));
  }
  const auto t = to_tensors(split.train, 32);
  CHECK(t.images.shape() == nn::Shape{split.train.size(), 1, 32, 32});
  CHECK(t.features.shape() == nn::Shape{split.train.size(), 269});
  CHECK(feature_columns().size() == 270);
}

TEST_CASE("blank images are skipped and reported") {
  fixtures::TempDir dir("data");
  auto m = make_synthetic_set(dir.path(), 3, params(2));
  write_pgm(GrayImage(128, 128, 255), dir / "blank.pgm");
  m.entries.push_back({"blank.pgm", Label::Spoof, "blank", Split::Train});
  const auto split = build_split(m, ExtractionConfig{});
  REQUIRE(split.failures.size() == 1);
  CHECK(split.failures[0].path.find("blank.pgm") != std::string::npos);
  CHECK(split.train.size() + split.test.size() == 6);
  CHECK(throws_code(ErrorCode::NoValidBlocks, [&] { build_split(m, ExtractionConfig{}, {0, nullptr, true}); }));
}

TEST_CASE("nothing extractable is an empty split") {
  fixtures::TempDir dir("data");
  write_pgm(GrayImage(64, 64, 255), dir / "a.pgm");
  write_pgm(GrayImage(64, 64, 0), dir / "b.pgm");
  DatasetManifest m;
  m.base_dir = dir.path();
  m.entries = {{"a.pgm", Label::Live, "live", Split::Train}, {"b.pgm", Label::Spoof, "x", Split::Train}};
  CHECK(throws_code(ErrorCode::EmptySplit, [&] { build_split(m, ExtractionConfig{}); }));
}

TEST_CASE("feature cache round trips bit for bit") {
  fixtures::TempDir dir("data");
  const auto m = make_synthetic_set(dir.path(), 3, params(4));
  const ExtractionConfig cfg;
  const auto split = build_split(m, cfg);
  const auto cache = make_cache(split.train, cfg);
  write_feature_cache(cache, dir / "cache.csv");
  const auto back = read_feature_cache(dir / "cache.csv");
  CHECK(back.config_hash == cfg.hash());
  REQUIRE(back.rows.size() == cache.rows.size());
  for (std::size_t i = 0; i < back.rows.size(); ++i) {
    CHECK(back.rows[i].path == cache.rows[i].path);
    CHECK(same_bits(back.rows[i].values, cache.rows[i].values));
  }
  const auto reused = build_split(m, cfg, {0, &back, false});
  for (std::size_t i = 0; i < reused.train.size(); ++i) CHECK(same_bits(reused.train[i].features, split.train[i].features));

  fixtures::spit(dir / "bad.csv", "garbage\n1,2\n");
  CHECK(throws_code(ErrorCode::ParseError, [&] { read_feature_cache(dir / "bad.csv"); }));
}

TEST_CASE("feature cache is invalidated by a config change") {
  fixtures::TempDir dir("data");
  const auto m = make_synthetic_set(dir.path(), 2, params(4));
  ExtractionConfig cfg;
  write_feature_cache(make_cache(build_split(m, cfg).train, cfg), dir / "cache.csv");
  CHECK(load_valid_cache(dir / "cache.csv", cfg).has_value());
  ExtractionConfig other = cfg;
  other.quality.fda_weight = 0.25;
  CHECK(other.hash() != cfg.hash());
  CHECK_FALSE(load_valid_cache(dir / "cache.csv", other).has_value());
  CHECK_FALSE(load_valid_cache(dir / "none.csv", cfg).has_value());
}

TEST_CASE("extraction config JSON round trip") {
  ExtractionConfig cfg;
  cfg.quality.block_rows = 16;
  cfg.quality.block_cols = 16;
  cfg.lpq.window_size = 5;
  const auto back = ExtractionConfig::from_json(cfg.to_json());
  CHECK(back.to_json() == cfg.to_json());
  CHECK(back.hash() == cfg.hash());
  CHECK(cfg.hash().size() == 8);
  CHECK(throws_code(ErrorCode::InvalidConfig, [] { ExtractionConfig::from_json("[1]"); }));
}
