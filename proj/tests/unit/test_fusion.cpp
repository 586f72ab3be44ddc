#include <algorithm>
#include <bit>
#include <fstream>

#include "doctest.h"
#include "dyffpad/fusion.hpp"
#include "expect.hpp"
#include "fixtures.hpp"
#include "gradcheck.hpp"

using namespace dyffpad;
using namespace dyffpad::fusion;
using expect::throws_code;

namespace {

TensorDataset random_set(std::size_t n, const DyffpadConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  TensorDataset d;
  const auto side = static_cast<std::size_t>(cfg.input_side);
  if (cfg.uses_images()) d.images = gradcheck::random_tensor<float>({n, 1, side, side}, rng, 0.0, 1.0);
  if (cfg.uses_features()) d.features = gradcheck::random_tensor<float>({n, static_cast<std::size_t>(cfg.feature_dim)}, rng, 0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) d.labels.push_back(i % 2 ? 0.0f : 1.0f);
  return d;
}

std::vector<std::vector<float>> snapshot(DyffpadModel& m) {
  std::vector<std::vector<float>> out;
  for (const auto& s : m.state()) out.emplace_back(s.tensor->values().begin(), s.tensor->values().end());
  return out;
}

bool bit_equal(const std::vector<std::vector<float>>& a, const std::vector<std::vector<float>>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].size() != b[i].size()) return false;
    for (std::size_t k = 0; k < a[i].size(); ++k) {
      if (std::bit_cast<std::uint32_t>(a[i][k]) != std::bit_cast<std::uint32_t>(b[i][k])) return false;
    }
  }
  return true;
}

}  // namespace

TEST_CASE("desk config builds with a 64-wide fusion input") {
  const auto cfg = DyffpadConfig::desk();
  auto m = build_model(cfg, 1);
  CHECK(cfg.final_input_width() == 64);
  CHECK(m.parameter_count() > 0);
  const auto d = random_set(3, cfg, 2);
  const auto s = m.forward(d.images, d.features, Mode::Infer);
  CHECK(s.shape() == nn::Shape{3, 1});
}

TEST_CASE("branch widths must end in 32") {
  auto cfg = DyffpadConfig::desk();
  cfg.feat_dnn = {128, 64, 16};
  CHECK(throws_code(ErrorCode::InvalidConfig, [&] { build_model(cfg, 1); }));
  cfg = DyffpadConfig::desk();
  cfg.cnn_head = {64, 16};
  CHECK(throws_code(ErrorCode::InvalidConfig, [&] { build_model(cfg, 1); }));
  cfg = DyffpadConfig::desk();
  cfg.final_head = {32, 2};
  CHECK(throws_code(ErrorCode::InvalidConfig, [&] { build_model(cfg, 1); }));
  cfg = DyffpadConfig::desk();
  cfg.transitions = {};
  CHECK(throws_code(ErrorCode::InvalidConfig, [&] { build_model(cfg, 1); }));
}

TEST_CASE("same seed gives bit-identical parameters") {
  auto a = build_model(DyffpadConfig::desk(), 42);
  auto b = build_model(DyffpadConfig::desk(), 42);
  auto c = build_model(DyffpadConfig::desk(), 43);
  CHECK(bit_equal(snapshot(a), snapshot(b)));
  CHECK_FALSE(bit_equal(snapshot(a), snapshot(c)));
}

TEST_CASE("full preset follows the DenseNet-121 layout") {
  const auto cfg = DyffpadConfig::full();
  CHECK_NOTHROW(cfg.validate());
  CHECK(cfg.input_side == 224);
  CHECK(cfg.blocks.size() == 4);
  const int layers[] = {6, 12, 24, 16};
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(cfg.blocks[i].num_layers == layers[i]);
    CHECK(cfg.blocks[i].growth_rate == 32);
  }
  CHECK(cfg.cnn_channels() == 1024);
}

TEST_CASE("config JSON round trip") {
  for (const auto& cfg : {DyffpadConfig::desk(), DyffpadConfig::full()}) {
    CHECK(DyffpadConfig::from_json(cfg.to_json()) == cfg);
  }
  CHECK(DyffpadConfig::from_json(R"({"preset":"full"})") == DyffpadConfig::full());
  CHECK(throws_code(ErrorCode::InvalidConfig, [] { DyffpadConfig::from_json(R"({"preset":"huge"})"); }));
  CHECK(throws_code(ErrorCode::InvalidConfig, [] { DyffpadConfig::from_json(R"({"input_side":"big"})"); }));
  CHECK(throws_code(ErrorCode::InvalidConfig, [] { parse_branch("both"); }));
}

TEST_CASE("zero inputs with zero biases score exactly one half") {
  const auto cfg = DyffpadConfig::desk();
  auto m = build_model(cfg, 7);
  for (auto& p : m.parameters()) {
    if (p.name.ends_with(".bias") || p.name.ends_with(".beta")) std::fill(p.tensor->values().begin(), p.tensor->values().end(), 0.0f);
  }
  Tensor<float> images({2, 1, 64, 64}, 0.0f), feats({2, 269}, 0.0f);
  for (auto mode : {Mode::Infer, Mode::Train}) {
    const auto s = m.forward(images, feats, mode);
    CHECK(s[0] == 0.5f);
    CHECK(s[1] == 0.5f);
  }
}

TEST_CASE("scores lie strictly inside the unit interval") {
  const auto cfg = DyffpadConfig::desk();
  auto m = build_model(cfg, 3);
  const auto d = random_set(16, cfg, 4);
  const auto s = m.forward(d.images, d.features, Mode::Infer);
  for (float v : s.values()) {
    CHECK(v > 0.0f);
    CHECK(v < 1.0f);
  }
}

TEST_CASE("identical samples score identically and batch order permutes scores") {
  const auto cfg = DyffpadConfig::desk();
  auto m = build_model(cfg, 5);
  auto d = random_set(8, cfg, 6);
  const std::size_t dup[] = {2, 2};
  const auto pair = d.subset(dup);
  const auto s2 = m.forward(pair.images, pair.features, Mode::Infer);
  CHECK(s2[0] == s2[1]);

  const auto base = predict(m, d);
  std::vector<std::size_t> perm{5, 0, 7, 3, 1, 6, 2, 4};
  const auto permuted = predict(m, d.subset(perm));
  for (std::size_t i = 0; i < perm.size(); ++i) CHECK(permuted[i] == base[perm[i]]);
}

TEST_CASE("wrong input shapes are rejected") {
  auto m = build_model(DyffpadConfig::desk(), 1);
  Tensor<float> images({2, 1, 32, 32}, 0.0f), feats({2, 269}, 0.0f), short_feats({2, 13}, 0.0f);
  Tensor<float> ok_images({2, 1, 64, 64}, 0.0f), three_feats({3, 269}, 0.0f);
  CHECK(throws_code(ErrorCode::ShapeMismatch, [&] { m.forward(images, feats, Mode::Infer); }));
  CHECK(throws_code(ErrorCode::ShapeMismatch, [&] { m.forward(ok_images, short_feats, Mode::Infer); }));
  CHECK(throws_code(ErrorCode::ShapeMismatch, [&] { m.forward(ok_images, three_feats, Mode::Infer); }));
}

TEST_CASE("single-branch models ignore the other input") {
  auto cfg = DyffpadConfig::desk();
  cfg.branch = BranchMode::FeaturesOnly;
  auto f = build_model(cfg, 1);
  CHECK(cfg.final_input_width() == 32);
  Tensor<float> feats({2, 269}, 0.5f);
  CHECK(f.forward(Tensor<float>(), feats, Mode::Infer).size() == 2);
  cfg.branch = BranchMode::CnnOnly;
  auto c = build_model(cfg, 1);
  Tensor<float> images({2, 1, 64, 64}, 0.5f);
  CHECK(c.forward(images, Tensor<float>(), Mode::Infer).size() == 2);
}

TEST_CASE("weights round trip bit-exactly") {
  fixtures::TempDir dir("fusion");
  const auto cfg = DyffpadConfig::desk();
  auto m = build_model(cfg, 11);
  auto d = random_set(8, cfg, 12);
  m.fit_normalizer(d.features);
  save_weights(m, dir / "w.bin", "echo text");
  auto loaded = load_weights(dir / "w.bin", cfg);
  CHECK(bit_equal(snapshot(m), snapshot(loaded)));
  const auto a = predict(m, d), b = predict(loaded, d);
  CHECK(a == b);
  CHECK(read_weight_header(dir / "w.bin").echo == "echo text");
  auto again = load_weights(dir / "w.bin");
  CHECK(again.config() == cfg);

  save_weights(loaded, dir / "w2.bin", "echo text");
  CHECK(fixtures::slurp(dir / "w.bin") == fixtures::slurp(dir / "w2.bin"));
}

TEST_CASE("damaged weight files are rejected") {
  fixtures::TempDir dir("fusion");
  const auto cfg = DyffpadConfig::desk();
  auto m = build_model(cfg, 1);
  save_weights(m, dir / "w.bin");
  const std::string bytes = fixtures::slurp(dir / "w.bin");

  fixtures::spit(dir / "trunc.bin", bytes.substr(0, bytes.size() - 100));
  CHECK(throws_code(ErrorCode::CorruptFile, [&] { load_weights(dir / "trunc.bin", cfg); }));
  fixtures::spit(dir / "short.bin", bytes.substr(0, 10));
  CHECK(throws_code(ErrorCode::CorruptFile, [&] { load_weights(dir / "short.bin", cfg); }));

  std::string flipped = bytes;
  flipped[bytes.size() - 40] = static_cast<char>(flipped[bytes.size() - 40] ^ 0x10);
  fixtures::spit(dir / "flip.bin", flipped);
  CHECK(throws_code(ErrorCode::ChecksumMismatch, [&] { load_weights(dir / "flip.bin", cfg); }));

  std::string magic = bytes;
  magic[0] = 'X';
  fixtures::spit(dir / "magic.bin", magic);
  CHECK(throws_code(ErrorCode::CorruptFile, [&] { load_weights(dir / "magic.bin", cfg); }));

  CHECK(throws_code(ErrorCode::IoError, [&] { load_weights(dir / "absent.bin", cfg); }));
}

TEST_CASE("desk weights do not load into the full config") {
  fixtures::TempDir dir("fusion");
  auto m = build_model(DyffpadConfig::desk(), 1);
  save_weights(m, dir / "w.bin");
  CHECK(throws_code(ErrorCode::ConfigMismatch, [&] { load_weights(dir / "w.bin", DyffpadConfig::full()); }));
  auto cfg = DyffpadConfig::desk();
  cfg.branch = BranchMode::CnnOnly;
  CHECK(throws_code(ErrorCode::ConfigMismatch, [&] { load_weights(dir / "w.bin", cfg); }));
}

TEST_CASE("zero epochs leave the model untouched") {
  const auto cfg = DyffpadConfig::desk();
  auto m = build_model(cfg, 2);
  const auto before = snapshot(m);
  const auto r = train(m, random_set(8, cfg, 3), nullptr, {0, 4, 1e-3, 1});
  CHECK(r.history.empty());
  CHECK(r.selected_epoch == 0);
  CHECK(bit_equal(before, snapshot(m)));
}

TEST_CASE("single-class training sets are rejected") {
  const auto cfg = DyffpadConfig::desk();
  auto m = build_model(cfg, 2);
  auto d = random_set(8, cfg, 3);
  std::fill(d.labels.begin(), d.labels.end(), 1.0f);
  CHECK(throws_code(ErrorCode::SingleClassDataset, [&] { train(m, d, nullptr, {1, 4, 1e-3, 1}); }));
  CHECK(throws_code(ErrorCode::EmptySplit, [&] { train(m, TensorDataset{}, nullptr, {1, 4, 1e-3, 1}); }));
  CHECK(throws_code(ErrorCode::InvalidConfig, [&] { train(m, random_set(4, cfg, 1), nullptr, {1, 1, 1e-3, 1}); }));
}

TEST_CASE("training batches need two samples") {
  const auto cfg = DyffpadConfig::desk();
  auto m = build_model(cfg, 2);
  nn::Adam<float> opt(m.parameters());
  CHECK(throws_code(ErrorCode::BatchTooSmall, [&] { backward_step(m, random_set(1, cfg, 1), opt); }));
}

TEST_CASE("a step updates every branch and skips frozen tensors") {
  const auto cfg = DyffpadConfig::desk();
  auto m = build_model(cfg, 8);
  auto params = m.parameters();
  Tensor<float>* frozen = nullptr;
  for (auto& p : params) {
    if (p.name == "feat_dnn.fc1.weight") frozen = p.tensor;
  }
  REQUIRE(frozen);
  frozen->set_requires_grad(false);
  const auto before = snapshot(m);
  nn::Adam<float> opt(m.parameters());
  const double loss = backward_step(m, random_set(8, cfg, 9), opt);
  CHECK(std::isfinite(loss));
  const auto after = snapshot(m);
  std::size_t k = 0;
  for (auto& p : params) {
    INFO(p.name);
    if (p.tensor == frozen) CHECK(before[k] == after[k]);
    else CHECK(before[k] != after[k]);
    ++k;
  }
}

TEST_CASE("history CSV has one row per epoch") {
  fixtures::TempDir dir("fusion");
  const auto cfg = DyffpadConfig::desk();
  auto m = build_model(cfg, 2);
  const auto d = random_set(8, cfg, 5), v = random_set(4, cfg, 6);
  const auto r = train(m, d, &v, {3, 4, 1e-3, 1});
  REQUIRE(r.history.size() == 3);
  CHECK(r.selected_epoch >= 1);
  CHECK(r.selected_epoch <= 3);
  for (const auto& e : r.history) CHECK(e.val_acc.has_value());
  write_history_csv(r.history, dir / "h.csv");
  const auto text = fixtures::slurp(dir / "h.csv");
  CHECK(text.starts_with("epoch,loss,train_acc,val_acc\n"));
  CHECK(std::count(text.begin(), text.end(), '\n') == 4);
}

TEST_CASE("validation selection restores the best epoch") {
  const auto cfg = DyffpadConfig::desk();
  auto m = build_model(cfg, 2);
  const auto d = random_set(12, cfg, 5), v = random_set(6, cfg, 6);
  const auto r = train(m, d, &v, {4, 4, 1e-3, 1});
  double best = -1.0;
  for (const auto& e : r.history) best = std::max(best, *e.val_acc);
  CHECK(*r.history[static_cast<std::size_t>(r.selected_epoch - 1)].val_acc == best);
  CHECK(accuracy(predict(m, v), v.labels) == doctest::Approx(best));
}

TEST_CASE("end-to-end gradients through the desk graph match finite differences") {
  const auto result = gradcheck::check_graph<float>("desk", DyffpadConfig::desk(), 17, 3);
  bool saw_stem = false, saw_feat = false, saw_dense = false, saw_scale = false;
  for (const auto& t : result.tensors) {
    INFO(t.name << " rel " << t.rel_error);
    CHECK(t.rel_error < 1e-3);
    saw_stem |= t.name == "cnn.stem_conv.weight";
    saw_feat |= t.name.starts_with("feat_dnn.") && t.name.ends_with(".weight");
    saw_dense |= t.name.starts_with("cnn.block0.") && t.name.ends_with("conv.weight");
    saw_scale |= t.name.ends_with(".gamma");
  }
  CHECK(saw_stem);
  CHECK(saw_feat);
  CHECK(saw_dense);
  CHECK(saw_scale);
}
