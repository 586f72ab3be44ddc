#include <json.hpp>

#include "dyffpad/error.hpp"
#include "dyffpad/fusion.hpp"

namespace dyffpad::fusion {

using nlohmann::json;

std::string_view branch_name(BranchMode mode) noexcept {
  switch (mode) {
    case BranchMode::Fused: return "fused";
    case BranchMode::FeaturesOnly: return "features";
    case BranchMode::CnnOnly: return "cnn";
  }
  return "fused";
}

BranchMode parse_branch(std::string_view name) {
  if (name == "fused") return BranchMode::Fused;
  if (name == "features") return BranchMode::FeaturesOnly;
  if (name == "cnn") return BranchMode::CnnOnly;
  throw Error(ErrorCode::InvalidConfig, "unknown branch mode '" + std::string(name) + "' (fused, features, cnn)");
}

DyffpadConfig DyffpadConfig::desk() { return {}; }

DyffpadConfig DyffpadConfig::full() {
  DyffpadConfig c;
  c.input_side = 224;
  c.stem = {7, 2, 3, 64, 2};
  c.blocks = {{6, 32}, {12, 32}, {24, 32}, {16, 32}};
  c.transitions = {128, 256, 512};
  return c;
}

int DyffpadConfig::cnn_channels() const {
  int ch = stem.channels;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    ch += blocks[i].num_layers * blocks[i].growth_rate;
    if (i < transitions.size()) ch = transitions[i];
  }
  return ch;
}

namespace {

[[noreturn]] void invalid(const std::string& what) { throw Error(ErrorCode::InvalidConfig, what); }

void check_widths(const std::vector<int>& widths, const char* name, int last) {
  if (widths.empty()) invalid(std::string(name) + " must list at least one width");
  for (int w : widths) {
    if (w < 1) invalid(std::string(name) + " widths must be positive");
  }
  if (widths.back() != last) {
    invalid(std::string(name) + " must end in " + std::to_string(last) + ", got " + std::to_string(widths.back()));
  }
}

}  // namespace

void DyffpadConfig::validate() const {
  if (feature_dim != kFeatureDim) invalid("feature_dim must be " + std::to_string(kFeatureDim));
  if (!(bn_eps > 0.0)) invalid("bn_eps must be positive");
  if (!(bn_momentum > 0.0 && bn_momentum <= 1.0)) invalid("bn_momentum must lie in (0, 1]");
  check_widths(feat_dnn, "feat_dnn", kBranchWidth);
  check_widths(cnn_head, "cnn_head", kBranchWidth);
  check_widths(final_head, "final_head", 1);

  if (input_side < 8) invalid("input_side must be at least 8");
  if (stem.kernel < 1 || stem.stride < 1 || stem.pad < 0 || stem.channels < 1) invalid("stem fields out of range");
  if (stem.pool != 0 && stem.pool != 2) invalid("stem pool must be 0 or 2");
  if (blocks.empty()) invalid("cnn needs at least one dense block");
  for (const auto& b : blocks) {
    if (b.num_layers < 1) invalid("dense block num_layers must be >= 1");
    if (b.growth_rate < 1) invalid("dense block growth_rate must be >= 1");
  }
  if (transitions.size() + 1 != blocks.size()) invalid("need exactly one transition between consecutive blocks");
  for (int t : transitions) {
    if (t < 1) invalid("transition channels must be >= 1");
  }

  if (input_side + 2 * stem.pad < stem.kernel) invalid("stem kernel larger than the padded input");
  int side = (input_side + 2 * stem.pad - stem.kernel) / stem.stride + 1;
  if (stem.pool) side /= 2;
  for (std::size_t i = 0; i < transitions.size(); ++i) {
    if (side < 2) invalid("input_side too small for the transition count");
    side /= 2;
  }
  if (side < 1) invalid("input_side too small for the cnn");
}

std::string DyffpadConfig::to_json() const {
  json j;
  j["input_side"] = input_side;
  j["stem"] = {{"kernel", stem.kernel}, {"stride", stem.stride}, {"pad", stem.pad},
               {"channels", stem.channels}, {"pool", stem.pool}};
  json bl = json::array();
  for (const auto& b : blocks) bl.push_back({{"layers", b.num_layers}, {"growth", b.growth_rate}});
  j["blocks"] = bl;
  j["transitions"] = transitions;
  j["cnn_head"] = cnn_head;
  j["feat_dnn"] = feat_dnn;
  j["final_head"] = final_head;
  j["feature_dim"] = feature_dim;
  j["bn_eps"] = bn_eps;
  j["bn_momentum"] = bn_momentum;
  j["branch"] = std::string(branch_name(branch));
  return j.dump();
}

DyffpadConfig DyffpadConfig::from_json(const std::string& text) {
  DyffpadConfig c;
  try {
    const json j = json::parse(text);
    if (!j.is_object()) invalid("model config must be a JSON object");
    if (j.contains("preset")) {
      const auto p = j.at("preset").get<std::string>();
      if (p == "full") c = full();
      else if (p != "desk") invalid("unknown preset '" + p + "'");
    }
    if (j.contains("input_side")) c.input_side = j.at("input_side").get<int>();
    if (j.contains("stem")) {
      const auto& s = j.at("stem");
      c.stem.kernel = s.value("kernel", c.stem.kernel);
      c.stem.stride = s.value("stride", c.stem.stride);
      c.stem.pad = s.value("pad", c.stem.pad);
      c.stem.channels = s.value("channels", c.stem.channels);
      c.stem.pool = s.value("pool", c.stem.pool);
    }
    if (j.contains("blocks")) {
      c.blocks.clear();
      for (const auto& b : j.at("blocks")) c.blocks.push_back({b.at("layers").get<int>(), b.at("growth").get<int>()});
    }
    if (j.contains("transitions")) c.transitions = j.at("transitions").get<std::vector<int>>();
    if (j.contains("cnn_head")) c.cnn_head = j.at("cnn_head").get<std::vector<int>>();
    if (j.contains("feat_dnn")) c.feat_dnn = j.at("feat_dnn").get<std::vector<int>>();
    if (j.contains("final_head")) c.final_head = j.at("final_head").get<std::vector<int>>();
    if (j.contains("feature_dim")) c.feature_dim = j.at("feature_dim").get<int>();
    if (j.contains("bn_eps")) c.bn_eps = j.at("bn_eps").get<double>();
    if (j.contains("bn_momentum")) c.bn_momentum = j.at("bn_momentum").get<double>();
    if (j.contains("branch")) c.branch = parse_branch(j.at("branch").get<std::string>());
  } catch (const json::exception& e) {
    invalid(std::string("model config: ") + e.what());
  }
  return c;
}

}  // namespace dyffpad::fusion
