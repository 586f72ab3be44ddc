#include <fstream>
#include <set>
#include <sstream>

#include "dyffpad/data.hpp"
#include "dyffpad/error.hpp"
#include "text.hpp"

namespace dyffpad::data {

std::string_view label_name(Label label) noexcept { return label == Label::Live ? "live" : "spoof"; }
std::string_view split_name(Split split) noexcept { return split == Split::Train ? "train" : "test"; }

std::filesystem::path DatasetManifest::resolve(const ManifestEntry& e) const {
  const std::filesystem::path p(e.path);
  return p.is_absolute() ? p : base_dir / p;
}

std::map<std::tuple<Label, std::string, Split>, std::size_t> DatasetManifest::counts() const {
  std::map<std::tuple<Label, std::string, Split>, std::size_t> out;
  for (const auto& e : entries) ++out[{e.label, e.material, e.split}];
  return out;
}

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(c >= 'A' && c <= 'Z' ? c - 'A' + 'a' : c);
  return out;
}

[[noreturn]] void parse_error(std::size_t line, const std::string& why) {
  throw Error(ErrorCode::ParseError, "manifest line " + std::to_string(line) + ": " + why);
}

}  // namespace

DatasetManifest parse_manifest(const std::string& text, const std::filesystem::path& base_dir) {
  DatasetManifest m;
  m.base_dir = base_dir;
  std::istringstream in(text);
  std::string raw;
  std::size_t lineno = 0;
  bool header = false;
  std::set<std::string> seen;
  while (std::getline(in, raw)) {
    ++lineno;
    const std::string_view line = detail::trim(raw);
    if (line.empty()) continue;
    if (line.front() == '#') {
      const std::string_view body = detail::trim(line.substr(1));
      const auto colon = body.find(':');
      if (colon != std::string_view::npos) {
        const std::string key = lower(detail::trim(body.substr(0, colon)));
        const std::string value(detail::trim(body.substr(colon + 1)));
        if (key == "sensor") m.sensor = value;
        if (key == "version") m.version = value;
      }
      continue;
    }
    const auto f = detail::split_csv_line(line);
    if (!header) {
      if (f.size() != 4 || detail::trim(f[0]) != "path" || detail::trim(f[1]) != "label" ||
          detail::trim(f[2]) != "material" || detail::trim(f[3]) != "split") {
        parse_error(lineno, "expected header 'path,label,material,split'");
      }
      header = true;
      continue;
    }
    if (f.size() != 4) parse_error(lineno, "expected 4 fields, got " + std::to_string(f.size()));
    ManifestEntry e;
    e.path = std::string(detail::trim(f[0]));
    if (e.path.empty()) parse_error(lineno, "empty path");
    const std::string label = lower(detail::trim(f[1]));
    if (label == "live") e.label = Label::Live;
    else if (label == "spoof") e.label = Label::Spoof;
    else parse_error(lineno, "label must be live or spoof, got '" + label + "'");
    e.material = std::string(detail::trim(f[2]));
    if (e.material.empty()) e.material = e.label == Label::Live ? "live" : "unknown";
    const std::string split = lower(detail::trim(f[3]));
    if (split == "train") e.split = Split::Train;
    else if (split == "test") e.split = Split::Test;
    else parse_error(lineno, "split must be train or test, got '" + split + "'");
    if (!seen.insert(e.path).second) parse_error(lineno, "duplicate path " + e.path);
    m.entries.push_back(std::move(e));
  }
  if (!header) throw Error(ErrorCode::ParseError, "manifest has no header line");

  bool live = false;
  bool spoof = false;
  for (const auto& e : m.entries) {
    if (e.split != Split::Train) continue;
    (e.label == Label::Live ? live : spoof) = true;
  }
  if (!live || !spoof) {
    throw Error(ErrorCode::SingleClassTrainSplit,
                std::string("train split has no ") + (!live ? "live" : "spoof") + " samples");
  }
  return m;
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::ParseError, "cannot read manifest " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  DatasetManifest m = parse_manifest(ss.str(), path.parent_path());
  for (const auto& e : m.entries) {
    std::error_code ec;
    if (!std::filesystem::is_regular_file(m.resolve(e), ec)) {
      throw Error(ErrorCode::MissingFile, "listed image not found: " + m.resolve(e).string());
    }
  }
  return m;
}

void write_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  if (!m.sensor.empty()) out << "# sensor: " << m.sensor << '\n';
  out << "# version: " << m.version << '\n';
  out << "path,label,material,split\n";
  for (const auto& e : m.entries) {
    out << e.path << ',' << label_name(e.label) << ',' << e.material << ',' << split_name(e.split) << '\n';
  }
  if (!out) throw Error(ErrorCode::IoError, "short write to " + path.string());
}

}  // namespace dyffpad::data
