#include <zlib.h>

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <json.hpp>

#include "dyffpad/error.hpp"
#include "dyffpad/fusion.hpp"

namespace dyffpad::fusion {

namespace {

using nlohmann::json;

constexpr std::array<char, 8> kMagic{'D', 'Y', 'F', 'F', 'P', 'A', 'D', '\0'};
constexpr std::size_t kPrefixBytes = kMagic.size() + 8;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint32_t crc_of(const unsigned char* data, std::size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks.
  while (n > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = crc32(crc, data, chunk);
    data += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

std::string read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open weight file " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes;
}

[[noreturn]] void corrupt(const std::filesystem::path& path, const std::string& why) {
  throw Error(ErrorCode::CorruptFile, path.string() + ": " + why);
}

struct Parsed {
  WeightHeader header;
  const unsigned char* payload = nullptr;
  std::size_t payload_floats = 0;
};

Parsed parse(const std::string& bytes, const std::filesystem::path& path) {
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < kPrefixBytes + 4) corrupt(path, "file too short");
  if (std::memcmp(p, kMagic.data(), kMagic.size()) != 0) corrupt(path, "bad magic");
  Parsed out;
  out.header.version = get_u32(p + 8);
  if (out.header.version != kWeightFormatVersion) {
    corrupt(path, "unsupported format version " + std::to_string(out.header.version));
  }
  const std::size_t header_len = get_u32(p + 12);
  if (bytes.size() < kPrefixBytes + header_len + 4) corrupt(path, "truncated header");

  json h;
  try {
    h = json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(kPrefixBytes),
                    bytes.begin() + static_cast<std::ptrdiff_t>(kPrefixBytes + header_len));
    out.header.config = DyffpadConfig::from_json(h.at("config").dump());
    out.header.echo = h.value("echo", std::string{});
    out.payload_floats = h.at("payload_floats").get<std::size_t>();
    for (const auto& e : h.at("entries")) {
      out.header.entries.push_back(
          {e.at("name").get<std::string>(), e.at("shape").get<nn::Shape>(), e.at("offset").get<std::size_t>()});
    }
  } catch (const json::exception& e) {
    corrupt(path, std::string("bad header: ") + e.what());
  } catch (const Error& e) {
    corrupt(path, std::string("bad header: ") + e.what());
  }

  std::size_t expect = 0;
  for (const auto& e : out.header.entries) {
    if (e.offset != expect) corrupt(path, "manifest offsets are not contiguous at " + e.name);
    expect += nn::shape_size(e.shape);
  }
  if (expect != out.payload_floats) corrupt(path, "manifest does not cover the payload");
  const std::size_t body = bytes.size() - kPrefixBytes - header_len - 4;
  if (body != out.payload_floats * 4) {
    corrupt(path, "payload is " + std::to_string(body) + " bytes, manifest needs " +
                      std::to_string(out.payload_floats * 4));
  }
  out.payload = p + kPrefixBytes + header_len;
  const std::uint32_t stored = get_u32(out.payload + body);
  if (stored != crc_of(out.payload, body)) throw Error(ErrorCode::ChecksumMismatch, path.string());
  return out;
}

}  // namespace

void save_weights(DyffpadModel& model, const std::filesystem::path& path, const std::string& echo) {
  json entries = json::array();
  std::size_t offset = 0;
  auto state = model.state();
  for (const auto& s : state) {
    entries.push_back({{"name", s.name}, {"shape", s.tensor->shape()}, {"offset", offset}});
    offset += s.tensor->size();
  }
  json h;
  h["config"] = json::parse(model.config().to_json());
  h["echo"] = echo;
  h["entries"] = entries;
  h["payload_floats"] = offset;
  const std::string header = h.dump();

  std::string bytes(kMagic.begin(), kMagic.end());
  put_u32(bytes, kWeightFormatVersion);
  put_u32(bytes, static_cast<std::uint32_t>(header.size()));
  bytes += header;
  const std::size_t payload_start = bytes.size();
  bytes.reserve(payload_start + offset * 4 + 4);
  for (const auto& s : state) {
    for (float v : s.tensor->values()) put_u32(bytes, std::bit_cast<std::uint32_t>(v));
  }
  put_u32(bytes, crc_of(reinterpret_cast<const unsigned char*>(bytes.data()) + payload_start,
                        bytes.size() - payload_start));

  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::IoError, "short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot rename " + tmp.string() + ": " + ec.message());
}

WeightHeader read_weight_header(const std::filesystem::path& path) {
  return parse(read_all(path), path).header;
}

DyffpadModel load_weights(const std::filesystem::path& path, const DyffpadConfig& cfg) {
  const std::string bytes = read_all(path);
  const Parsed parsed = parse(bytes, path);
  if (!(parsed.header.config == cfg)) {
    throw Error(ErrorCode::ConfigMismatch,
                path.string() + " holds " + parsed.header.config.to_json() + ", expected " + cfg.to_json());
  }
  DyffpadModel model(cfg, 0);
  auto state = model.state();
  if (state.size() != parsed.header.entries.size()) {
    throw Error(ErrorCode::ConfigMismatch, path.string() + ": tensor count differs from the model");
  }
  for (std::size_t i = 0; i < state.size(); ++i) {
    const auto& e = parsed.header.entries[i];
    if (e.name != state[i].name || e.shape != state[i].tensor->shape()) {
      throw Error(ErrorCode::ConfigMismatch, path.string() + ": entry " + e.name + " " + nn::shape_string(e.shape) +
                                                 " does not match " + state[i].name + " " +
                                                 nn::shape_string(state[i].tensor->shape()));
    }
    auto dst = state[i].tensor->values();
    const unsigned char* src = parsed.payload + e.offset * 4;
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] = std::bit_cast<float>(get_u32(src + 4 * k));
  }
  return model;
}

DyffpadModel load_weights(const std::filesystem::path& path) {
  return load_weights(path, read_weight_header(path).config);
}

}  // namespace dyffpad::fusion
