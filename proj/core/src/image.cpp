#include "dyffpad/image.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <string>

#include "dyffpad/error.hpp"

#ifdef DYFFPAD_HAVE_PNG
#include <png.h>
#endif

namespace dyffpad {

GrayImage::GrayImage(int width, int height, std::uint8_t fill)
    : GrayImage(width, height,
                std::vector<std::uint8_t>(static_cast<std::size_t>(std::max(width, 0)) *
                                              static_cast<std::size_t>(std::max(height, 0)),
                                          fill)) {}

GrayImage::GrayImage(int width, int height, std::vector<std::uint8_t> data)
    : width_(width), height_(height), data_(std::move(data)) {
  if (width < 1 || height < 1) {
    throw Error(ErrorCode::ImageTooSmall, "image dimensions must be positive");
  }
  if (data_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
    throw Error(ErrorCode::ShapeMismatch, "pixel buffer length differs from width*height");
  }
}

GrayImage crop(const GrayImage& img, const RoiBox& box) {
  if (box.x0 < 0 || box.y0 < 0 || box.x1 > img.width() || box.y1 > img.height() ||
      box.x0 >= box.x1 || box.y0 >= box.y1) {
    throw Error(ErrorCode::ShapeMismatch, "crop box outside image");
  }
  GrayImage out(box.width(), box.height());
  for (int y = 0; y < box.height(); ++y) {
    for (int x = 0; x < box.width(); ++x) out.at(x, y) = img.at(box.x0 + x, box.y0 + y);
  }
  return out;
}

std::vector<float> resize_bilinear_unit(const GrayImage& img, int side) {
  if (side < 1) throw Error(ErrorCode::InvalidConfig, "resize side must be positive");
  std::vector<float> out(static_cast<std::size_t>(side) * side);
  const double sx = static_cast<double>(img.width()) / side;
  const double sy = static_cast<double>(img.height()) / side;
  for (int v = 0; v < side; ++v) {
    const double fy = std::clamp((v + 0.5) * sy - 0.5, 0.0, img.height() - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, img.height() - 1);
    const double wy = fy - y0;
    for (int u = 0; u < side; ++u) {
      const double fx = std::clamp((u + 0.5) * sx - 0.5, 0.0, img.width() - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, img.width() - 1);
      const double wx = fx - x0;
      const double top = (1 - wx) * img.at(x0, y0) + wx * img.at(x1, y0);
      const double bot = (1 - wx) * img.at(x0, y1) + wx * img.at(x1, y1);
      out[static_cast<std::size_t>(v) * side + u] =
          static_cast<float>(((1 - wy) * top + wy * bot) / 255.0);
    }
  }
  return out;
}

namespace {

// Reads the next whitespace-delimited header token, skipping '#' comments.
std::string next_token(std::istream& in) {
  std::string tok;
  char c = 0;
  while (in.get(c)) {
    if (c == '#') {
      std::string discard;
      std::getline(in, discard);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(c);
  }
  return tok;
}

int parse_header_int(std::istream& in, const std::filesystem::path& path) {
  const std::string tok = next_token(in);
  try {
    std::size_t used = 0;
    const int v = std::stoi(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::CorruptFile, "bad PGM header in " + path.string());
  }
}

}  // namespace

GrayImage read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingFile, path.string());
  if (next_token(in) != "P5") throw Error(ErrorCode::CorruptFile, "not a P5 PGM: " + path.string());
  const int w = parse_header_int(in, path);
  const int h = parse_header_int(in, path);
  const int maxval = parse_header_int(in, path);
  if (w < 1 || h < 1 || maxval < 1 || maxval > 255) {
    throw Error(ErrorCode::CorruptFile, "unsupported PGM geometry in " + path.string());
  }
  std::vector<std::uint8_t> data(static_cast<std::size_t>(w) * h);
  in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (in.gcount() != static_cast<std::streamsize>(data.size())) {
    throw Error(ErrorCode::CorruptFile, "truncated PGM payload in " + path.string());
  }
  if (maxval != 255) {
    for (auto& p : data) p = static_cast<std::uint8_t>(std::lround(std::min<int>(p, maxval) * 255.0 / maxval));
  }
  return GrayImage(w, h, std::move(data));
}

void write_pgm(const GrayImage& img, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot open for writing: " + path.string());
  out << "P5\n" << img.width() << ' ' << img.height() << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.data().data()),
            static_cast<std::streamsize>(img.data().size()));
  if (!out) throw Error(ErrorCode::IoError, "write failed: " + path.string());
}

#ifdef DYFFPAD_HAVE_PNG
namespace {

GrayImage read_png(const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw Error(ErrorCode::CorruptFile, "PNG decode failed: " + path.string());
  }
  image.format = PNG_FORMAT_GRAY;
  std::vector<std::uint8_t> data(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, data.data(), 0, nullptr)) {
    png_image_free(&image);
    throw Error(ErrorCode::CorruptFile, "PNG decode failed: " + path.string());
  }
  return GrayImage(static_cast<int>(image.width), static_cast<int>(image.height), std::move(data));
}

}  // namespace
#endif

GrayImage read_image(const std::filesystem::path& path) {
  std::array<unsigned char, 8> sig{};
  {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::MissingFile, path.string());
    in.read(reinterpret_cast<char*>(sig.data()), sig.size());
  }
  constexpr std::array<unsigned char, 8> png_sig{0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (sig == png_sig) {
#ifdef DYFFPAD_HAVE_PNG
    return read_png(path);
#else
    throw Error(ErrorCode::CorruptFile, "PNG support not compiled in: " + path.string());
#endif
  }
  return read_pgm(path);
}

}  // namespace dyffpad
