#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>

#include "seqvessel/data.hpp"

namespace seqvessel {

namespace {

// Reads one ASCII header token, skipping whitespace and '#' comments.
std::string header_token(const std::string& buf, std::size_t& pos, const std::string& path) {
  while (pos < buf.size()) {
    const auto ch = static_cast<unsigned char>(buf[pos]);
    if (std::isspace(ch)) {
      ++pos;
    } else if (ch == '#') {
      while (pos < buf.size() && buf[pos] != '\n') ++pos;
    } else {
      break;
    }
  }
  const std::size_t start = pos;
  while (pos < buf.size() && !std::isspace(static_cast<unsigned char>(buf[pos]))) ++pos;
  if (start == pos) throw FormatError(path + ": truncated PGM header");
  return buf.substr(start, pos - start);
}

std::size_t header_number(const std::string& buf, std::size_t& pos, const std::string& path, const char* what) {
  const std::string tok = header_token(buf, pos, path);
  std::size_t value = 0;
  for (char ch : tok) {
    if (!std::isdigit(static_cast<unsigned char>(ch))) {
      throw FormatError(path + ": malformed PGM " + what + " '" + tok + "'");
    }
    value = value * 10 + static_cast<std::size_t>(ch - '0');
    if (value > (1u << 20)) throw FormatError(path + ": PGM " + what + " too large");
  }
  return value;
}

}  // namespace

GrayImage read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  const std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string name = path.string();
  std::size_t pos = 0;
  if (header_token(buf, pos, name) != "P5") throw FormatError(name + ": not a binary PGM (magic must be P5)");
  GrayImage img;
  img.width = header_number(buf, pos, name, "width");
  img.height = header_number(buf, pos, name, "height");
  const std::size_t maxval = header_number(buf, pos, name, "maxval");
  if (img.width == 0 || img.height == 0) throw FormatError(name + ": PGM dimensions must be positive");
  if (maxval != 255) throw FormatError(name + ": PGM maxval must be 255, got " + std::to_string(maxval));
  if (pos >= buf.size() || !std::isspace(static_cast<unsigned char>(buf[pos]))) {
    throw FormatError(name + ": missing whitespace after PGM header");
  }
  ++pos;
  const std::size_t n = img.width * img.height;
  if (buf.size() - pos < n) {
    throw FormatError(name + ": truncated PGM data (" + std::to_string(buf.size() - pos) + " of " +
                      std::to_string(n) + " bytes)");
  }
  img.pixels.assign(buf.begin() + static_cast<std::ptrdiff_t>(pos),
                    buf.begin() + static_cast<std::ptrdiff_t>(pos + n));
  return img;
}

void write_pgm(const std::filesystem::path& path, const GrayImage& image) {
  if (image.pixels.size() != image.width * image.height) throw FormatError("image buffer does not match size");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out << "P5\n" << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()), static_cast<std::streamsize>(image.pixels.size()));
  if (!out) throw FormatError("write failed for " + path.string());
}

Tensor image_to_tensor(const GrayImage& image) {
  Tensor t(TensorShape{image.height, image.width});
  for (std::size_t i = 0; i < image.pixels.size(); ++i) t[i] = static_cast<float>(image.pixels[i]) / 255.0f;
  return t;
}

GrayImage tensor_to_image(const Tensor& t) {
  if (t.rank() != 2) throw ShapeError("image tensor must be [H,W], got " + t.shape().str());
  GrayImage img{t.dim(1), t.dim(0), std::vector<std::uint8_t>(t.numel())};
  for (std::size_t i = 0; i < t.numel(); ++i) {
    const double v = std::clamp(static_cast<double>(t[i]), 0.0, 1.0);
    img.pixels[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
  }
  return img;
}

Tensor image_to_mask(const GrayImage& image) {
  Tensor t(TensorShape{image.height, image.width});
  for (std::size_t i = 0; i < image.pixels.size(); ++i) t[i] = image.pixels[i] >= 128 ? 1.0f : 0.0f;
  return t;
}

GrayImage mask_to_image(const Tensor& mask) {
  if (mask.rank() != 2) throw ShapeError("mask tensor must be [H,W], got " + mask.shape().str());
  GrayImage img{mask.dim(1), mask.dim(0), std::vector<std::uint8_t>(mask.numel())};
  for (std::size_t i = 0; i < mask.numel(); ++i) img.pixels[i] = mask[i] >= 0.5f ? 255 : 0;
  return img;
}

}  // namespace seqvessel
