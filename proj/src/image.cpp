#include "vkg/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

#include "vkg/error.hpp"
#include "vkg/hash.hpp"

namespace vkg {

ImageBuffer::ImageBuffer(int width, int height, int channels, std::vector<std::uint8_t> pixels,
                         FrameRef source)
    : width_(width), height_(height), channels_(channels), pixels_(std::move(pixels)),
      source_(std::move(source)) {
  if (channels != 1 && channels != 3) {
    throw Error("invalid-image", "channels must be 1 or 3, got " + std::to_string(channels));
  }
  if (width <= 0 || height <= 0) throw Error("zero-area-image", "image has zero area");
  if (pixels_.size() != static_cast<std::size_t>(width) * height * channels) {
    throw Error("invalid-image", "pixel count does not match width*height*channels");
  }
}

ImageBuffer ImageBuffer::filled(int width, int height, int channels, std::uint8_t value,
                                FrameRef source) {
  return ImageBuffer(width, height, channels,
                     std::vector<std::uint8_t>(static_cast<std::size_t>(std::max(width, 0)) *
                                                   std::max(height, 0) * channels,
                                               value),
                     std::move(source));
}

std::uint8_t luma(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  const double y = 0.299 * r + 0.587 * g + 0.114 * b;
  return static_cast<std::uint8_t>(std::clamp<long>(std::lround(y), 0, 255));
}

ImageBuffer to_gray(const ImageBuffer& image) {
  if (image.channels() == 1) return image;
  std::vector<std::uint8_t> gray(static_cast<std::size_t>(image.width()) * image.height());
  const auto px = image.pixels();
  for (std::size_t i = 0; i < gray.size(); ++i) {
    gray[i] = luma(px[3 * i], px[3 * i + 1], px[3 * i + 2]);
  }
  return ImageBuffer(image.width(), image.height(), 1, std::move(gray), image.source());
}

ImageBuffer crop(const ImageBuffer& image, const PixelRect& rect) {
  if (rect.x0 < 0 || rect.y0 < 0 || rect.x1 > image.width() || rect.y1 > image.height() ||
      rect.x0 >= rect.x1 || rect.y0 >= rect.y1) {
    throw Error("invalid-crop", "crop rectangle outside image bounds");
  }
  const int w = rect.x1 - rect.x0;
  const int h = rect.y1 - rect.y0;
  const int c = image.channels();
  std::vector<std::uint8_t> out(static_cast<std::size_t>(w) * h * c);
  const auto px = image.pixels();
  for (int y = 0; y < h; ++y) {
    const auto* row = px.data() + (static_cast<std::size_t>(y + rect.y0) * image.width() + rect.x0) * c;
    std::copy(row, row + static_cast<std::size_t>(w) * c, out.data() + static_cast<std::size_t>(y) * w * c);
  }
  return ImageBuffer(w, h, c, std::move(out), image.source());
}

namespace {

// Reads the next whitespace-delimited header token, skipping '#' comments.
std::string next_token(std::span<const std::uint8_t> bytes, std::size_t& pos) {
  while (pos < bytes.size()) {
    if (bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else if (std::isspace(bytes[pos])) {
      ++pos;
    } else {
      break;
    }
  }
  std::string token;
  while (pos < bytes.size() && !std::isspace(bytes[pos])) token.push_back(static_cast<char>(bytes[pos++]));
  return token;
}

}  // namespace

ImageBuffer decode_pnm(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 0;
  const std::string magic = next_token(bytes, pos);
  int channels = 0;
  if (magic == "P5") {
    channels = 1;
  } else if (magic == "P6") {
    channels = 3;
  } else {
    throw Error("decode-error", "unsupported image format '" + magic + "'");
  }
  int width = 0;
  int height = 0;
  int maxval = 0;
  try {
    width = std::stoi(next_token(bytes, pos));
    height = std::stoi(next_token(bytes, pos));
    maxval = std::stoi(next_token(bytes, pos));
  } catch (const std::exception&) {
    throw Error("decode-error", "malformed PNM header");
  }
  if (maxval != 255) throw Error("decode-error", "only 8-bit PNM is supported");
  ++pos;  // single whitespace byte after maxval
  const std::size_t need = static_cast<std::size_t>(width) * height * channels;
  if (width <= 0 || height <= 0 || pos + need > bytes.size()) {
    throw Error("decode-error", "truncated PNM payload");
  }
  return ImageBuffer(width, height, channels,
                     std::vector<std::uint8_t>(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                                               bytes.begin() + static_cast<std::ptrdiff_t>(pos + need)));
}

ImageBuffer read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("io-error", "cannot open image", path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_pnm(bytes);
  } catch (const Error& e) {
    throw Error(e.code(), e.what(), path.string());
  }
}

std::vector<std::uint8_t> encode_pnm(const ImageBuffer& image) {
  std::ostringstream header;
  header << (image.channels() == 1 ? "P5" : "P6") << '\n'
         << image.width() << ' ' << image.height() << "\n255\n";
  const std::string h = header.str();
  std::vector<std::uint8_t> out(h.begin(), h.end());
  out.insert(out.end(), image.pixels().begin(), image.pixels().end());
  return out;
}

void write_pnm(const std::filesystem::path& path, const ImageBuffer& image) {
  const auto bytes = encode_pnm(image);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("io-error", "cannot write image", path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::string content_hash(const ImageBuffer& image) {
  std::vector<std::uint8_t> buf;
  buf.reserve(image.pixels().size() + 16);
  const std::string head = std::to_string(image.width()) + "x" + std::to_string(image.height()) +
                           "x" + std::to_string(image.channels()) + ":";
  buf.insert(buf.end(), head.begin(), head.end());
  buf.insert(buf.end(), image.pixels().begin(), image.pixels().end());
  return sha256_hex(buf);
}

std::shared_ptr<const ImageBuffer> FrameImage::load() const {
  if (resident_) return resident_;
  if (path_.empty()) throw Error("no-pixels", "frame has no image data");
  return std::make_shared<const ImageBuffer>(read_pnm(path_));
}

}  // namespace vkg
