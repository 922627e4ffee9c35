#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "vkg/types.hpp"

namespace vkg {

/// Row-major 8-bit image with 1 (gray) or 3 (RGB) interleaved channels.
class ImageBuffer {
 public:
  ImageBuffer() = default;
  /// Throws Error("invalid-image") unless channels is 1 or 3, both
  /// dimensions are positive and `pixels.size() == width*height*channels`.
  ImageBuffer(int width, int height, int channels, std::vector<std::uint8_t> pixels,
              FrameRef source = {});

  static ImageBuffer filled(int width, int height, int channels, std::uint8_t value,
                            FrameRef source = {});

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  bool empty() const { return pixels_.empty(); }
  std::span<const std::uint8_t> pixels() const { return pixels_; }
  std::span<std::uint8_t> mutable_pixels() { return pixels_; }
  const FrameRef& source() const { return source_; }
  void set_source(FrameRef ref) { source_ = std::move(ref); }

  std::uint8_t at(int x, int y, int c = 0) const {
    return pixels_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }
  std::uint8_t& at(int x, int y, int c = 0) {
    return pixels_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }

 private:
  int width_ = 0;
  int height_ = 0;
  int channels_ = 1;
  std::vector<std::uint8_t> pixels_;
  FrameRef source_;
};

/// Luma conversion: round(0.299R + 0.587G + 0.114B), clamped to [0,255].
std::uint8_t luma(std::uint8_t r, std::uint8_t g, std::uint8_t b);

/// Gray copy of `image` (identity for 1-channel input).
ImageBuffer to_gray(const ImageBuffer& image);

/// Pixel rectangle, half-open: columns [x0,x1), rows [y0,y1).
struct PixelRect {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;
  int area() const { return (x1 - x0) * (y1 - y0); }
  friend bool operator==(const PixelRect&, const PixelRect&) = default;
};

ImageBuffer crop(const ImageBuffer& image, const PixelRect& rect);

/// Binary PGM (P5) / PPM (P6) codec, maxval 255.
ImageBuffer read_pnm(const std::filesystem::path& path);
ImageBuffer decode_pnm(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_pnm(const ImageBuffer& image);
void write_pnm(const std::filesystem::path& path, const ImageBuffer& image);

/// Content hash (hex SHA-256) over dimensions, channels and pixels.
std::string content_hash(const ImageBuffer& image);

/// Frame pixels that are either resident or decoded from disk on demand.
/// Copies share the resident buffer; equality of windows never looks here.
class FrameImage {
 public:
  FrameImage() = default;
  explicit FrameImage(ImageBuffer image)
      : resident_(std::make_shared<const ImageBuffer>(std::move(image))) {}
  explicit FrameImage(std::filesystem::path path) : path_(std::move(path)) {}

  bool has_pixels() const { return resident_ != nullptr || !path_.empty(); }
  const std::filesystem::path& path() const { return path_; }

  /// Resident buffer, or a fresh decode of `path()`.
  std::shared_ptr<const ImageBuffer> load() const;

 private:
  std::shared_ptr<const ImageBuffer> resident_;
  std::filesystem::path path_;
};

}  // namespace vkg
