#pragma once

#include <compare>
#include <cstdint>
#include <string>

namespace vkg {

/// Identity of one decoded frame. `frame_index` is global to the source
/// video, so a frame keeps its identity across windows and graph merges.
struct FrameRef {
  std::string video_id;
  std::uint32_t window_index = 0;
  std::uint64_t frame_index = 0;
  double timestamp = 0.0;

  friend bool operator==(const FrameRef&, const FrameRef&) = default;
  friend auto operator<=>(const FrameRef&, const FrameRef&) = default;
};

/// True when both refs name the same frame of the same window.
inline bool same_frame(const FrameRef& a, const FrameRef& b) {
  return a.video_id == b.video_id && a.window_index == b.window_index &&
         a.frame_index == b.frame_index;
}

/// Axis-aligned box in normalized image coordinates, [x0,y0,x1,y1] in [0,1].
struct Box {
  double x0 = 0.0;
  double y0 = 0.0;
  double x1 = 1.0;
  double y1 = 1.0;

  friend bool operator==(const Box&, const Box&) = default;
  friend auto operator<=>(const Box&, const Box&) = default;

  static Box whole() { return Box{0.0, 0.0, 1.0, 1.0}; }

  bool valid() const {
    return x0 >= 0.0 && y0 >= 0.0 && x1 <= 1.0 && y1 <= 1.0 && x0 < x1 && y0 < y1;
  }
};

}  // namespace vkg
