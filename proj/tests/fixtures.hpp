#pragma once

// Synthetic frame windows shared by unit and acceptance tests.

#include <cmath>
#include <cstdint>
#include <vector>

#include "vkg/image.hpp"
#include "vkg/window.hpp"

namespace vkg::fixtures {

/// 32x32 gray frame: flat `background` with an 8x8 checker patch of
/// amplitude `amplitude` (less amplitude = blurrier, lower Laplacian variance).
inline ImageBuffer scene_frame(std::uint8_t background, int amplitude) {
  auto img = ImageBuffer::filled(32, 32, 1, background);
  for (int y = 4; y < 12; ++y) {
    for (int x = 4; x < 12; ++x) {
      const int sign = (x + y) % 2 == 0 ? 1 : -1;
      img.at(x, y) = static_cast<std::uint8_t>(background + sign * amplitude);
    }
  }
  return img;
}

/// Same pixel values as scene_frame() (identical histogram) but the patch is
/// split into two flat halves, so it is much less sharp.
inline ImageBuffer smoothed_scene_frame(std::uint8_t background, int amplitude) {
  auto img = ImageBuffer::filled(32, 32, 1, background);
  for (int y = 4; y < 12; ++y) {
    for (int x = 4; x < 12; ++x) {
      const int sign = x < 8 ? 1 : -1;
      img.at(x, y) = static_cast<std::uint8_t>(background + sign * amplitude);
    }
  }
  return img;
}

struct SceneWindow {
  DataWindow window;
  std::vector<int> scene_of_frame;
  std::vector<std::vector<std::uint8_t>> gray;  // raw pixels per frame for oracles
};

/// `per_scene` consecutive frames for each of the scene backgrounds; amplitude
/// follows a per-scene permutation of a decreasing ramp so the sharpest
/// frame sits mid-scene.
inline SceneWindow scene_window(const std::string& video, std::uint32_t window_index,
                                const std::vector<std::uint8_t>& backgrounds, int per_scene) {
  SceneWindow out;
  std::vector<WindowFrame> frames;
  std::uint64_t index = 0;
  for (std::size_t s = 0; s < backgrounds.size(); ++s) {
    for (int i = 0; i < per_scene; ++i) {
      const int j = (i * 7 + 3 * static_cast<int>(s) + 3) % per_scene;
      const int amplitude = static_cast<int>(std::lround(40.0 * (1.0 - j / 25.0)));
      auto img = scene_frame(backgrounds[s], amplitude);
      out.gray.emplace_back(img.pixels().begin(), img.pixels().end());
      out.scene_of_frame.push_back(static_cast<int>(s));
      const FrameRef ref{video, window_index, index, static_cast<double>(index)};
      img.set_source(ref);
      frames.push_back(WindowFrame{ref, FrameImage(std::move(img))});
      ++index;
    }
  }
  out.window = new_window(video, window_index, std::move(frames), TranscriptSegment{});
  return out;
}

}  // namespace vkg::fixtures
