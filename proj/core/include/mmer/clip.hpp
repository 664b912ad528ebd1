#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mmer::corpus {

// Raw RGB clip as stored in the packed "PCLP" container. Frames are
// frame-major, each row-major RGB u8.
struct VideoClip {
  int frame_count = 0;
  int height = 0;
  int width = 0;
  int frame_rate_hz = 30;  // not stored in the container
  std::vector<uint8_t> rgb;

  size_t frame_bytes() const { return static_cast<size_t>(height) * width * 3; }

  uint8_t at(int f, int y, int x, int c) const {
    return rgb[((static_cast<size_t>(f) * height + y) * width + x) * 3 + c];
  }
  uint8_t& at(int f, int y, int x, int c) {
    return rgb[((static_cast<size_t>(f) * height + y) * width + x) * 3 + c];
  }
};

// "PCLP": magic, u32 version=1, u32 frame_count, u32 height, u32 width,
// then frames as row-major RGB u8; little-endian integers.
void pclp_write(const std::string& path, const VideoClip& clip);
VideoClip pclp_read(const std::string& path);

}  // namespace mmer::corpus
