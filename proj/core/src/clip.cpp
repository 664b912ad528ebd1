#include "mmer/clip.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

static_assert(std::endian::native == std::endian::little,
              "PCLP serialization assumes a little-endian host");

namespace mmer::corpus {

void pclp_write(const std::string& path, const VideoClip& clip) {
  if (clip.rgb.size() != clip.frame_bytes() * clip.frame_count)
    throw std::invalid_argument("pclp_write: payload size does not match dimensions");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("pclp_write: cannot open " + path);
  const uint32_t header[4] = {1u, static_cast<uint32_t>(clip.frame_count),
                              static_cast<uint32_t>(clip.height),
                              static_cast<uint32_t>(clip.width)};
  out.write("PCLP", 4);
  out.write(reinterpret_cast<const char*>(header), sizeof(header));
  out.write(reinterpret_cast<const char*>(clip.rgb.data()),
            static_cast<std::streamsize>(clip.rgb.size()));
  if (!out) throw std::runtime_error("pclp_write: write failed: " + path);
}

VideoClip pclp_read(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("pclp_read: cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "PCLP", 4) != 0)
    throw std::runtime_error("pclp_read: bad magic in " + path);
  uint32_t header[4];
  in.read(reinterpret_cast<char*>(header), sizeof(header));
  if (!in || header[0] != 1) throw std::runtime_error("pclp_read: unsupported version in " + path);

  VideoClip clip;
  clip.frame_count = static_cast<int>(header[1]);
  clip.height = static_cast<int>(header[2]);
  clip.width = static_cast<int>(header[3]);
  clip.rgb.resize(clip.frame_bytes() * clip.frame_count);
  in.read(reinterpret_cast<char*>(clip.rgb.data()),
          static_cast<std::streamsize>(clip.rgb.size()));
  if (!in) throw std::runtime_error("pclp_read: truncated file " + path);
  return clip;
}

}  // namespace mmer::corpus
