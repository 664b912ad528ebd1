#include "mmer/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace mmer {

namespace {

uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 | uint32_t(b[3]) << 24;
}

uint16_t read_u16(std::istream& in) {
  unsigned char b[2];
  in.read(reinterpret_cast<char*>(b), 2);
  return uint16_t(b[0]) | uint16_t(b[1]) << 8;
}

void write_u32(std::ostream& out, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<char*>(b), 4);
}

void write_u16(std::ostream& out, uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
  out.write(reinterpret_cast<char*>(b), 2);
}

double clamp_unit(double x) { return std::min(1.0, std::max(-1.0, x)); }

}  // namespace

MultiChannelAudio wav_read(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("wav_read: cannot open " + path);

  char tag[4];
  in.read(tag, 4);
  if (!in || std::memcmp(tag, "RIFF", 4) != 0)
    throw std::runtime_error("wav_read: not a RIFF file: " + path);
  read_u32(in);  // riff size
  in.read(tag, 4);
  if (!in || std::memcmp(tag, "WAVE", 4) != 0)
    throw std::runtime_error("wav_read: not a WAVE file: " + path);

  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t sample_rate = 0;
  std::vector<char> payload;
  bool have_fmt = false, have_data = false;

  while (in && !(have_fmt && have_data)) {
    in.read(tag, 4);
    if (!in) break;
    uint32_t size = read_u32(in);
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      format = read_u16(in);
      channels = read_u16(in);
      sample_rate = read_u32(in);
      read_u32(in);  // byte rate
      read_u16(in);  // block align
      bits = read_u16(in);
      if (size > 16) in.seekg(size - 16, std::ios::cur);
      have_fmt = true;
    } else if (std::memcmp(tag, "data", 4) == 0) {
      payload.resize(size);
      in.read(payload.data(), size);
      have_data = true;
    } else {
      in.seekg(size + (size & 1), std::ios::cur);
    }
  }
  if (!have_fmt || !have_data)
    throw std::runtime_error("wav_read: missing fmt or data chunk: " + path);
  if (channels == 0) throw std::runtime_error("wav_read: zero channels: " + path);

  const size_t bytes_per_sample = bits / 8;
  if (bytes_per_sample == 0 || payload.size() % (bytes_per_sample * channels) != 0)
    throw std::runtime_error("wav_read: malformed data chunk: " + path);
  const size_t frames = payload.size() / (bytes_per_sample * channels);

  MultiChannelAudio audio;
  audio.sample_rate_hz = static_cast<int>(sample_rate);
  audio.channels.assign(channels, std::vector<double>(frames));

  const unsigned char* p = reinterpret_cast<const unsigned char*>(payload.data());
  if (format == 1 && bits == 16) {
    for (size_t f = 0; f < frames; ++f)
      for (size_t c = 0; c < channels; ++c) {
        int16_t v = static_cast<int16_t>(uint16_t(p[0]) | uint16_t(p[1]) << 8);
        audio.channels[c][f] = v / 32768.0;
        p += 2;
      }
  } else if (format == 1 && bits == 24) {
    for (size_t f = 0; f < frames; ++f)
      for (size_t c = 0; c < channels; ++c) {
        int32_t v = int32_t(uint32_t(p[0]) << 8 | uint32_t(p[1]) << 16 | uint32_t(p[2]) << 24) >> 8;
        audio.channels[c][f] = v / 8388608.0;
        p += 3;
      }
  } else if (format == 3 && bits == 32) {
    for (size_t f = 0; f < frames; ++f)
      for (size_t c = 0; c < channels; ++c) {
        float v;
        std::memcpy(&v, p, 4);
        audio.channels[c][f] = v;
        p += 4;
      }
  } else {
    throw std::runtime_error("wav_read: unsupported encoding (format " + std::to_string(format) +
                             ", " + std::to_string(bits) + " bit): " + path);
  }
  return audio;
}

void wav_write(const std::string& path, const MultiChannelAudio& audio, WavEncoding encoding) {
  audio.validate();
  const size_t channels = audio.channel_count();
  const size_t frames = audio.frame_count();

  uint16_t format = 1, bits = 16;
  switch (encoding) {
    case WavEncoding::pcm16: format = 1; bits = 16; break;
    case WavEncoding::pcm24: format = 1; bits = 24; break;
    case WavEncoding::float32: format = 3; bits = 32; break;
  }
  const uint32_t bytes_per_sample = bits / 8;
  const uint32_t block_align = static_cast<uint32_t>(channels) * bytes_per_sample;
  const uint32_t data_size = static_cast<uint32_t>(frames) * block_align;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("wav_write: cannot open " + path);

  out.write("RIFF", 4);
  write_u32(out, 36 + data_size);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  write_u32(out, 16);
  write_u16(out, format);
  write_u16(out, static_cast<uint16_t>(channels));
  write_u32(out, static_cast<uint32_t>(audio.sample_rate_hz));
  write_u32(out, static_cast<uint32_t>(audio.sample_rate_hz) * block_align);
  write_u16(out, static_cast<uint16_t>(block_align));
  write_u16(out, bits);
  out.write("data", 4);
  write_u32(out, data_size);

  for (size_t f = 0; f < frames; ++f) {
    for (size_t c = 0; c < channels; ++c) {
      const double x = audio.channels[c][f];
      switch (encoding) {
        case WavEncoding::pcm16: {
          int32_t v = static_cast<int32_t>(std::lrint(clamp_unit(x) * 32768.0));
          v = std::min(v, 32767);
          write_u16(out, static_cast<uint16_t>(static_cast<int16_t>(v)));
          break;
        }
        case WavEncoding::pcm24: {
          int32_t v = static_cast<int32_t>(std::lrint(clamp_unit(x) * 8388608.0));
          v = std::min(v, 8388607);
          unsigned char b[3] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v >> 16)};
          out.write(reinterpret_cast<char*>(b), 3);
          break;
        }
        case WavEncoding::float32: {
          float v = static_cast<float>(x);
          uint32_t u;
          std::memcpy(&u, &v, 4);
          write_u32(out, u);
          break;
        }
      }
    }
  }
  if (!out) throw std::runtime_error("wav_write: write failed: " + path);
}

}  // namespace mmer
