// polyphone/wav.hpp

// Copyright 2026  Polyphone Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef POLYPHONE_WAV_HPP
#define POLYPHONE_WAV_HPP

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "polyphone/common.hpp"

namespace polyphone {

// RIFF/WAVE reader and writer.  Supported sample encodings: PCM 8-bit
// unsigned, PCM 16-bit signed, IEEE float 32-bit.  Anything else (ADPCM,
// a-law, 24-bit, ...) is rejected as unsupported.

struct WavData {
  std::vector<std::vector<double>> channels;  // samples scaled to [-1, 1]
  int sample_rate = 0;
};

namespace wav_detail {

inline uint32_t read_u32(std::istream &in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char *>(b), 4);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

inline uint16_t read_u16(std::istream &in) {
  unsigned char b[2];
  in.read(reinterpret_cast<char *>(b), 2);
  return static_cast<uint16_t>(b[0]) | (static_cast<uint16_t>(b[1]) << 8);
}

inline void write_u32(std::ostream &out, uint32_t v) {
  char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
               static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(b, 4);
}

inline void write_u16(std::ostream &out, uint16_t v) {
  char b[2] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff)};
  out.write(b, 2);
}

}  // namespace wav_detail

inline WavData read_wav(const std::filesystem::path &path) {
  using namespace wav_detail;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("missing or unreadable WAV file: " + path.string());

  char riff[4], wave[4];
  in.read(riff, 4);
  uint32_t riff_size = read_u32(in);
  (void)riff_size;
  in.read(wave, 4);
  if (!in || std::memcmp(riff, "RIFF", 4) != 0 || std::memcmp(wave, "WAVE", 4) != 0)
    throw DataError("not a RIFF/WAVE file: " + path.string());

  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t sample_rate = 0;
  bool have_fmt = false;
  std::vector<char> data;

  while (in) {
    char id[4];
    in.read(id, 4);
    if (!in) break;
    uint32_t size = read_u32(in);
    if (std::memcmp(id, "fmt ", 4) == 0) {
      format = read_u16(in);
      channels = read_u16(in);
      sample_rate = read_u32(in);
      read_u32(in);  // byte rate
      read_u16(in);  // block align
      bits = read_u16(in);
      if (size > 16) in.seekg(size - 16, std::ios::cur);
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      data.resize(size);
      in.read(data.data(), size);
      if (static_cast<uint32_t>(in.gcount()) != size)
        throw DataError("truncated WAV data chunk: " + path.string());
      if (size % 2 == 1) in.seekg(1, std::ios::cur);
    } else {
      in.seekg(size + (size % 2), std::ios::cur);
    }
  }

  if (!have_fmt) throw DataError("WAV file has no fmt chunk: " + path.string());
  if (channels == 0) throw DataError("WAV file declares zero channels: " + path.string());
  if (sample_rate == 0) throw DataError("WAV file declares zero sample rate: " + path.string());

  const bool pcm_int = (format == 1);
  const bool ieee_float = (format == 3);
  if (!pcm_int && !ieee_float)
    throw DataError(strprintf("unsupported WAV encoding %u (want PCM or IEEE float): %s",
                              format, path.string().c_str()));
  if (pcm_int && bits != 8 && bits != 16)
    throw DataError(strprintf("unsupported PCM bit depth %u (want 8 or 16): %s", bits,
                              path.string().c_str()));
  if (ieee_float && bits != 32)
    throw DataError(strprintf("unsupported float bit depth %u (want 32): %s", bits,
                              path.string().c_str()));

  size_t bytes_per_sample = bits / 8;
  size_t total_samples = data.size() / (bytes_per_sample * channels);
  if (total_samples == 0) throw DataError("zero-length audio: " + path.string());

  WavData out;
  out.sample_rate = static_cast<int>(sample_rate);
  out.channels.assign(channels, std::vector<double>(total_samples));
  const unsigned char *p = reinterpret_cast<const unsigned char *>(data.data());
  for (size_t i = 0; i < total_samples; i++) {
    for (int c = 0; c < channels; c++) {
      double v = 0.0;
      if (pcm_int && bits == 16) {
        int16_t s = static_cast<int16_t>(p[0] | (p[1] << 8));
        v = s / 32768.0;
      } else if (pcm_int && bits == 8) {
        v = (static_cast<int>(p[0]) - 128) / 128.0;
      } else {  // float32
        float f;
        std::memcpy(&f, p, 4);
        v = std::clamp(static_cast<double>(f), -1.0, 1.0);
      }
      out.channels[c][i] = v;
      p += bytes_per_sample;
    }
  }
  return out;
}

// Writes mono 16-bit PCM.  Samples are clamped to [-1, 1] and rounded
// deterministically.
inline void write_wav_mono16(const std::filesystem::path &path, const std::vector<double> &samples,
                             int sample_rate) {
  using namespace wav_detail;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write WAV file: " + path.string());

  uint32_t data_bytes = static_cast<uint32_t>(samples.size() * 2);
  out.write("RIFF", 4);
  write_u32(out, 36 + data_bytes);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  write_u32(out, 16);
  write_u16(out, 1);  // PCM
  write_u16(out, 1);  // mono
  write_u32(out, static_cast<uint32_t>(sample_rate));
  write_u32(out, static_cast<uint32_t>(sample_rate * 2));
  write_u16(out, 2);
  write_u16(out, 16);
  out.write("data", 4);
  write_u32(out, data_bytes);
  for (double s : samples) {
    double c = std::clamp(s, -1.0, 1.0);
    int v = static_cast<int>(std::lround(c * 32767.0));
    write_u16(out, static_cast<uint16_t>(static_cast<int16_t>(v)));
  }
  if (!out) throw Error("short write: " + path.string());
}

}  // namespace polyphone

#endif  // POLYPHONE_WAV_HPP
