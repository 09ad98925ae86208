// polyphone/audio.hpp

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

#ifndef POLYPHONE_AUDIO_HPP
#define POLYPHONE_AUDIO_HPP

#include <cmath>
#include <filesystem>
#include <numbers>
#include <vector>

#include "polyphone/common.hpp"
#include "polyphone/wav.hpp"

namespace polyphone {

constexpr int kCanonicalSampleRate = 16000;

// Mono audio in [-1, 1] at a recorded sample rate.  Everything downstream
// assumes the canonical 16 kHz rate; load_audio() resamples on ingestion.
struct AudioBuffer {
  std::vector<double> samples;
  int sample_rate = kCanonicalSampleRate;

  double duration() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

// Windowed-sinc resampler.  Kernel: sinc lowpassed to the narrower Nyquist
// with a Hann taper, 32 zero crossings per side, zero padding outside the
// input.  Adequate for song-length material at desk scale.
inline std::vector<double> resample(const std::vector<double> &in, int in_rate, int out_rate) {
  if (in_rate <= 0 || out_rate <= 0) throw Error("resample: rates must be positive");
  if (in_rate == out_rate) return in;
  if (in.empty()) return {};

  const double ratio = static_cast<double>(out_rate) / in_rate;
  const size_t out_len = static_cast<size_t>(std::llround(static_cast<double>(in.size()) * ratio));
  // Cutoff relative to the input rate; 0.95 leaves transition headroom.
  const double cutoff = 0.95 * std::min(1.0, ratio);
  const int half_width = static_cast<int>(std::ceil(32.0 / cutoff));

  std::vector<double> out(out_len, 0.0);
  const double pi = std::numbers::pi;
  for (size_t j = 0; j < out_len; j++) {
    const double center = static_cast<double>(j) / ratio;
    const int lo = std::max(0, static_cast<int>(std::floor(center)) - half_width + 1);
    const int hi = std::min(static_cast<int>(in.size()) - 1,
                            static_cast<int>(std::floor(center)) + half_width);
    double acc = 0.0;
    for (int i = lo; i <= hi; i++) {
      const double u = center - i;
      double h;
      if (std::abs(u) < 1e-12) {
        h = cutoff;
      } else {
        h = cutoff * std::sin(pi * cutoff * u) / (pi * cutoff * u);
      }
      const double taper = 0.5 + 0.5 * std::cos(pi * u / half_width);
      acc += in[i] * h * taper;
    }
    out[j] = acc;
  }
  return out;
}

// Ingest a PCM WAV: average channels to mono, resample to 16 kHz if needed.
inline AudioBuffer load_audio(const std::filesystem::path &path) {
  WavData wav = read_wav(path);
  size_t n = wav.channels[0].size();
  std::vector<double> mono(n, 0.0);
  for (const auto &ch : wav.channels)
    for (size_t i = 0; i < n; i++) mono[i] += ch[i];
  const double inv = 1.0 / static_cast<double>(wav.channels.size());
  for (double &s : mono) s *= inv;

  AudioBuffer buf;
  buf.sample_rate = kCanonicalSampleRate;
  if (wav.sample_rate == kCanonicalSampleRate) {
    buf.samples = std::move(mono);
  } else {
    buf.samples = resample(mono, wav.sample_rate, kCanonicalSampleRate);
  }
  if (buf.samples.empty()) throw DataError("zero-length audio after ingestion: " + path.string());
  return buf;
}

}  // namespace polyphone

#endif  // POLYPHONE_AUDIO_HPP
