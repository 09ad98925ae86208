// polyphone/features.hpp

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

#ifndef POLYPHONE_FEATURES_HPP
#define POLYPHONE_FEATURES_HPP

#include <cmath>
#include <complex>
#include <map>
#include <numbers>
#include <string>
#include <vector>

#include "polyphone/audio.hpp"
#include "polyphone/common.hpp"

namespace polyphone {

// High-resolution MFCC front end: 40 mel filters, 40 cepstra, 25 ms Hamming
// window, 10 ms hop, pre-emphasis 0.97.  Dither is off by default so the
// extractor is a pure function of its input.
struct FeatureConfig {
  int sample_rate = kCanonicalSampleRate;
  double window_ms = 25.0;
  double hop_ms = 10.0;
  int num_ceps = 40;
  int num_filters = 40;
  double preemphasis = 0.97;
  bool dither = false;
  double dither_amp = 1e-5;
  double low_freq = 20.0;
  double high_freq = 8000.0;

  int window_samples() const {
    return static_cast<int>(std::lround(window_ms * sample_rate / 1000.0));
  }
  int hop_samples() const {
    return static_cast<int>(std::lround(hop_ms * sample_rate / 1000.0));
  }

  // Identifies the feature space a model was trained in; stored in model
  // files and checked before use.
  std::string fingerprint() const {
    return strprintf("mfcc:sr=%d;win=%g;hop=%g;ceps=%d;filt=%d;pre=%g;dith=%d;lo=%g;hi=%g",
                     sample_rate, window_ms, hop_ms, num_ceps, num_filters, preemphasis,
                     dither ? 1 : 0, low_freq, high_freq);
  }

  static FeatureConfig from_config(const std::map<std::string, std::string> &kv) {
    FeatureConfig c;
    auto get = [&](const std::string &key) -> const std::string * {
      auto it = kv.find("features." + key);
      if (it == kv.end()) it = kv.find(key);
      return it == kv.end() ? nullptr : &it->second;
    };
    if (auto v = get("window_ms")) c.window_ms = std::stod(*v);
    if (auto v = get("hop_ms")) c.hop_ms = std::stod(*v);
    if (auto v = get("num_ceps")) c.num_ceps = std::stoi(*v);
    if (auto v = get("num_filters")) c.num_filters = std::stoi(*v);
    if (auto v = get("preemphasis")) c.preemphasis = std::stod(*v);
    if (auto v = get("dither")) c.dither = parse_bool(*v, "features.dither");
    if (auto v = get("low_freq")) c.low_freq = std::stod(*v);
    if (auto v = get("high_freq")) c.high_freq = std::stod(*v);
    if (c.num_ceps < 1 || c.num_filters < c.num_ceps)
      throw DataError("feature config: need 1 <= num_ceps <= num_filters");
    return c;
  }
};

// Per-utterance feature sequence.  Time of frame i = start_offset + i * hop.
struct FeatureMatrix {
  std::vector<std::vector<double>> frames;
  double frame_hop = 0.010;
  double frame_length = 0.025;
  double start_offset = 0.0;

  size_t num_frames() const { return frames.size(); }
  int dim() const { return frames.empty() ? 0 : static_cast<int>(frames[0].size()); }
  double frame_time(size_t i) const { return start_offset + static_cast<double>(i) * frame_hop; }
  // Frame whose start time is nearest to t.
  size_t frame_index(double t) const {
    double i = (t - start_offset) / frame_hop;
    long r = std::lround(i);
    if (r < 0) r = 0;
    return static_cast<size_t>(r);
  }

  FeatureMatrix slice(size_t begin, size_t end) const {
    if (begin > end || end > frames.size()) throw Error("FeatureMatrix::slice: bad range");
    FeatureMatrix out;
    out.frames.assign(frames.begin() + begin, frames.begin() + end);
    out.frame_hop = frame_hop;
    out.frame_length = frame_length;
    out.start_offset = frame_time(begin);
    return out;
  }
};

namespace dsp {

// In-place iterative radix-2 FFT.  n must be a power of two.
inline void fft(std::vector<std::complex<double>> &a) {
  const size_t n = a.size();
  if (n == 0 || (n & (n - 1)) != 0) throw Error("fft: size must be a power of two");
  for (size_t i = 1, j = 0; i < n; i++) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (size_t k = 0; k < len / 2; k++) {
        std::complex<double> u = a[i + k];
        std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

inline size_t next_pow2(size_t n) {
  size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// Triangular mel filterbank over FFT bins [0, nfft/2].
inline std::vector<std::vector<double>> mel_filterbank(int num_filters, size_t nfft,
                                                       int sample_rate, double low_freq,
                                                       double high_freq) {
  if (high_freq > sample_rate / 2.0) high_freq = sample_rate / 2.0;
  const double low_mel = hz_to_mel(low_freq);
  const double high_mel = hz_to_mel(high_freq);
  std::vector<double> centers(num_filters + 2);
  for (int i = 0; i < num_filters + 2; i++)
    centers[i] = mel_to_hz(low_mel + (high_mel - low_mel) * i / (num_filters + 1));

  const size_t nbins = nfft / 2 + 1;
  std::vector<std::vector<double>> bank(num_filters, std::vector<double>(nbins, 0.0));
  for (int f = 0; f < num_filters; f++) {
    const double lo = centers[f], mid = centers[f + 1], hi = centers[f + 2];
    for (size_t b = 0; b < nbins; b++) {
      const double hz = static_cast<double>(b) * sample_rate / static_cast<double>(nfft);
      if (hz > lo && hz < hi) {
        bank[f][b] = hz <= mid ? (hz - lo) / (mid - lo) : (hi - hz) / (hi - mid);
      }
    }
  }
  return bank;
}

// Orthonormal DCT-II matrix (num_ceps x num_filters).
inline std::vector<std::vector<double>> dct_matrix(int num_ceps, int num_filters) {
  std::vector<std::vector<double>> m(num_ceps, std::vector<double>(num_filters));
  const double pi = std::numbers::pi;
  for (int k = 0; k < num_ceps; k++) {
    const double scale = std::sqrt((k == 0 ? 1.0 : 2.0) / num_filters);
    for (int n = 0; n < num_filters; n++)
      m[k][n] = scale * std::cos(pi * k * (2 * n + 1) / (2.0 * num_filters));
  }
  return m;
}

}  // namespace dsp

// MFCC extraction.  One num_ceps-dim vector per frame; frame count is
// floor((num_samples - window) / hop) + 1.  Fails on audio shorter than one
// window.  Bit-identical output for identical input and config (dither, when
// enabled, is seeded from the frame index).
inline FeatureMatrix extract_mfcc(const AudioBuffer &audio, const FeatureConfig &config) {
  if (audio.sample_rate != config.sample_rate)
    throw DataError(strprintf("extract_mfcc: audio rate %d != config rate %d", audio.sample_rate,
                              config.sample_rate));
  const int window = config.window_samples();
  const int hop = config.hop_samples();
  if (window <= 0 || hop <= 0) throw DataError("extract_mfcc: window and hop must be positive");
  const size_t n = audio.samples.size();
  if (n < static_cast<size_t>(window))
    throw DataError(strprintf("extract_mfcc: audio of %zu samples is shorter than one %d-sample window",
                              n, window));

  const size_t num_frames = (n - window) / hop + 1;
  const size_t nfft = dsp::next_pow2(window);
  const auto bank = dsp::mel_filterbank(config.num_filters, nfft, config.sample_rate,
                                        config.low_freq, config.high_freq);
  const auto dct = dsp::dct_matrix(config.num_ceps, config.num_filters);

  std::vector<double> hamming(window);
  for (int i = 0; i < window; i++)
    hamming[i] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * i / (window - 1));

  FeatureMatrix feats;
  feats.frame_hop = hop / static_cast<double>(config.sample_rate);
  feats.frame_length = window / static_cast<double>(config.sample_rate);
  feats.frames.resize(num_frames);

  std::vector<std::complex<double>> buf(nfft);
  std::vector<double> melspec(config.num_filters);
  for (size_t f = 0; f < num_frames; f++) {
    const double *src = audio.samples.data() + f * hop;
    std::vector<double> frame(src, src + window);
    if (config.dither) {
      Prng rng(0x5eedULL ^ (f * 0x9e37ULL));
      for (double &s : frame) s += config.dither_amp * (rng.next_double() * 2.0 - 1.0);
    }
    // pre-emphasis, first sample scaled as if repeated
    for (int i = window - 1; i > 0; i--) frame[i] -= config.preemphasis * frame[i - 1];
    frame[0] *= 1.0 - config.preemphasis;

    for (size_t i = 0; i < nfft; i++)
      buf[i] = i < static_cast<size_t>(window)
                   ? std::complex<double>(frame[i] * hamming[i], 0.0)
                   : std::complex<double>(0.0, 0.0);
    dsp::fft(buf);

    for (int m = 0; m < config.num_filters; m++) {
      double e = 0.0;
      const auto &filt = bank[m];
      for (size_t b = 0; b < filt.size(); b++) {
        if (filt[b] == 0.0) continue;
        e += filt[b] * std::norm(buf[b]);
      }
      melspec[m] = std::log(std::max(e, 1e-12));
    }

    std::vector<double> ceps(config.num_ceps, 0.0);
    for (int k = 0; k < config.num_ceps; k++) {
      double acc = 0.0;
      for (int m = 0; m < config.num_filters; m++) acc += dct[k][m] * melspec[m];
      ceps[k] = acc;
    }
    feats.frames[f] = std::move(ceps);
  }
  return feats;
}

// Per-utterance cepstral mean and variance normalization.  Each dimension is
// mapped to zero mean and unit variance over the utterance; a constant
// dimension maps to all zeros.
inline FeatureMatrix apply_cmvn(const FeatureMatrix &features) {
  const size_t n = features.num_frames();
  if (n < 2) throw DataError("apply_cmvn: need at least 2 frames");
  const int dim = features.dim();

  std::vector<double> mean(dim, 0.0), var(dim, 0.0);
  for (const auto &fr : features.frames)
    for (int d = 0; d < dim; d++) mean[d] += fr[d];
  for (int d = 0; d < dim; d++) mean[d] /= static_cast<double>(n);
  for (const auto &fr : features.frames)
    for (int d = 0; d < dim; d++) {
      const double c = fr[d] - mean[d];
      var[d] += c * c;
    }
  for (int d = 0; d < dim; d++) var[d] /= static_cast<double>(n);

  FeatureMatrix out = features;
  for (auto &fr : out.frames) {
    for (int d = 0; d < dim; d++) {
      if (var[d] < 1e-12) {
        fr[d] = 0.0;
      } else {
        fr[d] = (fr[d] - mean[d]) / std::sqrt(var[d]);
      }
    }
  }
  return out;
}

}  // namespace polyphone

#endif  // POLYPHONE_FEATURES_HPP
