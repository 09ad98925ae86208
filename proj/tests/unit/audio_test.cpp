// Audio front end: WAV ingestion, resampling, MFCC, CMVN.

#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include "doctest.h"
#include "polyphone/audio.hpp"
#include "polyphone/features.hpp"

using namespace polyphone;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  fs::path dir = fs::temp_directory_path() / "polyphone_audio_test";
  fs::create_directories(dir);
  return dir;
}

std::vector<double> sinusoid(double freq, double seconds, int rate, double amp = 0.5) {
  std::vector<double> out(static_cast<size_t>(std::lround(seconds * rate)));
  for (size_t i = 0; i < out.size(); i++)
    out[i] = amp * std::sin(2.0 * std::numbers::pi * freq * static_cast<double>(i) / rate);
  return out;
}

// Stereo 16-bit writer, test-local (the library only writes mono).
void write_wav_stereo16(const fs::path &path, const std::vector<double> &left,
                        const std::vector<double> &right, int rate) {
  std::ofstream out(path, std::ios::binary);
  auto u32 = [&](uint32_t v) { out.write(reinterpret_cast<const char *>(&v), 4); };
  auto u16 = [&](uint16_t v) { out.write(reinterpret_cast<const char *>(&v), 2); };
  const uint32_t data_bytes = static_cast<uint32_t>(left.size() * 4);
  out.write("RIFF", 4);
  u32(36 + data_bytes);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  u32(16);
  u16(1);
  u16(2);
  u32(rate);
  u32(rate * 4);
  u16(4);
  u16(16);
  out.write("data", 4);
  u32(data_bytes);
  for (size_t i = 0; i < left.size(); i++) {
    u16(static_cast<uint16_t>(static_cast<int16_t>(std::lround(left[i] * 32767.0))));
    u16(static_cast<uint16_t>(static_cast<int16_t>(std::lround(right[i] * 32767.0))));
  }
}

// Independent reference resampler: direct sinc reconstruction over the full
// input, no windowing shortcuts.
std::vector<double> sinc_resample_reference(const std::vector<double> &in, int in_rate,
                                            int out_rate) {
  const double ratio = static_cast<double>(out_rate) / in_rate;
  std::vector<double> out(static_cast<size_t>(std::llround(in.size() * ratio)));
  for (size_t j = 0; j < out.size(); j++) {
    const double t = static_cast<double>(j) / ratio;
    double acc = 0.0;
    for (size_t i = 0; i < in.size(); i++) {
      const double u = t - static_cast<double>(i);
      acc += in[i] * (std::abs(u) < 1e-12
                          ? 1.0
                          : std::sin(std::numbers::pi * u) / (std::numbers::pi * u));
    }
    out[j] = acc;
  }
  return out;
}

double spectral_peak_hz(const std::vector<double> &samples, int rate) {
  size_t nfft = dsp::next_pow2(samples.size());
  std::vector<std::complex<double>> buf(nfft);
  for (size_t i = 0; i < samples.size(); i++) buf[i] = samples[i];
  dsp::fft(buf);
  size_t best = 0;
  double best_mag = -1.0;
  for (size_t b = 1; b < nfft / 2; b++) {
    if (std::abs(buf[b]) > best_mag) {
      best_mag = std::abs(buf[b]);
      best = b;
    }
  }
  return static_cast<double>(best) * rate / static_cast<double>(nfft);
}

}  // namespace

TEST_CASE("load_audio: 16 kHz mono round trip is the identity") {
  auto dir = temp_dir();
  auto samples = sinusoid(440.0, 0.5, 16000);
  write_wav_mono16(dir / "mono.wav", samples, 16000);
  AudioBuffer buf = load_audio(dir / "mono.wav");
  REQUIRE(buf.sample_rate == 16000);
  REQUIRE(buf.samples.size() == samples.size());
  for (size_t i = 0; i < samples.size(); i += 997)
    CHECK(buf.samples[i] == doctest::Approx(samples[i]).epsilon(1e-3));
}

TEST_CASE("load_audio: opposite-phase stereo averages to silence") {
  auto dir = temp_dir();
  auto x = sinusoid(700.0, 0.2, 16000);
  std::vector<double> neg(x.size());
  for (size_t i = 0; i < x.size(); i++) neg[i] = -x[i];
  write_wav_stereo16(dir / "stereo.wav", x, neg, 16000);
  AudioBuffer buf = load_audio(dir / "stereo.wav");
  for (double s : buf.samples) CHECK(std::abs(s) < 1e-4);  // rounding of +/- halves
}

TEST_CASE("load_audio: 8 kHz input is resampled to 16 kHz") {
  auto dir = temp_dir();
  auto samples = sinusoid(440.0, 1.0, 8000);
  write_wav_mono16(dir / "slow.wav", samples, 8000);
  AudioBuffer buf = load_audio(dir / "slow.wav");
  REQUIRE(buf.sample_rate == 16000);
  REQUIRE(buf.samples.size() == 16000);

  // spectral peak stays at 440 Hz within one bin
  const double bin_hz = 16000.0 / static_cast<double>(dsp::next_pow2(buf.samples.size()));
  CHECK(std::abs(spectral_peak_hz(buf.samples, 16000) - 440.0) <= bin_hz);

  // waveform matches the independent sinc reference away from the edges
  auto ref = sinc_resample_reference(samples, 8000, 16000);
  double max_err = 0.0;
  for (size_t i = 2000; i + 2000 < ref.size(); i++)
    max_err = std::max(max_err, std::abs(ref[i] - buf.samples[i]));
  CHECK(max_err < 0.02);
}

TEST_CASE("load_audio error paths") {
  auto dir = temp_dir();
  CHECK_THROWS_AS(load_audio(dir / "missing.wav"), DataError);

  {  // unsupported encoding (ADPCM format code 2)
    std::ofstream out(dir / "adpcm.wav", std::ios::binary);
    auto u32 = [&](uint32_t v) { out.write(reinterpret_cast<const char *>(&v), 4); };
    auto u16 = [&](uint16_t v) { out.write(reinterpret_cast<const char *>(&v), 2); };
    out.write("RIFF", 4);
    u32(36 + 4);
    out.write("WAVE", 4);
    out.write("fmt ", 4);
    u32(16);
    u16(2);  // ADPCM
    u16(1);
    u32(16000);
    u32(32000);
    u16(2);
    u16(16);
    out.write("data", 4);
    u32(4);
    u32(0);
  }
  CHECK_THROWS_AS(load_audio(dir / "adpcm.wav"), DataError);

  write_wav_mono16(dir / "empty.wav", {}, 16000);
  CHECK_THROWS_AS(load_audio(dir / "empty.wav"), DataError);
}

TEST_CASE("load_audio reads float32 and 8-bit PCM") {
  auto dir = temp_dir();
  {  // float32
    std::ofstream out(dir / "f32.wav", std::ios::binary);
    auto u32 = [&](uint32_t v) { out.write(reinterpret_cast<const char *>(&v), 4); };
    auto u16 = [&](uint16_t v) { out.write(reinterpret_cast<const char *>(&v), 2); };
    std::vector<float> data = {0.0f, 0.25f, -0.5f, 1.0f};
    out.write("RIFF", 4);
    u32(36 + 16);
    out.write("WAVE", 4);
    out.write("fmt ", 4);
    u32(16);
    u16(3);
    u16(1);
    u32(16000);
    u32(64000);
    u16(4);
    u16(32);
    out.write("data", 4);
    u32(16);
    out.write(reinterpret_cast<const char *>(data.data()), 16);
  }
  AudioBuffer f32 = load_audio(dir / "f32.wav");
  REQUIRE(f32.samples.size() == 4);
  CHECK(f32.samples[1] == doctest::Approx(0.25));
  CHECK(f32.samples[2] == doctest::Approx(-0.5));

  {  // 8-bit unsigned
    std::ofstream out(dir / "u8.wav", std::ios::binary);
    auto u32 = [&](uint32_t v) { out.write(reinterpret_cast<const char *>(&v), 4); };
    auto u16 = [&](uint16_t v) { out.write(reinterpret_cast<const char *>(&v), 2); };
    unsigned char data[4] = {128, 255, 0, 192};
    out.write("RIFF", 4);
    u32(36 + 4);
    out.write("WAVE", 4);
    out.write("fmt ", 4);
    u32(16);
    u16(1);
    u16(1);
    u32(16000);
    u32(16000);
    u16(1);
    u16(8);
    out.write("data", 4);
    u32(4);
    out.write(reinterpret_cast<const char *>(data), 4);
  }
  AudioBuffer u8 = load_audio(dir / "u8.wav");
  REQUIRE(u8.samples.size() == 4);
  CHECK(u8.samples[0] == doctest::Approx(0.0));
  CHECK(u8.samples[1] == doctest::Approx(127.0 / 128.0));
  CHECK(u8.samples[2] == doctest::Approx(-1.0));
}

TEST_CASE("extract_mfcc: frame count and determinism") {
  FeatureConfig config;
  AudioBuffer one_second{sinusoid(1000.0, 1.0, 16000), 16000};
  FeatureMatrix f = extract_mfcc(one_second, config);
  CHECK(f.num_frames() == 98);  // floor((16000-400)/160)+1
  CHECK(f.dim() == 40);
  for (const auto &fr : f.frames)
    for (double v : fr) CHECK(std::isfinite(v));

  FeatureMatrix again = extract_mfcc(one_second, config);
  REQUIRE(again.num_frames() == f.num_frames());
  for (size_t t = 0; t < f.num_frames(); t++)
    for (int d = 0; d < f.dim(); d++) CHECK(f.frames[t][d] == again.frames[t][d]);

  SUBCASE("frame count formula holds across sizes") {
    for (size_t n : {400u, 401u, 559u, 560u, 561u, 4000u, 12345u}) {
      AudioBuffer buf{std::vector<double>(n, 0.01), 16000};
      CHECK(extract_mfcc(buf, config).num_frames() == (n - 400) / 160 + 1);
    }
  }

  SUBCASE("frame timing") {
    CHECK(f.frame_time(0) == doctest::Approx(0.0));
    CHECK(f.frame_time(7) == doctest::Approx(0.07));
    CHECK(f.frame_hop == doctest::Approx(0.010));
    CHECK(f.frame_length == doctest::Approx(0.025));
  }
}

TEST_CASE("extract_mfcc: constant input gives identical frames with dither off") {
  FeatureConfig config;
  AudioBuffer silence{std::vector<double>(8000, 0.0), 16000};
  FeatureMatrix f = extract_mfcc(silence, config);
  for (size_t t = 1; t < f.num_frames(); t++)
    for (int d = 0; d < f.dim(); d++) CHECK(f.frames[t][d] == f.frames[0][d]);
}

TEST_CASE("extract_mfcc: rejects audio shorter than one window") {
  FeatureConfig config;
  AudioBuffer tiny{std::vector<double>(399, 0.1), 16000};
  CHECK_THROWS_AS(extract_mfcc(tiny, config), DataError);
}

TEST_CASE("extract_mfcc separates tones more than halves of the same tone") {
  FeatureConfig config;
  AudioBuffer tone1k{sinusoid(1000.0, 1.0, 16000), 16000};
  AudioBuffer tone4k{sinusoid(4000.0, 1.0, 16000), 16000};
  FeatureMatrix f1 = extract_mfcc(tone1k, config);
  FeatureMatrix f4 = extract_mfcc(tone4k, config);

  auto mean_vec = [](const FeatureMatrix &f, size_t begin, size_t end) {
    std::vector<double> m(f.dim(), 0.0);
    for (size_t t = begin; t < end; t++)
      for (int d = 0; d < f.dim(); d++) m[d] += f.frames[t][d];
    for (double &v : m) v /= static_cast<double>(end - begin);
    return m;
  };
  auto dist = [](const std::vector<double> &a, const std::vector<double> &b) {
    double acc = 0.0;
    for (size_t d = 0; d < a.size(); d++) acc += (a[d] - b[d]) * (a[d] - b[d]);
    return std::sqrt(acc);
  };

  const size_t n = f1.num_frames();
  const double cross = dist(mean_vec(f1, 0, n), mean_vec(f4, 0, n));
  const double within = dist(mean_vec(f1, 0, n / 2), mean_vec(f1, n / 2, n));
  CHECK(cross > within);
}

TEST_CASE("apply_cmvn post-conditions") {
  std::mt19937 rng(42);
  std::normal_distribution<double> gauss(1.5, 3.0);
  FeatureMatrix f;
  f.frames.assign(100, std::vector<double>(40));
  for (auto &fr : f.frames)
    for (double &v : fr) v = gauss(rng);

  FeatureMatrix norm = apply_cmvn(f);
  // independent recomputation of mean and variance
  for (int d = 0; d < 40; d++) {
    double mean = 0.0, var = 0.0;
    for (const auto &fr : norm.frames) mean += fr[d];
    mean /= 100.0;
    for (const auto &fr : norm.frames) var += (fr[d] - mean) * (fr[d] - mean);
    var /= 100.0;
    CHECK(std::abs(mean) < 1e-6);
    CHECK(std::abs(var - 1.0) < 1e-4);
  }

  SUBCASE("idempotence") {
    FeatureMatrix twice = apply_cmvn(norm);
    for (size_t t = 0; t < norm.num_frames(); t++)
      for (int d = 0; d < 40; d++)
        CHECK(std::abs(twice.frames[t][d] - norm.frames[t][d]) < 1e-6);
  }

  SUBCASE("constant dimension maps to zero") {
    for (auto &fr : f.frames) fr[7] = 3.25;
    FeatureMatrix n2 = apply_cmvn(f);
    for (const auto &fr : n2.frames) CHECK(fr[7] == 0.0);
  }

  SUBCASE("fewer than two frames is an error") {
    FeatureMatrix one;
    one.frames.assign(1, std::vector<double>(40, 0.0));
    CHECK_THROWS_AS(apply_cmvn(one), DataError);
  }
}
