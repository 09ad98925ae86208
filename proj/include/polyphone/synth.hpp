// polyphone/synth.hpp

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

#ifndef POLYPHONE_SYNTH_HPP
#define POLYPHONE_SYNTH_HPP

#include <cmath>
#include <filesystem>
#include <map>
#include <numbers>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "polyphone/audio.hpp"
#include "polyphone/common.hpp"
#include "polyphone/corpus.hpp"
#include "polyphone/lexicon.hpp"
#include "polyphone/wav.hpp"

namespace polyphone {

// Deterministic song generator.  Every phone renders as a fixed bundle of
// sinusoids, every genre has its own interlude spectrum, and the exact word
// and phone boundaries are emitted alongside the audio.  This is the ground
// truth the alignment and transcription tests measure against.
struct SynthSpec {
  int sample_rate = kCanonicalSampleRate;

  // base phone -> sinusoid bundle (Hz); bundles must be pairwise distinct
  std::map<std::string, std::vector<double>> phone_signatures;
  std::vector<std::pair<std::string, Pronunciation>> words;
  // genre -> interlude sinusoid bundle (Hz); pairwise distinct
  std::map<GenreBroadclass, std::vector<double>> interlude_signatures;

  int songs_per_genre = 5;
  int lines_per_song = 4;
  int words_per_line = 4;

  double phone_dur_min = 0.09, phone_dur_max = 0.18;      // seconds
  double interlude_dur_min = 0.8, interlude_dur_max = 1.6; // seconds

  double vocal_amp = 0.42;          // total amplitude of a phone bundle
  double interlude_amp = 0.10;      // total amplitude of an interlude bundle
  double accompaniment_amp = 0.04;  // genre bundle mixed under the vocals
  double noise_amp = 0.012;         // white noise floor everywhere

  Lexicon lexicon() const {
    Lexicon lex;
    for (const auto &[w, pron] : words) lex.add_entry(w, pron);
    return lex;
  }

  void validate() const {
    if (sample_rate <= 0) throw DataError("synth spec: bad sample rate");
    if (phone_signatures.empty()) throw DataError("synth spec: no phone signatures");
    if (words.empty()) throw DataError("synth spec: no words");
    if (interlude_signatures.size() < 1) throw DataError("synth spec: no interlude signatures");
    if (songs_per_genre < 1 || lines_per_song < 1 || words_per_line < 1)
      throw DataError("synth spec: counts must be positive");
    if (phone_dur_min <= 0 || phone_dur_max < phone_dur_min)
      throw DataError("synth spec: bad phone duration range");

    std::set<std::vector<double>> seen;
    for (const auto &[ph, freqs] : phone_signatures) {
      if (freqs.empty()) throw DataError("synth spec: empty signature for phone " + ph);
      for (double f : freqs)
        if (f <= 0 || f >= sample_rate / 2.0)
          throw DataError(strprintf("synth spec: frequency %g out of range for phone %s", f,
                                    ph.c_str()));
      if (!seen.insert(freqs).second)
        throw DataError("synth spec: duplicate phone signature for " + ph);
    }
    for (const auto &[g, freqs] : interlude_signatures) {
      if (freqs.empty())
        throw DataError(std::string("synth spec: empty interlude signature for ") + genre_name(g));
      if (!seen.insert(freqs).second)
        throw DataError(std::string("synth spec: interlude signature for ") + genre_name(g) +
                        " duplicates another signature");
    }
    for (const auto &[w, pron] : words) {
      if (pron.empty()) throw DataError("synth spec: empty pronunciation for word " + w);
      for (const auto &ph : pron)
        if (!phone_signatures.count(ph))
          throw DataError("synth spec: word " + w + " uses phone " + ph + " with no signature");
    }
  }
};

// A 15-phone, 10-word spec with programmatically spaced bundles; spacing
// keeps every phone pair separable in the MFCC space and every interlude
// spectrum away from the phones.
inline SynthSpec default_synth_spec() {
  SynthSpec spec;
  const std::vector<std::string> phones = {"AA", "AH", "EH", "IY", "OW", "UW", "D", "G",
                                           "K",  "L",  "M",  "N",  "R",  "S",  "T"};
  for (size_t k = 0; k < phones.size(); k++) {
    const double f0 = 330.0 + 46.0 * static_cast<double>(k);
    const double f1 = 1050.0 + 74.0 * static_cast<double>(k);
    const double f2 = 2350.0 + 92.0 * static_cast<double>(k);
    spec.phone_signatures[phones[k]] = {f0, f1, f2};
  }
  spec.words = {
      {"MOON", {"M", "UW", "N"}},   {"STAR", {"S", "T", "AA", "R"}},
      {"GOLD", {"G", "OW", "L", "D"}}, {"DREAM", {"D", "R", "IY", "M"}},
      {"ECHO", {"EH", "K", "OW"}},  {"DUSK", {"D", "AH", "S", "K"}},
      {"STONE", {"S", "T", "OW", "N"}}, {"RUN", {"R", "AH", "N"}},
      {"MIST", {"M", "IY", "S", "T"}}, {"SOUL", {"S", "OW", "L"}},
  };
  spec.interlude_signatures[GenreBroadclass::pop] = {250.0, 610.0, 975.0};
  spec.interlude_signatures[GenreBroadclass::hiphop] = {1480.0, 1810.0, 2140.0};
  spec.interlude_signatures[GenreBroadclass::metal] = {3120.0, 3560.0, 3930.0};
  return spec;
}

// Everything known about one generated song.
struct SynthSong {
  std::string song_id;
  GenreBroadclass genre = GenreBroadclass::pop;
  std::vector<double> samples;
  double duration = 0.0;
  SongAnnotation annotation;                  // line-level ground truth
  std::vector<WordBoundary> word_boundaries;  // word-level ground truth
  std::vector<WordBoundary> phone_boundaries; // phone-level ground truth (word = phone symbol)
};

namespace synth_detail {

// Structured lyrics sampler: a fixed sparse Markov chain over the word list
// so that N-gram models have something to learn.  The chain depends only on
// the word count, not on the seed.
inline int next_word_index(int current, int vocab, Prng &rng) {
  const double r = rng.next_double();
  if (r < 0.55) return (current + 2) % vocab;
  if (r < 0.85) return (current + 5) % vocab;
  return static_cast<int>(rng.next_below(static_cast<uint64_t>(vocab)));
}

inline void add_bundle(std::vector<double> &samples, size_t begin, size_t end, int sample_rate,
                       const std::vector<double> &freqs, double total_amp, bool local_phase) {
  if (freqs.empty()) return;
  const double amp = total_amp / static_cast<double>(freqs.size());
  const double two_pi = 2.0 * std::numbers::pi;
  for (size_t n = begin; n < end && n < samples.size(); n++) {
    const double t = static_cast<double>(local_phase ? n - begin : n) / sample_rate;
    double v = 0.0;
    for (double f : freqs) v += std::cos(two_pi * f * t);
    samples[n] += amp * v;
  }
}

}  // namespace synth_detail

// Generates one song: interlude, line, interlude, ..., line, interlude.
// Words within a line are contiguous; every boundary lands on an exact
// sample index.  Deterministic given (spec, genre, seed).
inline SynthSong generate_song(const SynthSpec &spec, GenreBroadclass genre,
                               const std::string &song_id, uint64_t seed) {
  spec.validate();
  Prng rng(seed);
  const int sr = spec.sample_rate;

  struct Piece {
    bool vocal;
    int word_index;            // -1 for interlude
    std::vector<std::string> phones;
    std::vector<size_t> phone_samples;
    size_t total = 0;
  };

  std::vector<Piece> pieces;
  auto interlude_len = [&]() {
    return static_cast<size_t>(
        std::lround(rng.uniform(spec.interlude_dur_min, spec.interlude_dur_max) * sr));
  };

  pieces.push_back({false, -1, {}, {}, interlude_len()});
  const int vocab = static_cast<int>(spec.words.size());
  int word = static_cast<int>(rng.next_below(static_cast<uint64_t>(vocab)));
  for (int li = 0; li < spec.lines_per_song; li++) {
    for (int wi = 0; wi < spec.words_per_line; wi++) {
      Piece p;
      p.vocal = true;
      p.word_index = word;
      p.phones = spec.words[word].second;
      for (const auto &ph : p.phones) {
        (void)ph;
        size_t len = static_cast<size_t>(
            std::lround(rng.uniform(spec.phone_dur_min, spec.phone_dur_max) * sr));
        p.phone_samples.push_back(len);
        p.total += len;
      }
      pieces.push_back(std::move(p));
      word = synth_detail::next_word_index(word, vocab, rng);
    }
    pieces.push_back({false, -1, {}, {}, interlude_len()});
  }

  size_t total_samples = 0;
  for (const auto &p : pieces) total_samples += p.total;

  SynthSong song;
  song.song_id = song_id;
  song.genre = genre;
  song.samples.assign(total_samples, 0.0);
  song.duration = static_cast<double>(total_samples) / sr;
  song.annotation.song_id = song_id;
  song.annotation.genre = genre;
  song.annotation.duration = song.duration;

  const auto &interlude_freqs = spec.interlude_signatures.at(genre);
  size_t cursor = 0;
  LineAnnotation current_line;
  bool line_open = false;
  for (const auto &p : pieces) {
    if (!p.vocal) {
      if (line_open) {
        current_line.line_end = static_cast<double>(cursor) / sr;
        song.annotation.lines.push_back(current_line);
        line_open = false;
      }
      synth_detail::add_bundle(song.samples, cursor, cursor + p.total, sr, interlude_freqs,
                               spec.interlude_amp, /*local_phase=*/true);
      cursor += p.total;
      continue;
    }
    if (!line_open) {
      current_line = LineAnnotation{song_id, static_cast<double>(cursor) / sr, 0.0, {}, genre};
      line_open = true;
    }
    const std::string &word_text = spec.words[p.word_index].first;
    WordBoundary wb{word_text, static_cast<double>(cursor) / sr, 0.0};
    for (size_t k = 0; k < p.phones.size(); k++) {
      const size_t len = p.phone_samples[k];
      synth_detail::add_bundle(song.samples, cursor, cursor + len, sr,
                               spec.phone_signatures.at(p.phones[k]), spec.vocal_amp,
                               /*local_phase=*/true);
      synth_detail::add_bundle(song.samples, cursor, cursor + len, sr, interlude_freqs,
                               spec.accompaniment_amp, /*local_phase=*/true);
      song.phone_boundaries.push_back({p.phones[k], static_cast<double>(cursor) / sr,
                                       static_cast<double>(cursor + len) / sr});
      cursor += len;
    }
    wb.end = static_cast<double>(cursor) / sr;
    song.word_boundaries.push_back(wb);
    current_line.text.push_back(word_text);
  }
  if (line_open) {
    current_line.line_end = static_cast<double>(cursor) / sr;
    song.annotation.lines.push_back(current_line);
  }

  for (double &s : song.samples) s += spec.noise_amp * (rng.next_double() * 2.0 - 1.0);
  return song;
}

// Manifest entry for one song.  The genre field carries whatever tag the
// corpus provides; raw tags resolve to a broadclass through a GenreMap,
// broadclass names pass through directly.
struct ManifestSong {
  std::string song_id;
  std::string genre_raw = "pop";
  std::string wav, lines, words, phones;
  double duration = 0.0;
  std::string dataset = "synth";
};

struct CorpusManifest {
  uint64_t seed = 0;
  std::vector<ManifestSong> songs;
};

inline nlohmann::json manifest_to_json(const CorpusManifest &m) {
  nlohmann::json j;
  j["seed"] = m.seed;
  j["songs"] = nlohmann::json::array();
  for (const auto &s : m.songs) {
    nlohmann::json js;
    js["song_id"] = s.song_id;
    js["genre"] = s.genre_raw;
    js["wav"] = s.wav;
    js["lines"] = s.lines;
    js["words"] = s.words;
    js["phones"] = s.phones;
    js["duration"] = s.duration;
    js["dataset"] = s.dataset;
    j["songs"].push_back(js);
  }
  return j;
}

inline CorpusManifest manifest_from_json(const nlohmann::json &j, const std::string &origin) {
  CorpusManifest m;
  if (!j.is_object() || !j.contains("songs"))
    throw DataError(origin + ": manifest needs a songs array");
  m.seed = j.value("seed", 0ULL);
  for (const auto &js : j["songs"]) {
    ManifestSong s;
    s.song_id = js.at("song_id").get<std::string>();
    s.genre_raw = js.value("genre", "pop");
    s.wav = js.value("wav", "");
    s.lines = js.value("lines", "");
    s.words = js.value("words", "");
    s.phones = js.value("phones", "");
    s.duration = js.value("duration", 0.0);
    s.dataset = js.value("dataset", "default");
    m.songs.push_back(std::move(s));
  }
  return m;
}

inline CorpusManifest load_manifest(const std::filesystem::path &path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception &e) {
    throw DataError(path.string() + ": invalid JSON: " + e.what());
  }
  return manifest_from_json(j, path.string());
}

// Writes a full corpus under out_dir: audio/, lines/, words/, phones/,
// manifest.json, lyrics.txt.  Byte-identical for a given (spec, seed).
inline CorpusManifest synthesize_corpus(const SynthSpec &spec, uint64_t seed,
                                        const std::filesystem::path &out_dir) {
  spec.validate();
  namespace fs = std::filesystem;
  fs::create_directories(out_dir / "audio");
  fs::create_directories(out_dir / "lines");
  fs::create_directories(out_dir / "words");
  fs::create_directories(out_dir / "phones");

  CorpusManifest manifest;
  manifest.seed = seed;
  std::string lyrics_text;

  size_t song_index = 0;
  for (auto genre : kAllGenres) {
    for (int i = 0; i < spec.songs_per_genre; i++, song_index++) {
      const std::string id = strprintf("%s_%03d", genre_name(genre), i);
      SynthSong song = generate_song(spec, genre, id, Prng::derive(seed, song_index));

      const std::string wav_rel = "audio/" + id + ".wav";
      const std::string lines_rel = "lines/" + id + ".json";
      const std::string words_rel = "words/" + id + ".tsv";
      const std::string phones_rel = "phones/" + id + ".tsv";

      write_wav_mono16(out_dir / wav_rel, song.samples, spec.sample_rate);
      write_text_file_atomic(out_dir / lines_rel,
                             song_annotation_to_json(song.annotation).dump(1) + "\n");
      write_text_file_atomic(out_dir / words_rel, serialize_word_tsv(song.word_boundaries));
      write_text_file_atomic(out_dir / phones_rel, serialize_word_tsv(song.phone_boundaries));

      for (const auto &line : song.annotation.lines) {
        std::string text;
        for (size_t k = 0; k < line.text.size(); k++) {
          if (k) text += ' ';
          text += line.text[k];
        }
        lyrics_text += text + "\n";
      }

      manifest.songs.push_back({id, genre_name(genre), wav_rel, lines_rel, words_rel,
                                phones_rel, song.duration, "synth"});
    }
  }

  write_text_file_atomic(out_dir / "lyrics.txt", lyrics_text);
  write_text_file_atomic(out_dir / "manifest.json", manifest_to_json(manifest).dump(1) + "\n");
  return manifest;
}

// Unstructured filler text over a superset vocabulary; the "general"
// counterpart to the lyrics corpus when comparing language models.
inline std::vector<std::vector<std::string>> generate_general_text(const SynthSpec &spec,
                                                                   uint64_t seed, int num_lines) {
  std::vector<std::string> vocab;
  for (const auto &[w, _] : spec.words) vocab.push_back(w);
  for (const char *w : {"THE", "OF", "AND", "TO", "A", "IN", "IS", "IT", "FOR", "ON", "WITH",
                        "AS", "BY", "AT", "FROM"})
    vocab.push_back(w);
  Prng rng(seed);
  std::vector<std::vector<std::string>> lines;
  lines.reserve(num_lines);
  for (int i = 0; i < num_lines; i++) {
    const int len = 3 + static_cast<int>(rng.next_below(5));
    std::vector<std::string> line;
    for (int k = 0; k < len; k++)
      line.push_back(vocab[rng.next_below(vocab.size())]);
    lines.push_back(std::move(line));
  }
  return lines;
}

}  // namespace polyphone

#endif  // POLYPHONE_SYNTH_HPP
