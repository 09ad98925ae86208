// polyphone/corpus.hpp

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

#ifndef POLYPHONE_CORPUS_HPP
#define POLYPHONE_CORPUS_HPP

#include <algorithm>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "polyphone/common.hpp"
#include "polyphone/genre.hpp"

namespace polyphone {

// One lyrics-transcribed line with its time span inside a song.
struct LineAnnotation {
  std::string song_id;
  double line_start = 0.0;
  double line_end = 0.0;
  std::vector<std::string> text;  // normalized words
  GenreBroadclass genre = GenreBroadclass::pop;
};

// Line-level annotations for a whole song plus the song duration.
struct SongAnnotation {
  std::string song_id;
  GenreBroadclass genre = GenreBroadclass::pop;
  double duration = 0.0;
  std::vector<LineAnnotation> lines;  // sorted by start, non-overlapping
};

// Reference word boundaries used by evaluation.
struct WordBoundary {
  std::string word;
  double start = 0.0;
  double end = 0.0;
};

struct WordBoundaryAnnotation {
  std::string song_id;
  GenreBroadclass genre = GenreBroadclass::pop;
  std::vector<WordBoundary> words;
};

// Non-vocal span used for silence-model training.
struct SilenceSegment {
  std::string song_id;
  double start = 0.0;
  double end = 0.0;
  GenreBroadclass genre = GenreBroadclass::pop;

  double duration() const { return end - start; }
};

struct SilenceOptions {
  double min_length = 0.1;  // shorter gaps are dropped
  double max_length = 10.0; // kept silence adjacent to line boundaries; <= 0 disables clipping
};

// Result of silence extraction.  `segments` feed silence-model training;
// `dropped` records sub-minimum gaps and clipped interlude interiors so
// that lines + segments + dropped tile [0, duration] exactly.
struct SilenceExtraction {
  std::vector<SilenceSegment> segments;
  std::vector<std::pair<double, double>> dropped;
};

// ---------------------------------------------------------------------------
// Line-annotation JSON
// ---------------------------------------------------------------------------
//
// Schema (one song per file):
// {
//   "song_id": "song_0001",
//   "genre": "pop" | "hiphop" | "metal",
//   "duration": 17.52,
//   "lines": [ {"start": 1.20, "end": 4.85, "text": "SOME WORDS"}, ... ]
// }

inline SongAnnotation song_annotation_from_json(const nlohmann::json &j, const std::string &origin) {
  auto fail = [&origin](const std::string &msg) -> void {
    throw DataError(origin + ": " + msg);
  };
  if (!j.is_object()) fail("top level must be an object");
  for (const char *key : {"song_id", "genre", "duration", "lines"})
    if (!j.contains(key)) fail(std::string("missing field '") + key + "'");

  SongAnnotation song;
  if (!j["song_id"].is_string()) fail("song_id must be a string");
  song.song_id = j["song_id"].get<std::string>();
  if (song.song_id.empty()) fail("song_id must be non-empty");
  song.genre = parse_genre(j["genre"].get<std::string>());
  if (!j["duration"].is_number()) fail("duration must be a number");
  song.duration = j["duration"].get<double>();
  if (song.duration <= 0) fail("duration must be positive");
  if (!j["lines"].is_array()) fail("lines must be an array");

  for (const auto &jl : j["lines"]) {
    LineAnnotation line;
    line.song_id = song.song_id;
    line.genre = song.genre;
    if (!jl.contains("start") || !jl.contains("end") || !jl.contains("text"))
      fail("line needs start, end, text");
    line.line_start = jl["start"].get<double>();
    line.line_end = jl["end"].get<double>();
    line.text = normalize_words(jl["text"].get<std::string>());
    if (line.text.empty()) fail(strprintf("line at %.3f has empty text", line.line_start));
    if (line.line_start < 0) fail(strprintf("line start %.3f < 0", line.line_start));
    if (line.line_end <= line.line_start)
      fail(strprintf("line end %.3f <= start %.3f", line.line_end, line.line_start));
    if (line.line_end > song.duration + 1e-9)
      fail(strprintf("line end %.3f exceeds song duration %.3f", line.line_end, song.duration));
    song.lines.push_back(std::move(line));
  }

  std::sort(song.lines.begin(), song.lines.end(),
            [](const LineAnnotation &a, const LineAnnotation &b) {
              return a.line_start < b.line_start;
            });
  for (size_t i = 1; i < song.lines.size(); i++) {
    if (song.lines[i].line_start < song.lines[i - 1].line_end - 1e-9)
      fail(strprintf("lines overlap: [%.3f, %.3f] and [%.3f, %.3f]",
                     song.lines[i - 1].line_start, song.lines[i - 1].line_end,
                     song.lines[i].line_start, song.lines[i].line_end));
  }
  return song;
}

inline nlohmann::json song_annotation_to_json(const SongAnnotation &song) {
  nlohmann::json j;
  j["song_id"] = song.song_id;
  j["genre"] = genre_name(song.genre);
  j["duration"] = song.duration;
  j["lines"] = nlohmann::json::array();
  for (const auto &line : song.lines) {
    nlohmann::json jl;
    jl["start"] = line.line_start;
    jl["end"] = line.line_end;
    std::string text;
    for (size_t i = 0; i < line.text.size(); i++) {
      if (i) text += ' ';
      text += line.text[i];
    }
    jl["text"] = text;
    j["lines"].push_back(jl);
  }
  return j;
}

inline SongAnnotation load_song_annotation(const std::filesystem::path &path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception &e) {
    throw DataError(path.string() + ": invalid JSON: " + e.what());
  }
  return song_annotation_from_json(j, path.string());
}

inline std::vector<LineAnnotation> load_line_annotations(const std::filesystem::path &path) {
  return load_song_annotation(path).lines;
}

// ---------------------------------------------------------------------------
// Word-boundary TSV: "start<TAB>end<TAB>word", one file per song.
// ---------------------------------------------------------------------------

inline std::vector<WordBoundary> parse_word_tsv(const std::string &text, const std::string &origin) {
  std::vector<WordBoundary> words;
  std::istringstream iss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(iss, line)) {
    lineno++;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty() || trim(line).front() == '#') continue;
    auto cols = split_char(line, '\t');
    if (cols.size() < 3)
      throw DataError(strprintf("%s:%d: expected start<TAB>end<TAB>word", origin.c_str(), lineno));
    WordBoundary w;
    try {
      w.start = std::stod(cols[0]);
      w.end = std::stod(cols[1]);
    } catch (const std::exception &) {
      throw DataError(strprintf("%s:%d: bad number", origin.c_str(), lineno));
    }
    w.word = to_upper(trim(cols[2]));
    if (w.word.empty()) throw DataError(strprintf("%s:%d: empty word", origin.c_str(), lineno));
    if (w.end <= w.start)
      throw DataError(strprintf("%s:%d: end %.3f <= start %.3f", origin.c_str(), lineno, w.end,
                                w.start));
    if (!words.empty() && w.start <= words.back().start)
      throw DataError(strprintf("%s:%d: word starts must be strictly increasing", origin.c_str(),
                                lineno));
    words.push_back(std::move(w));
  }
  return words;
}

inline std::string serialize_word_tsv(const std::vector<WordBoundary> &words) {
  std::string out;
  for (const auto &w : words)
    out += strprintf("%.6f\t%.6f\t%s\n", w.start, w.end, w.word.c_str());
  return out;
}

inline std::vector<WordBoundary> load_word_tsv(const std::filesystem::path &path) {
  return parse_word_tsv(read_text_file(path), path.string());
}

// ---------------------------------------------------------------------------
// Silence extraction
// ---------------------------------------------------------------------------

// Extracts the non-vocal spans of a song: before the first line, between
// consecutive lines, after the last line.  Gaps shorter than min_length are
// dropped.  Gaps longer than max_length keep only the part adjacent to line
// boundaries (half budget per side for interior gaps); the clipped interior
// is reported in `dropped`.
inline SilenceExtraction extract_silence_segments(const std::vector<LineAnnotation> &lines,
                                                  double song_duration,
                                                  const SilenceOptions &opts = {}) {
  if (song_duration <= 0) throw DataError("extract_silence_segments: non-positive song duration");
  SilenceExtraction out;
  std::string song_id = lines.empty() ? "" : lines.front().song_id;
  GenreBroadclass genre = lines.empty() ? GenreBroadclass::pop : lines.front().genre;

  struct Gap {
    double start, end;
    bool line_before, line_after;
  };
  std::vector<Gap> gaps;
  double cursor = 0.0;
  for (const auto &line : lines) {
    if (line.line_start > cursor) gaps.push_back({cursor, line.line_start, cursor > 0.0, true});
    cursor = std::max(cursor, line.line_end);
  }
  if (cursor < song_duration) gaps.push_back({cursor, song_duration, !lines.empty(), false});

  auto keep = [&](double s, double e) {
    if (e - s < opts.min_length) {
      if (e > s) out.dropped.push_back({s, e});
      return;
    }
    out.segments.push_back({song_id, s, e, genre});
  };

  for (const auto &g : gaps) {
    const double len = g.end - g.start;
    const bool clip = opts.max_length > 0 && len > opts.max_length;
    if (!clip) {
      keep(g.start, g.end);
      continue;
    }
    if (g.line_before && g.line_after) {
      const double half = opts.max_length / 2.0;
      keep(g.start, g.start + half);
      out.dropped.push_back({g.start + half, g.end - half});
      keep(g.end - half, g.end);
    } else if (g.line_after) {
      // song-start interlude: keep the part leading into the first line
      out.dropped.push_back({g.start, g.end - opts.max_length});
      keep(g.end - opts.max_length, g.end);
    } else {
      // song-end interlude: keep the part trailing the last line
      keep(g.start, g.start + opts.max_length);
      out.dropped.push_back({g.start + opts.max_length, g.end});
    }
  }
  return out;
}

}  // namespace polyphone

#endif  // POLYPHONE_CORPUS_HPP
