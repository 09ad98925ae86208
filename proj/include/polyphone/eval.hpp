// polyphone/eval.hpp

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

#ifndef POLYPHONE_EVAL_HPP
#define POLYPHONE_EVAL_HPP

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "polyphone/align.hpp"
#include "polyphone/common.hpp"
#include "polyphone/corpus.hpp"

namespace polyphone {

enum class AeMode { start, both };

// Mean absolute word boundary error in seconds.  Requires ref and hyp to be
// the same word sequence (forced alignment shares the reference lyrics);
// a mismatch signals a lyrics or normalization bug upstream.  Default
// compares start boundaries; AeMode::both averages start and end errors.
inline double word_boundary_ae(const WordBoundaryAnnotation &ref, const AlignmentResult &hyp,
                               AeMode mode = AeMode::start) {
  if (ref.words.size() != hyp.words.size())
    throw DataError(strprintf("word_boundary_ae: ref has %zu words, hyp has %zu",
                              ref.words.size(), hyp.words.size()));
  double total = 0.0;
  for (size_t i = 0; i < ref.words.size(); i++) {
    const std::string r = normalize_text(ref.words[i].word);
    const std::string h = normalize_text(hyp.words[i].word);
    if (r != h)
      throw DataError(strprintf("word_boundary_ae: word %zu mismatch: ref '%s' vs hyp '%s'", i,
                                r.c_str(), h.c_str()));
    if (mode == AeMode::start) {
      total += std::abs(ref.words[i].start - hyp.words[i].start);
    } else {
      total += 0.5 * (std::abs(ref.words[i].start - hyp.words[i].start) +
                      std::abs(ref.words[i].end - hyp.words[i].end));
    }
  }
  if (ref.words.empty()) throw DataError("word_boundary_ae: empty reference");
  return total / static_cast<double>(ref.words.size());
}

// Minimum edit distance with uniform costs.
inline size_t edit_distance(const std::vector<std::string> &ref,
                            const std::vector<std::string> &hyp) {
  const size_t n = ref.size(), m = hyp.size();
  std::vector<size_t> prev(m + 1), cur(m + 1);
  for (size_t j = 0; j <= m; j++) prev[j] = j;
  for (size_t i = 1; i <= n; i++) {
    cur[0] = i;
    for (size_t j = 1; j <= m; j++) {
      const size_t sub = prev[j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

// WER in percent: 100 * (S + D + I) / |ref|.  May exceed 100.
inline double word_error_rate(const std::vector<std::string> &ref,
                              const std::vector<std::string> &hyp) {
  if (ref.empty()) throw DataError("word_error_rate: empty reference");
  return 100.0 * static_cast<double>(edit_distance(ref, hyp)) /
         static_cast<double>(ref.size());
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

struct SongEval {
  std::string song_id;
  std::string dataset;
  GenreBroadclass genre = GenreBroadclass::pop;
  std::optional<double> ae;   // seconds
  std::optional<double> wer;  // percent
};

struct EvalAggregate {
  size_t songs = 0;
  size_t ae_songs = 0, wer_songs = 0;
  double mean_ae = 0.0, mean_wer = 0.0;
};

struct EvalReport {
  std::string system_label;
  std::vector<SongEval> per_song;
  std::map<std::string, EvalAggregate> per_dataset;
  std::map<std::string, EvalAggregate> per_genre;
  EvalAggregate overall;
};

namespace eval_detail {

inline void accumulate(EvalAggregate *agg, const SongEval &s) {
  agg->songs++;
  if (s.ae) {
    agg->mean_ae += *s.ae;
    agg->ae_songs++;
  }
  if (s.wer) {
    agg->mean_wer += *s.wer;
    agg->wer_songs++;
  }
}

inline void finish(EvalAggregate *agg) {
  if (agg->ae_songs) agg->mean_ae /= static_cast<double>(agg->ae_songs);
  if (agg->wer_songs) agg->mean_wer /= static_cast<double>(agg->wer_songs);
}

}  // namespace eval_detail

// Unweighted per-song means, stratified by dataset and by genre.
inline EvalReport build_report(const std::vector<SongEval> &songs,
                               const std::string &system_label) {
  EvalReport report;
  report.system_label = system_label;
  std::map<std::string, int> seen;
  for (const auto &s : songs) {
    if (seen[s.song_id]++)
      throw DataError("build_report: duplicate song_id '" + s.song_id + "'");
    if (s.ae && *s.ae < 0) throw DataError("build_report: negative AE for " + s.song_id);
    if (s.wer && *s.wer < 0) throw DataError("build_report: negative WER for " + s.song_id);
    report.per_song.push_back(s);
    eval_detail::accumulate(&report.per_dataset[s.dataset], s);
    eval_detail::accumulate(&report.per_genre[genre_name(s.genre)], s);
    eval_detail::accumulate(&report.overall, s);
  }
  for (auto &[_, agg] : report.per_dataset) eval_detail::finish(&agg);
  for (auto &[_, agg] : report.per_genre) eval_detail::finish(&agg);
  eval_detail::finish(&report.overall);
  return report;
}

inline nlohmann::json report_to_json(const EvalReport &report) {
  auto agg_json = [](const EvalAggregate &a) {
    nlohmann::json j;
    j["songs"] = a.songs;
    if (a.ae_songs) j["ae_seconds"] = a.mean_ae;
    if (a.wer_songs) j["wer_percent"] = a.mean_wer;
    return j;
  };
  nlohmann::json j;
  j["system"] = report.system_label;
  j["per_song"] = nlohmann::json::array();
  for (const auto &s : report.per_song) {
    nlohmann::json js;
    js["song_id"] = s.song_id;
    js["dataset"] = s.dataset;
    js["genre"] = genre_name(s.genre);
    if (s.ae) js["ae_seconds"] = *s.ae;
    if (s.wer) js["wer_percent"] = *s.wer;
    j["per_song"].push_back(js);
  }
  j["per_dataset"] = nlohmann::json::object();
  for (const auto &[name, agg] : report.per_dataset) j["per_dataset"][name] = agg_json(agg);
  j["per_genre"] = nlohmann::json::object();
  for (const auto &[name, agg] : report.per_genre) j["per_genre"][name] = agg_json(agg);
  j["overall"] = agg_json(report.overall);
  return j;
}

// Fixed-width text table, one row per dataset plus genre and overall rows.
inline std::string report_to_table(const EvalReport &report) {
  std::string out;
  out += strprintf("system: %s\n", report.system_label.c_str());
  out += strprintf("%-16s %6s %10s %10s\n", "dataset", "songs", "AE(s)", "WER(%)");
  auto row = [&out](const std::string &name, const EvalAggregate &a) {
    out += strprintf("%-16s %6zu %10s %10s\n", name.c_str(), a.songs,
                     a.ae_songs ? strprintf("%.3f", a.mean_ae).c_str() : "-",
                     a.wer_songs ? strprintf("%.2f", a.mean_wer).c_str() : "-");
  };
  for (const auto &[name, agg] : report.per_dataset) row(name, agg);
  out += strprintf("%-16s %6s %10s %10s\n", "genre", "", "", "");
  for (const auto &[name, agg] : report.per_genre) row("  " + name, agg);
  row("overall", report.overall);
  return out;
}

// CSV rows for external plotting (the per-genre breakdown feeds bar charts).
inline std::string report_to_csv(const EvalReport &report) {
  std::string out = "scope,name,songs,ae_seconds,wer_percent\n";
  auto row = [&out](const std::string &scope, const std::string &name, const EvalAggregate &a) {
    out += strprintf("%s,%s,%zu,%s,%s\n", scope.c_str(), name.c_str(), a.songs,
                     a.ae_songs ? strprintf("%.6f", a.mean_ae).c_str() : "",
                     a.wer_songs ? strprintf("%.4f", a.mean_wer).c_str() : "");
  };
  for (const auto &[name, agg] : report.per_dataset) row("dataset", name, agg);
  for (const auto &[name, agg] : report.per_genre) row("genre", name, agg);
  row("overall", "all", report.overall);
  for (const auto &s : report.per_song) {
    out += strprintf("song,%s,1,%s,%s\n", s.song_id.c_str(),
                     s.ae ? strprintf("%.6f", *s.ae).c_str() : "",
                     s.wer ? strprintf("%.4f", *s.wer).c_str() : "");
  }
  return out;
}

}  // namespace polyphone

#endif  // POLYPHONE_EVAL_HPP
