// polyphone/pipeline.hpp

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

#ifndef POLYPHONE_PIPELINE_HPP
#define POLYPHONE_PIPELINE_HPP

#include <cstdlib>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "polyphone/align.hpp"
#include "polyphone/am.hpp"
#include "polyphone/audio.hpp"
#include "polyphone/common.hpp"
#include "polyphone/corpus.hpp"
#include "polyphone/decode.hpp"
#include "polyphone/eval.hpp"
#include "polyphone/features.hpp"
#include "polyphone/genre.hpp"
#include "polyphone/lexicon.hpp"
#include "polyphone/lm.hpp"
#include "polyphone/synth.hpp"
#include "polyphone/train.hpp"

namespace polyphone {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Feature loading with optional on-disk cache (POLYPHONE_CACHE_DIR)
// ---------------------------------------------------------------------------

namespace pipeline_detail {

inline uint64_t fnv1a(const std::string &s) {
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::optional<fs::path> cache_dir_from_env() {
  const char *dir = std::getenv("POLYPHONE_CACHE_DIR");
  if (dir == nullptr || *dir == '\0') return std::nullopt;
  return fs::path(dir);
}

constexpr char kFeatureCacheMagic[8] = {'P', 'P', 'F', 'E', 'A', 'T', '0', '1'};

inline void write_feature_cache(const fs::path &path, const FeatureMatrix &f,
                                const std::string &fingerprint) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) return;  // cache is best-effort
  out.write(kFeatureCacheMagic, sizeof(kFeatureCacheMagic));
  uint32_t fp_len = static_cast<uint32_t>(fingerprint.size());
  uint32_t rows = static_cast<uint32_t>(f.num_frames());
  uint32_t cols = static_cast<uint32_t>(f.dim());
  out.write(reinterpret_cast<const char *>(&fp_len), 4);
  out.write(fingerprint.data(), fp_len);
  out.write(reinterpret_cast<const char *>(&rows), 4);
  out.write(reinterpret_cast<const char *>(&cols), 4);
  out.write(reinterpret_cast<const char *>(&f.frame_hop), 8);
  out.write(reinterpret_cast<const char *>(&f.frame_length), 8);
  for (const auto &row : f.frames)
    out.write(reinterpret_cast<const char *>(row.data()), 8 * cols);
}

inline std::optional<FeatureMatrix> read_feature_cache(const fs::path &path,
                                                       const std::string &fingerprint) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kFeatureCacheMagic, 8) != 0) return std::nullopt;
  uint32_t fp_len = 0;
  in.read(reinterpret_cast<char *>(&fp_len), 4);
  if (!in || fp_len > 4096) return std::nullopt;
  std::string fp(fp_len, '\0');
  in.read(fp.data(), fp_len);
  if (!in || fp != fingerprint) return std::nullopt;
  uint32_t rows = 0, cols = 0;
  in.read(reinterpret_cast<char *>(&rows), 4);
  in.read(reinterpret_cast<char *>(&cols), 4);
  FeatureMatrix f;
  in.read(reinterpret_cast<char *>(&f.frame_hop), 8);
  in.read(reinterpret_cast<char *>(&f.frame_length), 8);
  if (!in) return std::nullopt;
  f.frames.assign(rows, std::vector<double>(cols));
  for (auto &row : f.frames) {
    in.read(reinterpret_cast<char *>(row.data()), 8 * cols);
    if (!in) return std::nullopt;
  }
  return f;
}

}  // namespace pipeline_detail

// Whole-song CMVN'd features, cached under POLYPHONE_CACHE_DIR when set.
inline FeatureMatrix song_features(const fs::path &wav_path, const FeatureConfig &config) {
  const std::string fingerprint = config.fingerprint();
  const auto cache_dir = pipeline_detail::cache_dir_from_env();
  fs::path cache_file;
  if (cache_dir) {
    fs::create_directories(*cache_dir);
    cache_file = *cache_dir / strprintf("%016llx.feat",
                                        static_cast<unsigned long long>(pipeline_detail::fnv1a(
                                            fs::absolute(wav_path).string() + "|" + fingerprint)));
    if (auto cached = pipeline_detail::read_feature_cache(cache_file, fingerprint)) return *cached;
  }
  FeatureMatrix feats = apply_cmvn(extract_mfcc(load_audio(wav_path), config));
  if (cache_dir) pipeline_detail::write_feature_cache(cache_file, feats, fingerprint);
  return feats;
}

// ---------------------------------------------------------------------------
// prep: validate a corpus manifest, attach broadclasses, extract silence
// ---------------------------------------------------------------------------

// Accepts either a broadclass name or a raw genre tag mapped through the
// genre map (with a warning on unmapped tags).
inline GenreBroadclass resolve_genre(const std::string &raw, const GenreMap &map,
                                     WarningLog *warnings) {
  try {
    return parse_genre(raw);
  } catch (const DataError &) {
    return classify_genre(raw, map, warnings);
  }
}

struct PrepOptions {
  SilenceOptions silence;
  GenreMap genre_map;
};

// Validates every song's line annotations, extracts silence segments and
// writes a self-contained prep manifest.  All validation happens before
// anything is written; a failure leaves no partial output.
inline nlohmann::json cmd_prep(const fs::path &corpus_manifest, const PrepOptions &options,
                               const fs::path &out_file, WarningLog *warnings = nullptr) {
  const CorpusManifest manifest = load_manifest(corpus_manifest);
  if (manifest.songs.empty()) throw DataError(corpus_manifest.string() + ": manifest lists no songs");
  const fs::path root = corpus_manifest.parent_path();

  nlohmann::json out;
  out["format"] = "polyphone-prep";
  out["version"] = 1;
  out["wav_root"] = fs::absolute(root).string();
  std::map<std::string, int> genre_counts;
  std::map<std::string, int> seen_ids;
  out["songs"] = nlohmann::json::array();

  for (const auto &entry : manifest.songs) {
    if (seen_ids[entry.song_id]++)
      throw DataError("duplicate song_id in manifest: " + entry.song_id);
    if (entry.lines.empty())
      throw DataError("song " + entry.song_id + " has no line annotation path");
    SongAnnotation ann = load_song_annotation(root / entry.lines);
    if (ann.song_id != entry.song_id)
      throw DataError(strprintf("song_id mismatch: manifest says '%s', annotation says '%s'",
                                entry.song_id.c_str(), ann.song_id.c_str()));
    if (!entry.wav.empty() && !fs::exists(root / entry.wav))
      throw DataError("missing WAV file: " + (root / entry.wav).string());

    const GenreBroadclass genre = resolve_genre(entry.genre_raw, options.genre_map, warnings);
    if (genre != ann.genre)
      throw DataError(strprintf(
          "song %s: manifest genre '%s' resolves to %s but the annotation says %s",
          entry.song_id.c_str(), entry.genre_raw.c_str(), genre_name(genre),
          genre_name(ann.genre)));

    SilenceExtraction sil = extract_silence_segments(ann.lines, ann.duration, options.silence);
    genre_counts[genre_name(genre)]++;

    nlohmann::json js;
    js["song_id"] = entry.song_id;
    js["genre"] = genre_name(genre);
    js["dataset"] = entry.dataset;
    js["wav"] = entry.wav;
    js["words"] = entry.words;
    js["duration"] = ann.duration;
    js["lines"] = nlohmann::json::array();
    for (const auto &line : ann.lines) {
      std::string text;
      for (size_t i = 0; i < line.text.size(); i++) {
        if (i) text += ' ';
        text += line.text[i];
      }
      js["lines"].push_back({{"start", line.line_start}, {"end", line.line_end}, {"text", text}});
    }
    js["silence"] = nlohmann::json::array();
    for (const auto &seg : sil.segments)
      js["silence"].push_back({{"start", seg.start}, {"end", seg.end}});
    out["songs"].push_back(js);
  }
  out["genre_counts"] = genre_counts;

  fs::create_directories(out_file.parent_path().empty() ? "." : out_file.parent_path());
  write_text_file_atomic(out_file, out.dump(1) + "\n");
  return out;
}

// Loads the prep manifest back into training material.
inline std::vector<TrainSong> load_prep_songs(const fs::path &prep_manifest,
                                              const FeatureConfig &features, int jobs = 1) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(prep_manifest));
  } catch (const nlohmann::json::exception &e) {
    throw DataError(prep_manifest.string() + ": invalid JSON: " + e.what());
  }
  if (j.value("format", "") != "polyphone-prep")
    throw DataError(prep_manifest.string() + ": not a prep manifest");
  const fs::path wav_root = j.at("wav_root").get<std::string>();

  const auto &songs_json = j.at("songs");
  std::vector<TrainSong> songs(songs_json.size());
  std::vector<std::string> errors(songs_json.size());
  parallel_for(songs_json.size(), jobs, [&](size_t i) {
    try {
      const auto &js = songs_json[i];
      TrainSong song;
      song.song_id = js.at("song_id").get<std::string>();
      song.genre = parse_genre(js.at("genre").get<std::string>());
      song.features = song_features(wav_root / js.at("wav").get<std::string>(), features);
      for (const auto &jl : js.at("lines")) {
        LineAnnotation line;
        line.song_id = song.song_id;
        line.genre = song.genre;
        line.line_start = jl.at("start").get<double>();
        line.line_end = jl.at("end").get<double>();
        line.text = normalize_words(jl.at("text").get<std::string>());
        song.lines.push_back(std::move(line));
      }
      for (const auto &jsil : js.at("silence")) {
        SilenceSegment seg;
        seg.song_id = song.song_id;
        seg.genre = song.genre;
        seg.start = jsil.at("start").get<double>();
        seg.end = jsil.at("end").get<double>();
        song.silence.push_back(seg);
      }
      songs[i] = std::move(song);
    } catch (const std::exception &e) {
      errors[i] = e.what();
    }
  });
  for (const auto &e : errors)
    if (!e.empty()) throw DataError(prep_manifest.string() + ": " + e);
  return songs;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

inline nlohmann::json training_log_json(const TrainResult &result) {
  nlohmann::json j;
  j["iterations"] = nlohmann::json::array();
  for (const auto &it : result.iterations) {
    nlohmann::json ji;
    ji["iteration"] = it.iteration;
    ji["total_loglik"] = it.total_loglik;
    ji["total_frames"] = it.total_frames;
    ji["loglik_per_frame"] =
        it.total_frames ? it.total_loglik / static_cast<double>(it.total_frames) : 0.0;
    ji["split_after"] = it.split_after;
    ji["zero_occupancy"] = it.zero_occupancy;
    j["iterations"].push_back(ji);
  }
  return j;
}

// Flat start + EM training; writes the model file and a per-iteration
// likelihood log next to it.
inline TrainResult cmd_train(const fs::path &prep_manifest, const fs::path &lexicon_path,
                             ModelMode mode, const FeatureConfig &features,
                             const TrainSchedule &schedule, const fs::path &model_out,
                             WarningLog *warnings = nullptr) {
  WarningLog local;
  WarningLog *warn = warnings ? warnings : &local;
  Lexicon lex = load_lexicon(lexicon_path, warn);
  std::vector<TrainSong> songs = load_prep_songs(prep_manifest, features, schedule.jobs);
  if (songs.empty()) throw DataError("no songs in prep manifest");

  std::vector<const FeatureMatrix *> sample;
  for (const auto &s : songs) sample.push_back(&s.features);
  AcousticModelSet init = flat_start(inventory_for_mode(lex, mode), sample, mode,
                                     features.fingerprint());
  TrainResult result = train_em(init, songs, lex, schedule);
  for (const auto &w : result.warnings.all()) warn->add(w.code, w.message);

  if (!model_out.empty()) {
    if (!model_out.parent_path().empty()) fs::create_directories(model_out.parent_path());
    save_models(result.models, model_out);
    fs::path log_path = model_out;
    log_path += ".log.json";
    write_text_file_atomic(log_path, training_log_json(result).dump(1) + "\n");
    std::set<Phone> inventory;
    for (const auto &[phone, m] : result.models.models) inventory.insert(phone);
    fs::path phones_path = model_out;
    phones_path += ".phones.txt";
    write_text_file_atomic(phones_path, serialize_phone_inventory(inventory));
  }
  return result;
}

// ---------------------------------------------------------------------------
// align / decode
// ---------------------------------------------------------------------------

// Lyrics for a test song: the concatenated line annotation text when
// available, otherwise the word-boundary TSV's word column.
inline std::vector<std::string> song_lyrics(const fs::path &root, const ManifestSong &entry) {
  if (!entry.lines.empty() && fs::exists(root / entry.lines)) {
    SongAnnotation ann = load_song_annotation(root / entry.lines);
    std::vector<std::string> words;
    for (const auto &line : ann.lines)
      words.insert(words.end(), line.text.begin(), line.text.end());
    return words;
  }
  if (!entry.words.empty() && fs::exists(root / entry.words)) {
    std::vector<std::string> words;
    for (const auto &w : load_word_tsv(root / entry.words))
      words.push_back(normalize_text(w.word));
    return words;
  }
  throw DataError("song " + entry.song_id + " has neither line nor word annotations for lyrics");
}

struct AlignCmdOptions {
  AlignSongOptions align;
  OovPolicy oov = OovPolicy::spell;
  bool emit_json = false;
  int jobs = 1;
};

// Forced alignment of every manifest song; one TSV (and optionally JSON)
// per song under out_dir.
inline void cmd_align(const fs::path &manifest_path, const fs::path &model_path,
                      const fs::path &lexicon_path, const FeatureConfig &features,
                      const AlignCmdOptions &options, const fs::path &out_dir) {
  const CorpusManifest manifest = load_manifest(manifest_path);
  const fs::path root = manifest_path.parent_path();
  AcousticModelSet models = load_models(model_path, features.fingerprint());
  Lexicon lex = load_lexicon(lexicon_path);
  fs::create_directories(out_dir);

  AlignCmdOptions opts = options;
  opts.align.graph.oov_policy = options.oov;

  std::vector<std::string> errors(manifest.songs.size());
  parallel_for(manifest.songs.size(), options.jobs, [&](size_t i) {
    const auto &entry = manifest.songs[i];
    try {
      AudioBuffer audio = load_audio(root / entry.wav);
      std::vector<std::string> lyrics = song_lyrics(root, entry);
      AlignmentResult result = align_song(audio, lyrics, models, lex, features, opts.align);
      write_text_file_atomic(out_dir / (entry.song_id + ".tsv"), alignment_to_tsv(result));
      if (opts.emit_json)
        write_text_file_atomic(out_dir / (entry.song_id + ".json"),
                               alignment_to_json(result).dump(1) + "\n");
    } catch (const std::exception &e) {
      errors[i] = entry.song_id + ": " + e.what();
    }
  });
  for (const auto &e : errors)
    if (!e.empty()) throw DataError("alignment failed: " + e);
}

// Transcribes every manifest song; writes "song_id<TAB>words" lines.
inline void cmd_decode(const fs::path &manifest_path, const fs::path &model_path,
                       const fs::path &lexicon_path, const fs::path &lm_path,
                       const FeatureConfig &features, const DecodeConfig &config,
                       const fs::path &out_file, int jobs = 1) {
  const CorpusManifest manifest = load_manifest(manifest_path);
  const fs::path root = manifest_path.parent_path();
  AcousticModelSet models = load_models(model_path, features.fingerprint());
  Lexicon lex = load_lexicon(lexicon_path);
  NgramModel lm = import_arpa(lm_path);
  DecodeNetwork net = build_decode_network(lex, models, config);

  std::vector<std::string> hyp_lines(manifest.songs.size());
  std::vector<std::string> errors(manifest.songs.size());
  parallel_for(manifest.songs.size(), jobs, [&](size_t i) {
    const auto &entry = manifest.songs[i];
    try {
      FeatureMatrix feats = song_features(root / entry.wav, features);
      TranscriptResult result = beam_decode(net, feats, models, lm, config);
      std::string line = entry.song_id;
      line += '\t';
      for (size_t w = 0; w < result.words.size(); w++) {
        if (w) line += ' ';
        line += result.words[w];
      }
      hyp_lines[i] = line;
    } catch (const std::exception &e) {
      errors[i] = entry.song_id + ": " + e.what();
    }
  });
  for (const auto &e : errors)
    if (!e.empty()) throw DataError("decoding failed: " + e);

  std::string out;
  for (const auto &l : hyp_lines) out += l + "\n";
  if (!out_file.parent_path().empty()) fs::create_directories(out_file.parent_path());
  write_text_file_atomic(out_file, out);
}

// ---------------------------------------------------------------------------
// train-lm
// ---------------------------------------------------------------------------

inline NgramModel cmd_train_lm(const fs::path &text_path, int order,
                               const DiscountConfig &discount, const fs::path &out_path) {
  std::vector<std::vector<std::string>> corpus;
  std::istringstream iss(read_text_file(text_path));
  std::string line;
  while (std::getline(iss, line)) {
    auto words = normalize_words(line);
    if (!words.empty()) corpus.push_back(std::move(words));
  }
  if (corpus.empty()) throw DataError(text_path.string() + ": no usable text lines");
  NgramModel model = train_ngram(corpus, order, discount);
  if (!out_path.empty()) {
    export_arpa_file(model, out_path);
    std::string tokens;
    for (const auto &t : model.vocab) tokens += t + "\n";
    fs::path vocab_path = out_path;
    vocab_path += ".vocab";
    write_text_file_atomic(vocab_path, tokens);
  }
  return model;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalCmdOptions {
  AeMode ae_mode = AeMode::start;
  std::string system_label = "system";
  GenreMap genre_map;
};

// Parses a decode hypothesis file: song_id<TAB>words.
inline std::map<std::string, std::vector<std::string>> load_hypotheses(const fs::path &path) {
  std::map<std::string, std::vector<std::string>> hyps;
  std::istringstream iss(read_text_file(path));
  std::string line;
  int lineno = 0;
  while (std::getline(iss, line)) {
    lineno++;
    if (trim(line).empty()) continue;
    size_t tab = line.find('\t');
    if (tab == std::string::npos)
      throw DataError(strprintf("%s:%d: expected song_id<TAB>words", path.string().c_str(),
                                lineno));
    std::string id = line.substr(0, tab);
    if (hyps.count(id))
      throw DataError(strprintf("%s:%d: duplicate song_id '%s'", path.string().c_str(), lineno,
                                id.c_str()));
    hyps[id] = normalize_words(line.substr(tab + 1));
  }
  return hyps;
}

// AE against per-song alignment TSVs in align_dir and/or WER against a
// decode hypothesis file.  References come from the manifest's word TSVs.
inline EvalReport cmd_eval(const fs::path &manifest_path,
                           const std::optional<fs::path> &align_dir,
                           const std::optional<fs::path> &hyp_file, const EvalCmdOptions &options,
                           const std::optional<fs::path> &report_out = std::nullopt,
                           WarningLog *warnings = nullptr) {
  if (!align_dir && !hyp_file)
    throw DataError("cmd_eval: nothing to evaluate (need an alignment dir or a hypothesis file)");
  const CorpusManifest manifest = load_manifest(manifest_path);
  const fs::path root = manifest_path.parent_path();

  std::map<std::string, std::vector<std::string>> hyps;
  if (hyp_file) hyps = load_hypotheses(*hyp_file);

  std::vector<SongEval> songs;
  for (const auto &entry : manifest.songs) {
    if (entry.words.empty())
      throw DataError("song " + entry.song_id + " has no reference word annotations");
    std::vector<WordBoundary> ref_words = load_word_tsv(root / entry.words);

    SongEval ev;
    ev.song_id = entry.song_id;
    ev.dataset = entry.dataset.empty() ? "default" : entry.dataset;
    ev.genre = resolve_genre(entry.genre_raw, options.genre_map, warnings);

    if (align_dir) {
      const fs::path hyp_path = *align_dir / (entry.song_id + ".tsv");
      if (!fs::exists(hyp_path))
        throw DataError("missing alignment hypothesis for song " + entry.song_id);
      std::vector<WordBoundary> hyp_words = load_word_tsv(hyp_path);
      WordBoundaryAnnotation ref{entry.song_id, ev.genre, ref_words};
      AlignmentResult hyp;
      for (const auto &w : hyp_words) hyp.words.push_back({w.word, w.start, w.end, 0.0, ""});
      ev.ae = word_boundary_ae(ref, hyp, options.ae_mode);
    }
    if (hyp_file) {
      auto it = hyps.find(entry.song_id);
      if (it == hyps.end())
        throw DataError("missing decode hypothesis for song " + entry.song_id);
      std::vector<std::string> ref;
      for (const auto &w : ref_words) ref.push_back(normalize_text(w.word));
      ev.wer = word_error_rate(ref, it->second);
    }
    songs.push_back(std::move(ev));
  }

  EvalReport report = build_report(songs, options.system_label);
  if (report_out) {
    fs::path json_path = *report_out;
    json_path += ".json";
    fs::path csv_path = *report_out;
    csv_path += ".csv";
    if (!report_out->parent_path().empty()) fs::create_directories(report_out->parent_path());
    write_text_file_atomic(json_path, report_to_json(report).dump(1) + "\n");
    write_text_file_atomic(csv_path, report_to_csv(report));
  }
  return report;
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

inline CorpusManifest cmd_synth(const fs::path &out_dir, uint64_t seed, const SynthSpec &spec) {
  fs::create_directories(out_dir);
  CorpusManifest manifest = synthesize_corpus(spec, seed, out_dir);
  // the generator's lexicon, so the corpus is alignable as-is
  write_text_file_atomic(out_dir / "lexicon.tsv", spec.lexicon().serialize());
  return manifest;
}

}  // namespace polyphone

#endif  // POLYPHONE_PIPELINE_HPP
