// tools/polyphone.cpp

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

// Command-line front end: prep, train, align, decode, train-lm, eval,
// synth, inspect-model.  A single config file can carry one section per
// subcommand; command-line flags always win.  Exit codes: 0 success,
// 1 data error, 2 internal error.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "polyphone/pipeline.hpp"

namespace {

using namespace polyphone;

void print_warnings(const WarningLog &warnings) {
  for (const auto &w : warnings.all())
    std::fprintf(stderr, "WARN %s: %s\n", w.code.c_str(), w.message.c_str());
}

// Applies one subcommand's config-file section underneath its parsed
// command-line options.  Keys are the long option names without dashes.
class ConfigOverlay {
 public:
  ConfigOverlay(const std::map<std::string, std::string> &kv, CLI::App *sub)
      : kv_(kv), sub_(sub), section_(sub->get_name()) {}

  template <typename T>
  void apply(const std::string &key, T *var) const {
    auto it = kv_.find(section_ + "." + key);
    if (it == kv_.end()) return;
    if (sub_->count("--" + key) > 0) return;  // flag overrides config
    assign(it->second, key, var);
  }

  void require(const std::string &key, const std::string &value) const {
    if (value.empty())
      throw DataError("missing --" + key + " (or '" + key + "' in the [" + section_ +
                      "] config section)");
  }

 private:
  static void assign(const std::string &v, const std::string &, std::string *out) { *out = v; }
  static void assign(const std::string &v, const std::string &key, int *out) {
    try {
      *out = std::stoi(trim(v));
    } catch (const std::exception &) {
      throw DataError("config key " + key + ": expected an integer, got '" + v + "'");
    }
  }
  static void assign(const std::string &v, const std::string &key, uint64_t *out) {
    try {
      *out = std::stoull(trim(v));
    } catch (const std::exception &) {
      throw DataError("config key " + key + ": expected an integer, got '" + v + "'");
    }
  }
  static void assign(const std::string &v, const std::string &key, double *out) {
    try {
      *out = std::stod(trim(v));
    } catch (const std::exception &) {
      throw DataError("config key " + key + ": expected a number, got '" + v + "'");
    }
  }
  static void assign(const std::string &v, const std::string &key, bool *out) {
    *out = parse_bool(v, key);
  }

  const std::map<std::string, std::string> &kv_;
  CLI::App *sub_;
  std::string section_;
};

struct FeatureFlags {
  std::string config_file;
  std::optional<double> window_ms, hop_ms;
  std::optional<int> num_ceps, num_filters;
  std::optional<bool> dither;

  void attach(CLI::App *cmd) {
    cmd->add_option("--features", config_file, "Feature config file (key = value)");
    cmd->add_option("--window-ms", window_ms, "Analysis window in ms");
    cmd->add_option("--hop-ms", hop_ms, "Frame hop in ms");
    cmd->add_option("--num-ceps", num_ceps, "Number of cepstral coefficients");
    cmd->add_option("--num-filters", num_filters, "Number of mel filters");
    cmd->add_flag("--dither,!--no-dither", dither, "Enable dithering");
  }

  void overlay(const ConfigOverlay &config) { config.apply("features", &config_file); }

  FeatureConfig resolve() const {
    FeatureConfig c;
    if (!config_file.empty()) c = FeatureConfig::from_config(parse_config_file(config_file));
    if (window_ms) c.window_ms = *window_ms;
    if (hop_ms) c.hop_ms = *hop_ms;
    if (num_ceps) c.num_ceps = *num_ceps;
    if (num_filters) c.num_filters = *num_filters;
    if (dither) c.dither = *dither;
    if (c.num_ceps < 1 || c.num_filters < c.num_ceps)
      throw DataError("feature config: need 1 <= num_ceps <= num_filters");
    return c;
  }
};

std::optional<fs::path> opt_path(const std::string &s) {
  return s.empty() ? std::nullopt : std::optional<fs::path>(s);
}

int run(int argc, char **argv) {
  CLI::App app{"polyphone: genre-informed lyrics alignment and transcription toolkit"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "Config file with one section per subcommand");

  // ---- prep ----
  auto *prep = app.add_subcommand("prep", "Validate a corpus manifest and extract silence spans");
  std::string prep_corpus, prep_out, prep_genre_map;
  double prep_min_sil = 0.1, prep_max_sil = 10.0;
  prep->add_option("--corpus", prep_corpus, "Corpus manifest JSON");
  prep->add_option("--out", prep_out, "Output prep manifest path");
  prep->add_option("--genre-map", prep_genre_map, "Genre map TSV (raw_genre<TAB>broadclass)");
  prep->add_option("--min-silence", prep_min_sil, "Minimum silence segment length (s)");
  prep->add_option("--max-silence", prep_max_sil, "Maximum kept silence per gap (s); 0 disables");

  // ---- train ----
  auto *train = app.add_subcommand("train", "Flat-start and EM-train acoustic models");
  std::string train_prep, train_lex, train_mode = "genre_agnostic", train_out;
  TrainSchedule schedule;
  std::string train_splits = "4,8,12";
  FeatureFlags train_feats;
  train->add_option("--prep", train_prep, "Prep manifest from `prep`");
  train->add_option("--lexicon", train_lex, "Pronunciation lexicon TSV");
  train->add_option("--mode", train_mode,
                    "genre_agnostic | genre_silence | genre_silence_phone");
  train->add_option("--out", train_out, "Output model file");
  train->add_option("--iterations", schedule.iterations, "EM iterations");
  train->add_option("--splits", train_splits, "Comma-separated mixture-split iterations");
  train->add_option("--max-components", schedule.max_components, "Mixture size cap");
  train->add_flag("--interword-sil,!--no-interword-sil", schedule.interword_silence,
                  "Optional silence between words in training graphs");
  train->add_option("--sil-prob", schedule.interword_sil_prob, "Optional-silence prior");
  train->add_option("--jobs", schedule.jobs, "Worker threads");
  train_feats.attach(train);

  // ---- align ----
  auto *align = app.add_subcommand("align", "Forced-align lyrics to audio");
  std::string align_corpus, align_models, align_lex, align_out, align_oov = "spell";
  AlignCmdOptions align_opts;
  FeatureFlags align_feats;
  align->add_option("--corpus", align_corpus, "Corpus manifest JSON");
  align->add_option("--models", align_models, "Acoustic model file");
  align->add_option("--lexicon", align_lex, "Pronunciation lexicon TSV");
  align->add_option("--out", align_out, "Output directory for per-song TSV");
  align->add_option("--oov", align_oov, "OOV policy: strict | spell");
  align->add_flag("--per-song-genre", align_opts.align.per_song_genre,
                  "Pick one genre per song instead of per phone");
  align->add_option("--beam", align_opts.align.viterbi.beam, "Viterbi beam (0 = exact)");
  align->add_flag("--json", align_opts.emit_json, "Also write per-song JSON with phone detail");
  align->add_option("--jobs", align_opts.jobs, "Worker threads");
  align_feats.attach(align);

  // ---- decode ----
  auto *decode = app.add_subcommand("decode", "Transcribe lyrics with beam search");
  std::string dec_corpus, dec_models, dec_lex, dec_lm, dec_out;
  DecodeConfig dec_config;
  int dec_jobs = 1;
  FeatureFlags dec_feats;
  decode->add_option("--corpus", dec_corpus, "Corpus manifest JSON");
  decode->add_option("--models", dec_models, "Acoustic model file");
  decode->add_option("--lexicon", dec_lex, "Pronunciation lexicon TSV");
  decode->add_option("--lm", dec_lm, "ARPA language model");
  decode->add_option("--out", dec_out, "Output hypothesis file");
  decode->add_option("--beam", dec_config.beam, "Beam width in nats (0 = exhaustive)");
  decode->add_option("--max-active", dec_config.max_active, "Token cap per frame (0 = off)");
  decode->add_option("--lm-weight", dec_config.lm_weight, "LM scale");
  decode->add_option("--word-penalty", dec_config.word_insertion_penalty,
                     "Word insertion penalty (nats)");
  decode->add_option("--sil-prob", dec_config.silence_prob, "Optional-silence prior");
  decode->add_option("--jobs", dec_jobs, "Worker threads");
  dec_feats.attach(decode);

  // ---- train-lm ----
  auto *train_lm = app.add_subcommand("train-lm", "Train a back-off N-gram LM");
  std::string lm_text, lm_out;
  int lm_order = 3;
  DiscountConfig lm_discount;
  train_lm->add_option("--text", lm_text, "Training text, one sentence per line");
  train_lm->add_option("--order", lm_order, "N-gram order");
  train_lm->add_option("--discount", lm_discount.discount, "Absolute discount in (0,1)");
  train_lm->add_option("--out", lm_out, "Output ARPA file");

  // ---- eval ----
  auto *eval = app.add_subcommand("eval", "Score alignments (AE) and transcripts (WER)");
  std::string eval_corpus, eval_align_dir, eval_hyp, eval_out, eval_label = "system";
  std::string eval_ae_mode = "start", eval_genre_map;
  eval->add_option("--corpus", eval_corpus, "Corpus manifest JSON with reference word TSVs");
  eval->add_option("--align-dir", eval_align_dir, "Directory of alignment hypothesis TSVs");
  eval->add_option("--hyp", eval_hyp, "Decode hypothesis file (song_id<TAB>words)");
  eval->add_option("--ae-mode", eval_ae_mode, "start | both");
  eval->add_option("--label", eval_label, "System label for the report");
  eval->add_option("--out", eval_out, "Report path prefix (writes .json and .csv)");
  eval->add_option("--genre-map", eval_genre_map, "Genre map TSV for raw manifest tags");

  // ---- synth ----
  auto *synth = app.add_subcommand("synth", "Generate a synthetic annotated corpus");
  std::string synth_out;
  uint64_t synth_seed = 17;
  SynthSpec spec = default_synth_spec();
  synth->add_option("--out", synth_out, "Output corpus directory");
  synth->add_option("--seed", synth_seed, "Master seed");
  synth->add_option("--songs-per-genre", spec.songs_per_genre, "Songs per genre broadclass");
  synth->add_option("--lines-per-song", spec.lines_per_song, "Lines per song");
  synth->add_option("--words-per-line", spec.words_per_line, "Words per line");

  // ---- inspect-model ----
  auto *inspect = app.add_subcommand("inspect-model", "Dump a model file as text");
  std::string inspect_models;
  inspect->add_option("--models", inspect_models, "Acoustic model file");

  // --config stays reachable after the subcommand name
  for (CLI::App *sub : app.get_subcommands([](const CLI::App *) { return true; }))
    sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;  // usage problems are data errors
  }

  std::map<std::string, std::string> file_config;
  if (!config_path.empty()) file_config = parse_config_file(config_path);

  WarningLog warnings;
  if (prep->parsed()) {
    ConfigOverlay cfg(file_config, prep);
    cfg.apply("corpus", &prep_corpus);
    cfg.apply("out", &prep_out);
    cfg.apply("genre-map", &prep_genre_map);
    cfg.apply("min-silence", &prep_min_sil);
    cfg.apply("max-silence", &prep_max_sil);
    cfg.require("corpus", prep_corpus);
    cfg.require("out", prep_out);
    PrepOptions options;
    options.silence.min_length = prep_min_sil;
    options.silence.max_length = prep_max_sil;
    if (!prep_genre_map.empty()) options.genre_map = load_genre_map(prep_genre_map);
    nlohmann::json manifest = cmd_prep(prep_corpus, options, prep_out, &warnings);
    print_warnings(warnings);
    std::printf("prep: %zu songs -> %s\n", manifest["songs"].size(), prep_out.c_str());
    for (const auto &[g, n] : manifest["genre_counts"].items())
      std::printf("  %s: %d\n", g.c_str(), n.get<int>());
  } else if (train->parsed()) {
    ConfigOverlay cfg(file_config, train);
    cfg.apply("prep", &train_prep);
    cfg.apply("lexicon", &train_lex);
    cfg.apply("mode", &train_mode);
    cfg.apply("out", &train_out);
    cfg.apply("iterations", &schedule.iterations);
    cfg.apply("splits", &train_splits);
    cfg.apply("max-components", &schedule.max_components);
    cfg.apply("interword-sil", &schedule.interword_silence);
    cfg.apply("sil-prob", &schedule.interword_sil_prob);
    cfg.apply("jobs", &schedule.jobs);
    train_feats.overlay(cfg);
    cfg.require("prep", train_prep);
    cfg.require("lexicon", train_lex);
    cfg.require("out", train_out);
    schedule.split_iterations.clear();
    for (const auto &tok : split_char(train_splits, ',')) {
      if (trim(tok).empty()) continue;
      schedule.split_iterations.push_back(std::stoi(trim(tok)));
    }
    TrainResult result = cmd_train(train_prep, train_lex, parse_model_mode(train_mode),
                                   train_feats.resolve(), schedule, train_out, &warnings);
    print_warnings(warnings);
    const auto &last = result.iterations.back();
    std::printf("train: %d iterations, final log-likelihood/frame %.4f -> %s\n",
                last.iteration,
                last.total_frames ? last.total_loglik / static_cast<double>(last.total_frames)
                                  : 0.0,
                train_out.c_str());
  } else if (align->parsed()) {
    ConfigOverlay cfg(file_config, align);
    cfg.apply("corpus", &align_corpus);
    cfg.apply("models", &align_models);
    cfg.apply("lexicon", &align_lex);
    cfg.apply("out", &align_out);
    cfg.apply("oov", &align_oov);
    cfg.apply("per-song-genre", &align_opts.align.per_song_genre);
    cfg.apply("beam", &align_opts.align.viterbi.beam);
    cfg.apply("json", &align_opts.emit_json);
    cfg.apply("jobs", &align_opts.jobs);
    align_feats.overlay(cfg);
    cfg.require("corpus", align_corpus);
    cfg.require("models", align_models);
    cfg.require("lexicon", align_lex);
    cfg.require("out", align_out);
    AlignCmdOptions opts = align_opts;
    if (align_oov == "strict") {
      opts.oov = OovPolicy::strict;
    } else if (align_oov == "spell") {
      opts.oov = OovPolicy::spell;
    } else {
      throw DataError("--oov must be strict or spell");
    }
    cmd_align(align_corpus, align_models, align_lex, align_feats.resolve(), opts, align_out);
    std::printf("align: wrote per-song TSV under %s\n", align_out.c_str());
  } else if (decode->parsed()) {
    ConfigOverlay cfg(file_config, decode);
    cfg.apply("corpus", &dec_corpus);
    cfg.apply("models", &dec_models);
    cfg.apply("lexicon", &dec_lex);
    cfg.apply("lm", &dec_lm);
    cfg.apply("out", &dec_out);
    cfg.apply("beam", &dec_config.beam);
    cfg.apply("max-active", &dec_config.max_active);
    cfg.apply("lm-weight", &dec_config.lm_weight);
    cfg.apply("word-penalty", &dec_config.word_insertion_penalty);
    cfg.apply("sil-prob", &dec_config.silence_prob);
    cfg.apply("jobs", &dec_jobs);
    dec_feats.overlay(cfg);
    cfg.require("corpus", dec_corpus);
    cfg.require("models", dec_models);
    cfg.require("lexicon", dec_lex);
    cfg.require("lm", dec_lm);
    cfg.require("out", dec_out);
    cmd_decode(dec_corpus, dec_models, dec_lex, dec_lm, dec_feats.resolve(), dec_config, dec_out,
               dec_jobs);
    std::printf("decode: wrote hypotheses to %s\n", dec_out.c_str());
  } else if (train_lm->parsed()) {
    ConfigOverlay cfg(file_config, train_lm);
    cfg.apply("text", &lm_text);
    cfg.apply("order", &lm_order);
    cfg.apply("discount", &lm_discount.discount);
    cfg.apply("out", &lm_out);
    cfg.require("text", lm_text);
    cfg.require("out", lm_out);
    NgramModel model = cmd_train_lm(lm_text, lm_order, lm_discount, lm_out);
    std::printf("train-lm: order %d, %zu unigrams -> %s\n", model.order, model.ngram_count(1),
                lm_out.c_str());
  } else if (eval->parsed()) {
    ConfigOverlay cfg(file_config, eval);
    cfg.apply("corpus", &eval_corpus);
    cfg.apply("align-dir", &eval_align_dir);
    cfg.apply("hyp", &eval_hyp);
    cfg.apply("ae-mode", &eval_ae_mode);
    cfg.apply("label", &eval_label);
    cfg.apply("out", &eval_out);
    cfg.apply("genre-map", &eval_genre_map);
    cfg.require("corpus", eval_corpus);
    EvalCmdOptions options;
    options.system_label = eval_label;
    if (!eval_genre_map.empty()) options.genre_map = load_genre_map(eval_genre_map);
    if (eval_ae_mode == "start") {
      options.ae_mode = AeMode::start;
    } else if (eval_ae_mode == "both") {
      options.ae_mode = AeMode::both;
    } else {
      throw DataError("--ae-mode must be start or both");
    }
    EvalReport report = cmd_eval(eval_corpus, opt_path(eval_align_dir), opt_path(eval_hyp),
                                 options, opt_path(eval_out), &warnings);
    print_warnings(warnings);
    std::fputs(report_to_table(report).c_str(), stdout);
  } else if (synth->parsed()) {
    ConfigOverlay cfg(file_config, synth);
    cfg.apply("out", &synth_out);
    cfg.apply("seed", &synth_seed);
    cfg.apply("songs-per-genre", &spec.songs_per_genre);
    cfg.apply("lines-per-song", &spec.lines_per_song);
    cfg.apply("words-per-line", &spec.words_per_line);
    cfg.require("out", synth_out);
    CorpusManifest manifest = cmd_synth(synth_out, synth_seed, spec);
    std::printf("synth: %zu songs -> %s\n", manifest.songs.size(), synth_out.c_str());
  } else if (inspect->parsed()) {
    ConfigOverlay cfg(file_config, inspect);
    cfg.apply("models", &inspect_models);
    cfg.require("models", inspect_models);
    AcousticModelSet models = load_models(inspect_models);
    std::fputs(describe_model_set(models).c_str(), stdout);
  }
  return 0;
}

}  // namespace

int main(int argc, char **argv) {
  try {
    return run(argc, argv);
  } catch (const polyphone::DataError &e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception &e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return 2;
  }
}
