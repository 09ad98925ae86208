// polyphone/train.hpp

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

#ifndef POLYPHONE_TRAIN_HPP
#define POLYPHONE_TRAIN_HPP

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "polyphone/align.hpp"
#include "polyphone/am.hpp"
#include "polyphone/common.hpp"
#include "polyphone/corpus.hpp"
#include "polyphone/lexicon.hpp"

namespace polyphone {

struct TrainSchedule {
  int iterations = 20;
  std::vector<int> split_iterations = {4, 8, 12};  // mixture doubling after these iterations
  int max_components = 8;
  bool interword_silence = true;
  double interword_sil_prob = 0.5;
  double edge_sil_prob = 0.5;
  int jobs = 1;
};

// One song's training material: whole-song CMVN'd features plus the line
// and silence-segment time spans that slice it into utterances.
struct TrainSong {
  std::string song_id;
  GenreBroadclass genre = GenreBroadclass::pop;
  FeatureMatrix features;
  std::vector<LineAnnotation> lines;
  std::vector<SilenceSegment> silence;
};

struct IterationStats {
  int iteration = 0;
  double total_loglik = 0.0;
  size_t total_frames = 0;
  bool split_after = false;
  std::vector<std::string> zero_occupancy;  // phone names
};

struct TrainResult {
  AcousticModelSet models;
  std::vector<IterationStats> iterations;
  WarningLog warnings;
};

namespace train_detail {

struct Utterance {
  int song_index = -1;
  FeatureMatrix features;
  std::vector<std::string> words;  // empty for silence segments
  GenreBroadclass genre = GenreBroadclass::pop;
};

struct PhoneStats {
  std::vector<MixtureAccumulator> states;
  std::vector<std::vector<double>> trans;  // counts, (n x n+1)

  void init_for(const HmmPhoneModel &model, int dim) {
    states.resize(model.num_states());
    for (int s = 0; s < model.num_states(); s++)
      states[s].resize(model.states[s].num_components(), dim);
    trans.assign(model.num_states(), std::vector<double>(model.num_states() + 1, 0.0));
  }

  void add(const PhoneStats &other) {
    for (size_t s = 0; s < states.size(); s++) states[s].add(other.states[s]);
    for (size_t s = 0; s < trans.size(); s++)
      for (size_t j = 0; j < trans[s].size(); j++) trans[s][j] += other.trans[s][j];
  }
};

using StatsBlock = std::map<Phone, PhoneStats>;

inline PhoneStats &stats_for(StatsBlock &block, const AcousticModelSet &models, const Phone &p) {
  auto it = block.find(p);
  if (it != block.end()) return it->second;
  PhoneStats st;
  st.init_for(models.model(p), models.dim);
  return block.emplace(p, std::move(st)).first->second;
}

// Viterbi-align one utterance against its graph and accumulate mixture and
// transition statistics.  Returns the path log-likelihood.
inline double accumulate_utterance(const AlignGraph &graph, const FeatureMatrix &features,
                                   const AcousticModelSet &models, StatsBlock &block,
                                   std::vector<double> *scratch) {
  auto [path, loglik] = viterbi_best_path(graph, features, models);
  const size_t T = path.size();
  for (size_t t = 0; t < T; t++) {
    const auto &node = graph.nodes[path[t]];
    const auto &key = graph.emissions[node.emission_id];
    PhoneStats &st = stats_for(block, models, key.phone);
    st.states[key.state].accumulate(models.model(key.phone).states[key.state],
                                    std::span<const double>(features.frames[t]), scratch);
    if (t + 1 < T) {
      const auto &next_node = graph.nodes[path[t + 1]];
      if (next_node.slot == node.slot) {
        const auto &next_key = graph.emissions[next_node.emission_id];
        st.trans[key.state][next_key.state] += 1.0;
      } else {
        st.trans[key.state][st.trans.size()] += 1.0;  // exit
      }
    } else {
      st.trans[key.state][st.trans.size()] += 1.0;  // final exit
    }
  }
  return loglik;
}

}  // namespace train_detail

// Viterbi training (hard EM): per iteration, re-align every utterance
// against its fixed-structure graph, accumulate sufficient statistics with
// soft component assignment inside each state, then re-estimate mixtures
// and transitions.  Genre routing is structural: a song's graph only
// contains units its genre selects under the model mode, so statistics
// cannot leak across genres.  Mixtures split per schedule after the
// iteration completes; the split perturbs parameters, so likelihood is
// monotone between consecutive non-split iterations only.
inline TrainResult train_em(const AcousticModelSet &initial_models,
                            const std::vector<TrainSong> &corpus, const Lexicon &lexicon,
                            const TrainSchedule &schedule) {
  TrainResult result;
  result.models = initial_models;
  if (corpus.empty()) throw DataError("train_em: empty corpus");
  if (schedule.iterations < 1) throw DataError("train_em: need at least one iteration");

  // Strict OOV check and feature-space check up front.
  for (const auto &song : corpus) {
    if (song.features.num_frames() > 0 && song.features.dim() != initial_models.dim)
      throw DataError(strprintf("train_em: %s has %d-dim features but models expect %d",
                                song.song_id.c_str(), song.features.dim(), initial_models.dim));
    for (const auto &line : song.lines)
      words_to_phone_sequences(lexicon, line.text, OovPolicy::strict);
  }

  // Utterance list: lines and silence segments sliced from each song.
  std::vector<train_detail::Utterance> utterances;
  std::vector<std::vector<size_t>> song_utterances(corpus.size());
  for (size_t si = 0; si < corpus.size(); si++) {
    const auto &song = corpus[si];
    auto slice = [&](double start, double end) {
      size_t b = song.features.frame_index(start);
      size_t e = song.features.frame_index(end);
      e = std::min(e, song.features.num_frames());
      b = std::min(b, e);
      return song.features.slice(b, e);
    };
    for (const auto &line : song.lines) {
      train_detail::Utterance u;
      u.song_index = static_cast<int>(si);
      u.features = slice(line.line_start, line.line_end);
      u.words = line.text;
      u.genre = song.genre;
      if (u.features.num_frames() == 0) {
        result.warnings.add("empty-utterance",
                            strprintf("%s: line at %.2fs has no frames, skipped",
                                      song.song_id.c_str(), line.line_start));
        continue;
      }
      song_utterances[si].push_back(utterances.size());
      utterances.push_back(std::move(u));
    }
    for (const auto &seg : song.silence) {
      train_detail::Utterance u;
      u.song_index = static_cast<int>(si);
      u.features = slice(seg.start, seg.end);
      u.genre = song.genre;
      if (u.features.num_frames() < 2) continue;  // below the silence model's minimum
      song_utterances[si].push_back(utterances.size());
      utterances.push_back(std::move(u));
    }
  }
  if (utterances.empty()) throw DataError("train_em: no usable utterances");

  for (int iter = 1; iter <= schedule.iterations; iter++) {
    // Graphs are rebuilt each iteration so arc weights track the
    // re-estimated transitions; the structure never changes.
    std::vector<train_detail::StatsBlock> song_stats(corpus.size());
    std::vector<double> song_loglik(corpus.size(), 0.0);
    std::vector<size_t> song_frames(corpus.size(), 0);
    std::vector<std::vector<std::string>> song_warn(corpus.size());

    const AcousticModelSet &models = result.models;
    parallel_for(corpus.size(), schedule.jobs, [&](size_t si) {
      std::vector<double> scratch;
      for (size_t ui : song_utterances[si]) {
        const auto &u = utterances[ui];
        GraphOptions opts;
        opts.interword_silence = schedule.interword_silence;
        opts.interword_sil_prob = schedule.interword_sil_prob;
        opts.edge_sil_prob = schedule.edge_sil_prob;
        opts.fixed_genre = u.genre;
        AlignGraph graph;
        if (u.words.empty()) {
          graph = build_silence_graph(models, opts);
        } else {
          graph = build_align_graph(u.words, lexicon, models, opts);
        }
        if (static_cast<int>(u.features.num_frames()) < graph.min_frames) {
          song_warn[si].push_back(strprintf("%s: utterance with %zu frames needs %d, skipped",
                                            corpus[si].song_id.c_str(), u.features.num_frames(),
                                            graph.min_frames));
          continue;
        }
        song_loglik[si] += train_detail::accumulate_utterance(graph, u.features, models,
                                                              song_stats[si], &scratch);
        song_frames[si] += u.features.num_frames();
      }
    });

    // Deterministic merge in song order.
    train_detail::StatsBlock total;
    IterationStats stats;
    stats.iteration = iter;
    for (size_t si = 0; si < corpus.size(); si++) {
      for (const auto &msg : song_warn[si]) result.warnings.add("infeasible-utterance", msg);
      stats.total_loglik += song_loglik[si];
      stats.total_frames += song_frames[si];
      for (auto &[phone, st] : song_stats[si])
        train_detail::stats_for(total, models, phone).add(st);
    }
    if (!std::isfinite(stats.total_loglik))
      throw Error(strprintf("train_em: non-finite likelihood at iteration %d", iter));

    // Re-estimate.
    for (auto &[phone, model] : result.models.models) {
      auto it = total.find(phone);
      const double occ = it == total.end() ? 0.0 : [&] {
        double o = 0.0;
        for (const auto &s : it->second.states) o += s.total_occupancy();
        return o;
      }();
      if (occ <= 1e-8) {
        stats.zero_occupancy.push_back(phone.name());
        result.warnings.add("zero-occupancy",
                            strprintf("iteration %d: phone %s has zero occupancy, kept previous "
                                      "estimate", iter, phone.name().c_str()));
        continue;
      }
      for (int s = 0; s < model.num_states(); s++)
        reestimate_mixture(&model.states[s], it->second.states[s]);
      for (int s = 0; s < model.num_states(); s++) {
        double row_total = 0.0;
        for (double c : it->second.trans[s]) row_total += c;
        if (row_total <= 0.0) continue;
        for (int j = 0; j <= model.num_states(); j++)
          model.transitions[s][j] = it->second.trans[s][j] / row_total;
      }
    }

    if (std::find(schedule.split_iterations.begin(), schedule.split_iterations.end(), iter) !=
        schedule.split_iterations.end()) {
      for (auto &[phone, model] : result.models.models)
        for (auto &mix : model.states) mix.split(schedule.max_components);
      stats.split_after = true;
    }
    result.iterations.push_back(std::move(stats));
  }

  result.models.validate();
  return result;
}

}  // namespace polyphone

#endif  // POLYPHONE_TRAIN_HPP
