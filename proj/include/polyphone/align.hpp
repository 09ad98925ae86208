// polyphone/align.hpp

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

#ifndef POLYPHONE_ALIGN_HPP
#define POLYPHONE_ALIGN_HPP

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "polyphone/am.hpp"
#include "polyphone/audio.hpp"
#include "polyphone/common.hpp"
#include "polyphone/features.hpp"
#include "polyphone/gmm.hpp"
#include "polyphone/lexicon.hpp"

namespace polyphone {

// Utterance HMM graph.  Nodes are emitting HMM states; arcs carry log
// weights (model transition probabilities and the optional-silence priors).
// Every complete path spells the full word sequence in order.  Node indices
// are topologically ordered by construction: arcs go forward except
// self-loops.
struct AlignGraph {
  struct Node {
    int emission_id = -1;  // index into emissions
    int word = -1;         // word position in the lyrics, -1 for silence
    int slot = -1;         // phone-instance id within the utterance
    int genre = -1;        // genre variant of the slot, -1 if untagged
  };
  struct EmissionKey {
    Phone phone;
    int state = 0;
  };
  struct Pred {
    int from = -1;
    double weight = 0.0;
  };

  std::vector<Node> nodes;
  std::vector<EmissionKey> emissions;
  std::vector<std::vector<Pred>> preds;          // canonical order: self first, then ascending
  std::vector<std::pair<int, double>> start_arcs;
  std::vector<std::pair<int, double>> final_arcs;
  std::vector<std::string> words;
  std::vector<Phone> slot_phones;  // phone (with tag) per slot
  int min_frames = 0;

  int num_nodes() const { return static_cast<int>(nodes.size()); }

  // Shortest feasible path length in frames (self-loops ignored).
  void compute_min_frames() {
    constexpr int kInf = 1 << 29;
    std::vector<int> dist(nodes.size(), kInf);
    for (const auto &[n, w] : start_arcs) dist[n] = std::min(dist[n], 1);
    for (size_t n = 0; n < nodes.size(); n++) {
      for (const auto &p : preds[n]) {
        if (p.from == static_cast<int>(n) || p.from < 0) continue;
        if (dist[p.from] < kInf) dist[n] = std::min(dist[n], dist[p.from] + 1);
      }
    }
    int best = kInf;
    for (const auto &[n, w] : final_arcs) best = std::min(best, dist[n]);
    min_frames = best >= kInf ? kInf : best;
  }

  void sort_preds_canonical() {
    for (size_t n = 0; n < preds.size(); n++) {
      auto &ps = preds[n];
      std::stable_sort(ps.begin(), ps.end(), [n](const Pred &a, const Pred &b) {
        const long ra = a.from == static_cast<int>(n) ? -1L : a.from;
        const long rb = b.from == static_cast<int>(n) ? -1L : b.from;
        return ra < rb;
      });
    }
  }
};

struct GraphOptions {
  bool interword_silence = true;
  double interword_sil_prob = 0.5;
  double edge_sil_prob = 0.5;
  // Constrain all genre-tagged units to one genre (training graphs, or the
  // per-song ablation).  Unset: every tagged slot offers all genres in
  // parallel and the Viterbi path picks per phone instance.
  std::optional<GenreBroadclass> fixed_genre;
  OovPolicy oov_policy = OovPolicy::strict;
};

namespace align_detail {

using Exit = std::pair<int, double>;  // (node, pending log weight)

class GraphBuilder {
 public:
  GraphBuilder(const AcousticModelSet &models, AlignGraph *graph)
      : models_(models), graph_(graph) {}

  int emission_id(const Phone &phone, int state) {
    auto key = std::make_pair(phone, state);
    auto it = emission_ids_.find(key);
    if (it != emission_ids_.end()) return it->second;
    int id = static_cast<int>(graph_->emissions.size());
    graph_->emissions.push_back({phone, state});
    emission_ids_.emplace(key, id);
    return id;
  }

  void add_arc(int from, int to, double w) {
    if (from < 0) {
      graph_->start_arcs.push_back({to, w});
    } else {
      graph_->preds[to].push_back({from, w});
    }
  }

  // Appends one phone instance; returns its exit set.
  std::vector<Exit> add_phone(const Phone &phone, int word, const std::vector<Exit> &entries) {
    const HmmPhoneModel &model = models_.model(phone);
    const int n = model.num_states();
    const int base = graph_->num_nodes();
    const int slot = static_cast<int>(graph_->slot_phones.size());
    graph_->slot_phones.push_back(phone);
    for (int s = 0; s < n; s++) {
      AlignGraph::Node node;
      node.emission_id = emission_id(phone, s);
      node.word = word;
      node.slot = slot;
      node.genre = phone.genre_tag ? static_cast<int>(*phone.genre_tag) : -1;
      graph_->nodes.push_back(node);
      graph_->preds.emplace_back();
    }
    for (const auto &[src, w] : entries) add_arc(src, base, w);
    std::vector<Exit> exits;
    for (int s = 0; s < n; s++) {
      for (int j = 0; j <= n; j++) {
        const double p = model.transitions[s][j];
        if (p <= 0.0) continue;
        if (j == n) {
          exits.push_back({base + s, std::log(p)});
        } else {
          add_arc(base + s, base + j, std::log(p));
        }
      }
    }
    return exits;
  }

  // One slot that offers the given variants in parallel; exits merged.
  std::vector<Exit> add_variant_slot(const std::vector<Phone> &variants, int word,
                                     const std::vector<Exit> &entries) {
    std::vector<Exit> exits;
    for (const auto &v : variants) {
      auto e = add_phone(v, word, entries);
      exits.insert(exits.end(), e.begin(), e.end());
    }
    return exits;
  }

  // Optional silence: bypass with log(1-p), or pass through any silence
  // variant with log(p).
  std::vector<Exit> add_optional_silence(const std::vector<Exit> &entries,
                                         const std::vector<Phone> &variants, double p) {
    std::vector<Exit> out;
    const double log_bypass = std::log(1.0 - p);
    const double log_through = std::log(p);
    for (const auto &[n, w] : entries) out.push_back({n, w + log_bypass});
    std::vector<Exit> sil_entries;
    for (const auto &[n, w] : entries) sil_entries.push_back({n, w + log_through});
    for (const auto &v : variants) {
      auto e = add_phone(v, -1, sil_entries);
      out.insert(out.end(), e.begin(), e.end());
    }
    return out;
  }

 private:
  const AcousticModelSet &models_;
  AlignGraph *graph_;
  std::map<std::pair<Phone, int>, int> emission_ids_;
};

inline std::vector<Phone> silence_variants_for(const AcousticModelSet &models,
                                               const GraphOptions &options) {
  if (options.fixed_genre) return {models.silence_phone(*options.fixed_genre)};
  return models.silence_variants();
}

inline std::vector<Phone> speech_variants_for(const AcousticModelSet &models,
                                              const std::string &base,
                                              const GraphOptions &options) {
  if (options.fixed_genre) return {models.speech_phone(base, *options.fixed_genre)};
  return models.speech_variants(base);
}

}  // namespace align_detail

// Builds the forced-alignment graph for a word sequence: optional silence
// at the start and end, optional silence between words, pronunciation
// alternatives and genre variants in parallel.
inline AlignGraph build_align_graph(const std::vector<std::string> &lyrics, const Lexicon &lex,
                                    const AcousticModelSet &models,
                                    const GraphOptions &options = {}) {
  if (lyrics.empty()) throw DataError("build_align_graph: empty lyrics");
  auto prons = words_to_phone_sequences(lex, lyrics, options.oov_policy);

  AlignGraph graph;
  graph.words = lyrics;
  align_detail::GraphBuilder builder(models, &graph);
  const auto sil_vars = align_detail::silence_variants_for(models, options);

  std::vector<align_detail::Exit> frontier = {{-1, 0.0}};
  frontier = builder.add_optional_silence(frontier, sil_vars, options.edge_sil_prob);

  for (size_t w = 0; w < lyrics.size(); w++) {
    if (w > 0 && options.interword_silence)
      frontier = builder.add_optional_silence(frontier, sil_vars, options.interword_sil_prob);
    std::vector<align_detail::Exit> word_exits;
    for (const auto &pron : prons[w]) {
      std::vector<align_detail::Exit> cursor = frontier;
      for (const auto &base : pron) {
        const auto variants = align_detail::speech_variants_for(models, base, options);
        cursor = builder.add_variant_slot(variants, static_cast<int>(w), cursor);
      }
      word_exits.insert(word_exits.end(), cursor.begin(), cursor.end());
    }
    frontier = std::move(word_exits);
  }

  frontier = builder.add_optional_silence(frontier, sil_vars, options.edge_sil_prob);
  graph.final_arcs = frontier;
  graph.sort_preds_canonical();
  graph.compute_min_frames();
  return graph;
}

// Silence-only graph for non-vocal training segments: a single mandatory
// pass through one of the silence variants.
inline AlignGraph build_silence_graph(const AcousticModelSet &models,
                                      const GraphOptions &options = {}) {
  AlignGraph graph;
  align_detail::GraphBuilder builder(models, &graph);
  const auto sil_vars = align_detail::silence_variants_for(models, options);
  std::vector<align_detail::Exit> frontier = {{-1, 0.0}};
  frontier = builder.add_variant_slot(sil_vars, -1, frontier);
  graph.final_arcs = frontier;
  graph.sort_preds_canonical();
  graph.compute_min_frames();
  return graph;
}

// One aligned word with its time span.
struct AlignedWord {
  std::string word;
  double start = 0.0;
  double end = 0.0;
  double avg_loglik = 0.0;
  std::string genre_path;  // genre per phone instance, comma-joined; "-" if untagged
};

struct AlignedPhone {
  std::string phone;  // tagged name, e.g. "AA@pop"
  int word = -1;
  double start = 0.0;
  double end = 0.0;
};

struct AlignmentResult {
  std::vector<AlignedWord> words;
  std::vector<AlignedPhone> phones;
  double total_loglik = kLogZero;
  std::vector<int> state_path;  // node index per frame
};

struct ViterbiOptions {
  double beam = 0.0;  // 0 disables pruning
};

// Exact max-probability state path.  Ties break deterministically: among
// equal-score predecessors the self-loop wins, then the lowest node index;
// this prefers paths that enter each state as early as possible.
inline std::pair<std::vector<int>, double> viterbi_best_path(const AlignGraph &graph,
                                                             const FeatureMatrix &features,
                                                             const AcousticModelSet &models,
                                                             const ViterbiOptions &options = {}) {
  const int n_nodes = graph.num_nodes();
  const size_t T = features.num_frames();
  if (T == 0) throw DataError("viterbi_align: empty feature matrix");
  if (static_cast<int>(T) < graph.min_frames)
    throw DataError(strprintf(
        "viterbi_align: no feasible path; graph needs at least %d frames but utterance has %zu",
        graph.min_frames, T));

  std::vector<double> emission_scores(graph.emissions.size());
  auto fill_emissions = [&](size_t t) {
    std::span<const double> x(features.frames[t]);
    for (size_t e = 0; e < graph.emissions.size(); e++) {
      const auto &key = graph.emissions[e];
      emission_scores[e] = models.model(key.phone).states[key.state].log_density(x);
    }
  };

  std::vector<double> prev(n_nodes, kLogZero), cur(n_nodes, kLogZero);
  std::vector<std::vector<int32_t>> backptr(T, std::vector<int32_t>(n_nodes, -1));

  fill_emissions(0);
  for (const auto &[n, w] : graph.start_arcs) {
    const double cand = w + emission_scores[graph.nodes[n].emission_id];
    if (cand > prev[n]) prev[n] = cand;
  }

  for (size_t t = 1; t < T; t++) {
    fill_emissions(t);
    double best_prev = kLogZero;
    if (options.beam > 0)
      for (double v : prev) best_prev = std::max(best_prev, v);
    for (int n = 0; n < n_nodes; n++) {
      double best = kLogZero;
      int from = -1;
      for (const auto &p : graph.preds[n]) {
        const double pv = prev[p.from];
        if (pv == kLogZero) continue;
        if (options.beam > 0 && pv < best_prev - options.beam) continue;
        const double cand = pv + p.weight;
        if (cand > best) {
          best = cand;
          from = p.from;
        }
      }
      cur[n] = best == kLogZero ? kLogZero : best + emission_scores[graph.nodes[n].emission_id];
      backptr[t][n] = from;
    }
    std::swap(prev, cur);
  }

  double best_final = kLogZero;
  int best_node = -1;
  for (const auto &[n, w] : graph.final_arcs) {
    if (prev[n] == kLogZero) continue;
    const double cand = prev[n] + w;
    if (cand > best_final) {
      best_final = cand;
      best_node = n;
    }
  }
  if (best_node < 0)
    throw DataError("viterbi_align: no feasible path survived (beam too narrow?)");

  std::vector<int> path(T);
  path[T - 1] = best_node;
  for (size_t t = T - 1; t > 0; t--) path[t - 1] = backptr[t][path[t]];
  return {path, best_final};
}

// Runs Viterbi and converts the state path into word and phone spans.
// Word start = time of the first frame of its first phone state; end = time
// after its last frame.
inline AlignmentResult viterbi_align(const AlignGraph &graph, const FeatureMatrix &features,
                                     const AcousticModelSet &models,
                                     const ViterbiOptions &options = {}) {
  auto [path, total] = viterbi_best_path(graph, features, models, options);
  const size_t T = path.size();

  // Per-frame score increments along the path, for per-word averages.
  std::vector<double> increment(T, 0.0);
  for (size_t t = 0; t < T; t++) {
    const auto &node = graph.nodes[path[t]];
    double arc_w = kLogZero;
    if (t == 0) {
      for (const auto &[n, w] : graph.start_arcs)
        if (n == path[0]) arc_w = std::max(arc_w, w);
    } else {
      for (const auto &p : graph.preds[path[t]])
        if (p.from == path[t - 1]) arc_w = std::max(arc_w, p.weight);
    }
    const double emit = models.model(graph.emissions[node.emission_id].phone)
                            .states[graph.emissions[node.emission_id].state]
                            .log_density(std::span<const double>(features.frames[t]));
    increment[t] = arc_w + emit;
  }

  AlignmentResult result;
  result.total_loglik = total;
  result.state_path = path;

  // Group frames into phone-instance spans.
  struct Span {
    int slot, word;
    size_t begin, end;  // frame range, end exclusive
  };
  std::vector<Span> spans;
  for (size_t t = 0; t < T; t++) {
    const auto &node = graph.nodes[path[t]];
    if (!spans.empty() && spans.back().slot == node.slot) {
      spans.back().end = t + 1;
    } else {
      spans.push_back({node.slot, node.word, t, t + 1});
    }
  }

  for (const auto &sp : spans) {
    AlignedPhone ph;
    ph.phone = graph.slot_phones[sp.slot].name();
    ph.word = sp.word;
    ph.start = features.frame_time(sp.begin);
    ph.end = features.frame_time(sp.end);
    result.phones.push_back(ph);
  }

  for (size_t w = 0; w < graph.words.size(); w++) {
    AlignedWord word;
    word.word = graph.words[w];
    bool found = false;
    double ll = 0.0;
    size_t frames = 0;
    std::string genre_path;
    for (const auto &sp : spans) {
      if (sp.word != static_cast<int>(w)) continue;
      if (!found) {
        word.start = features.frame_time(sp.begin);
        found = true;
      }
      word.end = features.frame_time(sp.end);
      for (size_t t = sp.begin; t < sp.end; t++) ll += increment[t];
      frames += sp.end - sp.begin;
      const int g = graph.nodes[path[sp.begin]].genre;
      if (!genre_path.empty()) genre_path += ',';
      genre_path += g < 0 ? "-" : genre_name(static_cast<GenreBroadclass>(g));
    }
    if (!found) throw Error("viterbi_align: path does not visit word " + word.word);
    word.avg_loglik = ll / static_cast<double>(frames);
    word.genre_path = genre_path;
    result.words.push_back(std::move(word));
  }
  return result;
}

struct AlignSongOptions {
  GraphOptions graph;
  ViterbiOptions viterbi;
  bool per_song_genre = false;  // ablation: one genre for the whole song
};

// Front end + graph + Viterbi for one song.
inline AlignmentResult align_song(const AudioBuffer &audio, const std::vector<std::string> &lyrics,
                                  const AcousticModelSet &models, const Lexicon &lex,
                                  const FeatureConfig &feature_config,
                                  const AlignSongOptions &options = {}) {
  if (models.feature_fingerprint != feature_config.fingerprint())
    throw DataError("align_song: feature fingerprint mismatch\n  model:   " +
                    models.feature_fingerprint + "\n  current: " + feature_config.fingerprint());
  FeatureMatrix feats = apply_cmvn(extract_mfcc(audio, feature_config));

  if (options.per_song_genre && models.mode != ModelMode::genre_agnostic) {
    AlignmentResult best;
    for (auto g : kAllGenres) {
      GraphOptions go = options.graph;
      go.fixed_genre = g;
      AlignGraph graph = build_align_graph(lyrics, lex, models, go);
      AlignmentResult r = viterbi_align(graph, feats, models, options.viterbi);
      if (r.total_loglik > best.total_loglik) best = std::move(r);
    }
    return best;
  }
  AlignGraph graph = build_align_graph(lyrics, lex, models, options.graph);
  return viterbi_align(graph, feats, models, options.viterbi);
}

// Output TSV: start, end, word, average log-likelihood, genre path.
inline std::string alignment_to_tsv(const AlignmentResult &result) {
  std::string out;
  for (const auto &w : result.words)
    out += strprintf("%.6f\t%.6f\t%s\t%.4f\t%s\n", w.start, w.end, w.word.c_str(), w.avg_loglik,
                     w.genre_path.c_str());
  return out;
}

inline nlohmann::json alignment_to_json(const AlignmentResult &result) {
  nlohmann::json j;
  j["total_loglik"] = result.total_loglik;
  j["words"] = nlohmann::json::array();
  for (const auto &w : result.words) {
    j["words"].push_back({{"word", w.word},
                          {"start", w.start},
                          {"end", w.end},
                          {"avg_loglik", w.avg_loglik},
                          {"genre_path", w.genre_path}});
  }
  j["phones"] = nlohmann::json::array();
  for (const auto &p : result.phones) {
    j["phones"].push_back(
        {{"phone", p.phone}, {"word", p.word}, {"start", p.start}, {"end", p.end}});
  }
  return j;
}

}  // namespace polyphone

#endif  // POLYPHONE_ALIGN_HPP
