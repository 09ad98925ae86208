// polyphone/decode.hpp

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

#ifndef POLYPHONE_DECODE_HPP
#define POLYPHONE_DECODE_HPP

#include <cmath>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "polyphone/align.hpp"
#include "polyphone/am.hpp"
#include "polyphone/common.hpp"
#include "polyphone/features.hpp"
#include "polyphone/gmm.hpp"
#include "polyphone/lexicon.hpp"
#include "polyphone/lm.hpp"

namespace polyphone {

// Scores combine unscaled acoustic log-likelihood with lm_weight-scaled LM
// log-probability, so beam widths live on the acoustic scale: with 40-dim
// features a frame can separate states by tens of nats, and useful beams
// are an order of magnitude wider than in systems that downscale acoustics.
struct DecodeConfig {
  double beam = 200.0;           // natural-log width; <= 0 disables pruning
  int max_active = 2000;         // token cap per frame; <= 0 disables
  double lm_weight = 10.0;       // scales LM log-probability (applied in nats)
  double word_insertion_penalty = 0.0;  // added (in nats) per emitted word
  double silence_prob = 0.5;     // optional silence prior between words
};

struct TranscriptWord {
  std::string word;
  double end_time = 0.0;  // time after the word's last frame
};

struct TranscriptResult {
  std::vector<std::string> words;
  double total_score = kLogZero;
  std::vector<TranscriptWord> timed_words;
};

// Time-synchronous decoding network: a phone prefix tree over the lexicon,
// expanded into HMM state chains (one chain per genre variant in tagged
// modes), with word-labelled re-entry arcs and an optional silence pass
// between words.  Arcs connect emitting states directly; junction closure is
// flattened at build time.
class DecodeNetwork {
 public:
  struct Arc {
    int to = -1;
    double weight = 0.0;
    int word = -1;  // lexicon word id emitted when crossing, -1 none
  };
  struct Final {
    double weight = 0.0;
    int word = -1;
  };

  std::vector<AlignGraph::EmissionKey> emissions;
  std::vector<int> emission_of;            // emitting node -> emission id
  std::vector<std::vector<Arc>> arcs;      // out-arcs per emitting node
  std::vector<Arc> start_arcs;             // from the virtual start
  std::vector<std::vector<Final>> finals;  // endings available per node
  std::vector<std::string> words;          // word id -> text
  size_t tree_node_count = 0;              // phone-level prefix tree size

  int num_nodes() const { return static_cast<int>(emission_of.size()); }
};

namespace decode_detail {

struct TreeNode {
  std::string base;                 // base phone ("" for root)
  std::map<std::string, int> children;
  std::vector<int> word_ends;       // word ids completing here
};

struct Chain {
  int first = -1;
  std::vector<std::pair<int, double>> exits;  // (node, exit log prob)
};

}  // namespace decode_detail

inline DecodeNetwork build_decode_network(const Lexicon &lex, const AcousticModelSet &models,
                                          const DecodeConfig &config = {}) {
  if (lex.entries().empty()) throw DataError("build_decode_network: empty lexicon");
  if (config.silence_prob <= 0.0 || config.silence_prob >= 1.0)
    throw DataError("build_decode_network: silence_prob must be in (0, 1)");

  DecodeNetwork net;

  // phone-level prefix tree
  std::vector<decode_detail::TreeNode> tree(1);
  for (const auto &[word, prons] : lex.entries()) {
    const int word_id = static_cast<int>(net.words.size());
    net.words.push_back(word);
    for (const auto &pron : prons) {
      int node = 0;
      for (const auto &ph : pron) {
        auto it = tree[node].children.find(ph);
        if (it == tree[node].children.end()) {
          tree.push_back({ph, {}, {}});
          it = tree[node].children.emplace(ph, static_cast<int>(tree.size()) - 1).first;
        }
        node = it->second;
      }
      tree[node].word_ends.push_back(word_id);
    }
  }
  net.tree_node_count = tree.size() - 1;  // root excluded

  std::map<std::pair<Phone, int>, int> emission_ids;
  auto emission_id = [&](const Phone &phone, int state) {
    auto key = std::make_pair(phone, state);
    auto it = emission_ids.find(key);
    if (it != emission_ids.end()) return it->second;
    const int id = static_cast<int>(net.emissions.size());
    net.emissions.push_back({phone, state});
    emission_ids.emplace(key, id);
    return id;
  };

  auto add_chain = [&](const Phone &phone) {
    const HmmPhoneModel &model = models.model(phone);
    const int n = model.num_states();
    const int base = net.num_nodes();
    for (int s = 0; s < n; s++) {
      net.emission_of.push_back(emission_id(phone, s));
      net.arcs.emplace_back();
      net.finals.emplace_back();
    }
    decode_detail::Chain chain;
    chain.first = base;
    for (int s = 0; s < n; s++) {
      for (int j = 0; j <= n; j++) {
        const double p = model.transitions[s][j];
        if (p <= 0.0) continue;
        if (j == n) {
          chain.exits.push_back({base + s, std::log(p)});
        } else {
          net.arcs[base + s].push_back({base + j, std::log(p), -1});
        }
      }
    }
    return chain;
  };

  // chains per tree node per genre variant
  std::vector<std::vector<decode_detail::Chain>> node_chains(tree.size());
  for (size_t t = 1; t < tree.size(); t++)
    for (const auto &v : models.speech_variants(tree[t].base)) node_chains[t].push_back(add_chain(v));
  std::vector<decode_detail::Chain> sil_chains;
  for (const auto &v : models.silence_variants()) sil_chains.push_back(add_chain(v));

  // connect parent chains to child chains (genre choice per phone instance)
  std::vector<int> root_entries;
  for (const auto &[ph, child] : tree[0].children)
    for (const auto &chain : node_chains[child]) root_entries.push_back(chain.first);

  for (size_t t = 0; t < tree.size(); t++) {
    for (const auto &[ph, child] : tree[t].children) {
      if (t == 0) continue;  // root entries handled via start/word-end arcs
      for (const auto &parent_chain : node_chains[t])
        for (const auto &[exit_node, exit_w] : parent_chain.exits)
          for (const auto &child_chain : node_chains[child])
            net.arcs[exit_node].push_back({child_chain.first, exit_w, -1});
    }
  }

  const double log_sil = std::log(config.silence_prob);
  const double log_bypass = std::log(1.0 - config.silence_prob);

  // word ends: exit -> (label) -> next word or silence; also a legal ending
  for (size_t t = 1; t < tree.size(); t++) {
    if (tree[t].word_ends.empty()) continue;
    for (const auto &chain : node_chains[t]) {
      for (const auto &[exit_node, exit_w] : chain.exits) {
        for (int word_id : tree[t].word_ends) {
          for (int entry : root_entries)
            net.arcs[exit_node].push_back({entry, exit_w + log_bypass, word_id});
          for (const auto &sc : sil_chains)
            net.arcs[exit_node].push_back({sc.first, exit_w + log_sil, word_id});
          net.finals[exit_node].push_back({exit_w + log_bypass, word_id});
        }
      }
    }
  }

  // silence exits re-enter the tree (next word) or end the utterance
  for (const auto &sc : sil_chains) {
    for (const auto &[exit_node, exit_w] : sc.exits) {
      for (int entry : root_entries) net.arcs[exit_node].push_back({entry, exit_w, -1});
      net.finals[exit_node].push_back({exit_w, -1});
    }
  }

  // virtual start: first word directly, or leading silence
  for (int entry : root_entries) net.start_arcs.push_back({entry, log_bypass, -1});
  for (const auto &sc : sil_chains) net.start_arcs.push_back({sc.first, log_sil, -1});

  return net;
}

namespace decode_detail {

struct WordLink {
  int word;
  size_t end_frame;
  std::shared_ptr<const WordLink> prev;
};

struct Token {
  double score = kLogZero;
  std::shared_ptr<const WordLink> links;
};

// Interned LM contexts (last order-1 emitted words, as LM token ids).
class LmContextTable {
 public:
  explicit LmContextTable(const NgramModel &lm) : lm_(lm) {
    std::vector<int> init(static_cast<size_t>(lm.order - 1), lm.bos_id);
    start_ = intern(init);
  }
  int start() const { return start_; }
  const std::vector<int> &context(int id) const { return contexts_[id]; }
  int advance(int id, int lm_token) {
    auto key = std::make_pair(id, lm_token);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    std::vector<int> next = contexts_[id];
    next.push_back(lm_token);
    const size_t max_len = static_cast<size_t>(lm_.order - 1);
    while (next.size() > max_len) next.erase(next.begin());
    const int res = intern(next);
    cache_.emplace(key, res);
    return res;
  }

 private:
  int intern(const std::vector<int> &ctx) {
    auto it = ids_.find(ctx);
    if (it != ids_.end()) return it->second;
    const int id = static_cast<int>(contexts_.size());
    contexts_.push_back(ctx);
    ids_.emplace(ctx, id);
    return id;
  }
  const NgramModel &lm_;
  std::vector<std::vector<int>> contexts_;
  std::map<std::vector<int>, int> ids_;
  std::map<std::pair<int, int>, int> cache_;
  int start_ = 0;
};

}  // namespace decode_detail

// Token-passing beam search combining acoustic likelihood with scaled LM
// log-probability and an insertion penalty at word ends.  With pruning
// disabled this is exact dynamic programming over (network state, LM
// context).
inline TranscriptResult beam_decode(const DecodeNetwork &net, const FeatureMatrix &features,
                                    const AcousticModelSet &models, const NgramModel &lm,
                                    const DecodeConfig &config = {}) {
  if (features.num_frames() == 0) throw DataError("beam_decode: empty features");
  const size_t T = features.num_frames();
  const double ln10 = std::log(10.0);

  decode_detail::LmContextTable contexts(lm);
  std::vector<int> word_lm_ids(net.words.size());
  for (size_t w = 0; w < net.words.size(); w++) word_lm_ids[w] = lm.id_or_unk(net.words[w]);

  auto lm_score = [&](int ctx_id, int lm_token) {
    return config.lm_weight * ln10 *
           lm.cond_log10_ids(contexts.context(ctx_id), lm_token);
  };

  std::vector<double> emission_scores(net.emissions.size());
  auto fill_emissions = [&](size_t t) {
    std::span<const double> x(features.frames[t]);
    for (size_t e = 0; e < net.emissions.size(); e++) {
      const auto &key = net.emissions[e];
      emission_scores[e] = models.model(key.phone).states[key.state].log_density(x);
    }
  };

  using Key = std::pair<int, int>;  // (node, lm context)
  std::map<Key, decode_detail::Token> cur, next;

  fill_emissions(0);
  for (const auto &arc : net.start_arcs) {
    decode_detail::Token tok;
    tok.score = arc.weight + emission_scores[net.emission_of[arc.to]];
    Key key{arc.to, contexts.start()};
    auto it = cur.find(key);
    if (it == cur.end() || tok.score > it->second.score) cur[key] = tok;
  }

  auto prune = [&](std::map<Key, decode_detail::Token> &tokens) {
    if (tokens.empty())
      throw DataError("beam_decode: all tokens pruned; widen --beam or raise --max-active");
    if (config.beam <= 0 && config.max_active <= 0) return;
    double best = kLogZero;
    for (const auto &[k, t] : tokens) best = std::max(best, t.score);
    if (config.beam > 0) {
      for (auto it = tokens.begin(); it != tokens.end();) {
        if (it->second.score < best - config.beam) {
          it = tokens.erase(it);
        } else {
          ++it;
        }
      }
    }
    if (config.max_active > 0 && tokens.size() > static_cast<size_t>(config.max_active)) {
      std::vector<std::pair<double, Key>> order;
      order.reserve(tokens.size());
      for (const auto &[k, t] : tokens) order.push_back({t.score, k});
      std::sort(order.begin(), order.end(), [](const auto &a, const auto &b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
      });
      std::map<Key, decode_detail::Token> kept;
      for (int i = 0; i < config.max_active; i++) kept.emplace(order[i].second, tokens[order[i].second]);
      tokens = std::move(kept);
    }
  };

  for (size_t t = 1; t < T; t++) {
    prune(cur);
    fill_emissions(t);
    next.clear();
    for (const auto &[key, tok] : cur) {
      const auto &[node, ctx] = key;
      for (const auto &arc : net.arcs[node]) {
        double score = tok.score + arc.weight;
        int new_ctx = ctx;
        std::shared_ptr<const decode_detail::WordLink> links = tok.links;
        if (arc.word >= 0) {
          score += lm_score(ctx, word_lm_ids[arc.word]) + config.word_insertion_penalty;
          new_ctx = contexts.advance(ctx, word_lm_ids[arc.word]);
          links = std::make_shared<decode_detail::WordLink>(
              decode_detail::WordLink{arc.word, t, links});
        }
        score += emission_scores[net.emission_of[arc.to]];
        Key nkey{arc.to, new_ctx};
        auto it = next.find(nkey);
        if (it == next.end() || score > it->second.score) {
          next[nkey] = {score, links};
        }
      }
    }
    std::swap(cur, next);
    if (cur.empty())
      throw DataError("beam_decode: all tokens pruned; widen --beam or raise --max-active");
  }

  double best_score = kLogZero;
  std::shared_ptr<const decode_detail::WordLink> best_links;
  bool found = false;
  for (const auto &[key, tok] : cur) {
    const auto &[node, ctx] = key;
    for (const auto &fin : net.finals[node]) {
      double score = tok.score + fin.weight;
      int fctx = ctx;
      std::shared_ptr<const decode_detail::WordLink> links = tok.links;
      if (fin.word >= 0) {
        score += lm_score(ctx, word_lm_ids[fin.word]) + config.word_insertion_penalty;
        fctx = contexts.advance(ctx, word_lm_ids[fin.word]);
        links = std::make_shared<decode_detail::WordLink>(
            decode_detail::WordLink{fin.word, T, links});
      }
      score += lm_score(fctx, lm.eos_id);
      if (score > best_score) {
        best_score = score;
        best_links = links;
        found = true;
      }
    }
  }
  if (!found)
    throw DataError("beam_decode: no complete hypothesis; widen --beam or raise --max-active");

  TranscriptResult result;
  result.total_score = best_score;
  std::vector<const decode_detail::WordLink *> rev;
  for (const auto *l = best_links.get(); l != nullptr; l = l->prev.get()) rev.push_back(l);
  for (auto it = rev.rbegin(); it != rev.rend(); ++it) {
    result.words.push_back(net.words[(*it)->word]);
    result.timed_words.push_back(
        {net.words[(*it)->word], features.frame_time((*it)->end_frame)});
  }
  return result;
}

}  // namespace polyphone

#endif  // POLYPHONE_DECODE_HPP
