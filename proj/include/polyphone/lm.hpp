// polyphone/lm.hpp

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

#ifndef POLYPHONE_LM_HPP
#define POLYPHONE_LM_HPP

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "polyphone/common.hpp"

namespace polyphone {

constexpr const char *kBosToken = "<s>";
constexpr const char *kEosToken = "</s>";
constexpr const char *kUnkToken = "<unk>";

// Back-off N-gram model with interpolated absolute discounting.  Stored
// probabilities are the full interpolated values in log10; scoring follows
// the standard back-off recursion (longest stored n-gram wins, otherwise
// back-off weight plus the shorter context's probability).
class NgramModel {
 public:
  int order = 3;
  std::vector<std::string> vocab;          // id -> token, ids sorted by token string
  std::map<std::string, int> token_ids;
  int bos_id = -1, eos_id = -1, unk_id = -1;

  // probs[n-1]: n-gram (context..., word) -> log10 probability
  std::vector<std::map<std::vector<int>, double>> probs;
  // backoffs[k-1]: context of length k -> log10 back-off weight
  std::vector<std::map<std::vector<int>, double>> backoffs;

  int id_or_unk(const std::string &token) const {
    auto it = token_ids.find(token);
    if (it != token_ids.end()) return it->second;
    if (unk_id < 0) throw DataError("OOV token '" + token + "' and model has no " + kUnkToken);
    return unk_id;
  }

  // log10 P(word | context); context is oldest-first and may be any length.
  double cond_log10_ids(std::span<const int> context, int word) const {
    const size_t max_ctx = static_cast<size_t>(order - 1);
    size_t start = context.size() > max_ctx ? context.size() - max_ctx : 0;
    std::vector<int> h(context.begin() + start, context.end());
    double backoff_sum = 0.0;
    while (true) {
      std::vector<int> key = h;
      key.push_back(word);
      const auto &level = probs[key.size() - 1];
      auto it = level.find(key);
      if (it != level.end()) return backoff_sum + it->second;
      if (h.empty())
        throw Error("NgramModel: unigram missing for token id " + std::to_string(word));
      const auto &bows = backoffs[h.size() - 1];
      auto bit = bows.find(h);
      if (bit != bows.end()) backoff_sum += bit->second;
      h.erase(h.begin());
    }
  }

  double cond_log10(const std::vector<std::string> &context, const std::string &word) const {
    std::vector<int> ids;
    ids.reserve(context.size());
    for (const auto &t : context) ids.push_back(id_or_unk(t));
    return cond_log10_ids(ids, id_or_unk(word));
  }

  // log10 probability of a sentence with begin/end padding.
  double sentence_logprob(const std::vector<std::string> &words) const {
    std::vector<int> ctx(static_cast<size_t>(order - 1), bos_id);
    double total = 0.0;
    for (const auto &w : words) {
      const int id = id_or_unk(w);
      total += cond_log10_ids(ctx, id);
      ctx.push_back(id);
      if (static_cast<int>(ctx.size()) > order - 1) ctx.erase(ctx.begin());
    }
    total += cond_log10_ids(ctx, eos_id);
    return total;
  }

  size_t ngram_count(int n) const { return probs[n - 1].size(); }
};

struct DiscountConfig {
  double discount = 0.75;
};

// Interpolated absolute discounting.  For a context h with continuation
// count c(h) and N1+ distinct continuations:
//   P(w|h) = max(c(h,w) - D, 0)/c(h) + gamma(h) * P(w|h'),
//   gamma(h) = D * N1+ / c(h)
// and at the unigram level the interpolation target is the uniform
// distribution over the predictable vocabulary (everything except <s>).
inline NgramModel train_ngram(const std::vector<std::vector<std::string>> &corpus, int order,
                              const DiscountConfig &discount_config = {}) {
  if (order < 1) throw DataError("train_ngram: order must be >= 1");
  size_t token_total = 0;
  for (const auto &line : corpus) token_total += line.size();
  if (token_total == 0) throw DataError("train_ngram: empty corpus");
  const double D = discount_config.discount;
  if (D <= 0.0 || D >= 1.0) throw DataError("train_ngram: discount must be in (0, 1)");

  NgramModel model;
  model.order = order;

  std::set<std::string> tokens(
      {std::string(kBosToken), std::string(kEosToken), std::string(kUnkToken)});
  for (const auto &line : corpus)
    for (const auto &w : line) tokens.insert(w);
  for (const auto &t : tokens) {
    model.token_ids[t] = static_cast<int>(model.vocab.size());
    model.vocab.push_back(t);
  }
  model.bos_id = model.token_ids[kBosToken];
  model.eos_id = model.token_ids[kEosToken];
  model.unk_id = model.token_ids[kUnkToken];

  // raw window counts per order; windows ending in <s> are never predicted
  std::vector<std::map<std::vector<int>, uint64_t>> counts(order);
  for (const auto &line : corpus) {
    std::vector<int> seq(static_cast<size_t>(order - 1), model.bos_id);
    for (const auto &w : line) seq.push_back(model.token_ids.at(w));
    seq.push_back(model.eos_id);
    for (int n = 1; n <= order; n++) {
      for (size_t i = 0; i + n <= seq.size(); i++) {
        std::vector<int> win(seq.begin() + i, seq.begin() + i + n);
        if (win.back() == model.bos_id) continue;
        counts[n - 1][win]++;
      }
    }
  }

  model.probs.assign(order, {});
  model.backoffs.assign(order > 1 ? order - 1 : 0, {});

  // unigrams: every vocab token except <s> gets a probability
  {
    uint64_t total = 0;
    for (const auto &[w, c] : counts[0]) total += c;
    const uint64_t distinct = counts[0].size();
    const double gamma = D * static_cast<double>(distinct) / static_cast<double>(total);
    const double uniform = 1.0 / static_cast<double>(model.vocab.size() - 1);  // minus <s>
    for (size_t id = 0; id < model.vocab.size(); id++) {
      const int w = static_cast<int>(id);
      if (w == model.bos_id) {
        model.probs[0][{w}] = -99.0;  // never predicted; ARPA convention
        continue;
      }
      auto it = counts[0].find({w});
      const double c = it == counts[0].end() ? 0.0 : static_cast<double>(it->second);
      const double p = std::max(c - D, 0.0) / static_cast<double>(total) + gamma * uniform;
      model.probs[0][{w}] = std::log10(p);
    }
  }

  for (int n = 2; n <= order; n++) {
    // context totals and distinct-continuation counts
    std::map<std::vector<int>, std::pair<uint64_t, uint64_t>> ctx;  // -> (total, distinct)
    for (const auto &[ngram, c] : counts[n - 1]) {
      std::vector<int> h(ngram.begin(), ngram.end() - 1);
      auto &e = ctx[h];
      e.first += c;
      e.second += 1;
    }
    for (const auto &[h, e] : ctx) {
      const double gamma =
          D * static_cast<double>(e.second) / static_cast<double>(e.first);
      model.backoffs[n - 2][h] = std::log10(gamma);
    }
    for (const auto &[ngram, c] : counts[n - 1]) {
      std::vector<int> h(ngram.begin(), ngram.end() - 1);
      const int w = ngram.back();
      const auto &e = ctx.at(h);
      const double total = static_cast<double>(e.first);
      const double gamma = D * static_cast<double>(e.second) / total;
      std::vector<int> shorter(h.begin() + 1, h.end());
      const double lower = std::pow(10.0, model.cond_log10_ids(shorter, w));
      const double p = std::max(static_cast<double>(c) - D, 0.0) / total + gamma * lower;
      model.probs[n - 1][ngram] = std::log10(p);
    }
  }
  return model;
}

inline double sentence_logprob(const NgramModel &model, const std::vector<std::string> &words) {
  return model.sentence_logprob(words);
}

// 10^(-logprob / tokens); end tokens counted, begin tokens not.
inline double perplexity(const NgramModel &model,
                         const std::vector<std::vector<std::string>> &corpus) {
  if (corpus.empty()) throw DataError("perplexity: empty corpus");
  double logprob = 0.0;
  size_t tokens = 0;
  for (const auto &line : corpus) {
    logprob += model.sentence_logprob(line);
    tokens += line.size() + 1;
  }
  if (tokens == 0) throw DataError("perplexity: empty corpus");
  return std::pow(10.0, -logprob / static_cast<double>(tokens));
}

// ---------------------------------------------------------------------------
// ARPA serialization.  Canonical form: n-grams sorted by token strings,
// probabilities formatted with six decimals, back-off column always present
// for orders below the maximum.  export -> import -> export is
// byte-identical.
// ---------------------------------------------------------------------------

inline std::string export_arpa(const NgramModel &model) {
  std::string out = "\\data\\\n";
  for (int n = 1; n <= model.order; n++)
    out += strprintf("ngram %d=%zu\n", n, model.probs[n - 1].size());
  for (int n = 1; n <= model.order; n++) {
    out += strprintf("\n\\%d-grams:\n", n);
    for (const auto &[ngram, logp] : model.probs[n - 1]) {
      out += strprintf("%.6f\t", logp);
      for (size_t i = 0; i < ngram.size(); i++) {
        if (i) out += ' ';
        out += model.vocab[ngram[i]];
      }
      if (n < model.order) {
        double bow = 0.0;
        auto it = model.backoffs[n - 1].find(ngram);
        if (it != model.backoffs[n - 1].end()) bow = it->second;
        if (bow == 0.0) bow = 0.0;  // canonicalize -0
        out += strprintf("\t%.6f", bow);
      }
      out += '\n';
    }
  }
  out += "\n\\end\\\n";
  return out;
}

inline NgramModel import_arpa_text(const std::string &text, const std::string &origin) {
  std::istringstream iss(text);
  std::string line;
  int lineno = 0;
  auto next_line = [&](bool required) -> bool {
    while (std::getline(iss, line)) {
      lineno++;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      return true;
    }
    if (required) throw DataError(origin + ": unexpected end of ARPA file");
    return false;
  };
  auto fail = [&](const std::string &msg) -> void {
    throw DataError(strprintf("%s:%d: %s", origin.c_str(), lineno, msg.c_str()));
  };

  // header
  bool found_data = false;
  while (next_line(true)) {
    if (trim(line) == "\\data\\") {
      found_data = true;
      break;
    }
    if (!trim(line).empty()) fail("expected \\data\\ header");
  }
  if (!found_data) fail("missing \\data\\ header");

  std::vector<size_t> declared;
  while (next_line(true)) {
    std::string t = trim(line);
    if (t.empty()) break;
    int n = 0;
    size_t cnt = 0;
    if (std::sscanf(t.c_str(), "ngram %d=%zu", &n, &cnt) != 2) fail("bad ngram count line");
    if (n != static_cast<int>(declared.size()) + 1) fail("ngram counts out of order");
    declared.push_back(cnt);
  }
  if (declared.empty()) fail("no ngram counts declared");
  const int order = static_cast<int>(declared.size());

  // first pass body into string-keyed storage, then intern ids
  struct RawEntry {
    std::vector<std::string> tokens;
    double prob;
    double bow;
    bool has_bow;
  };
  std::vector<std::vector<RawEntry>> raw(order);
  int current = 0;
  bool ended = false;
  while (next_line(false)) {
    std::string t = trim(line);
    if (t.empty()) continue;
    if (t == "\\end\\") {
      ended = true;
      break;
    }
    int n = 0;
    if (std::sscanf(t.c_str(), "\\%d-grams:", &n) == 1) {
      if (n < 1 || n > order) fail("unexpected n-gram section");
      current = n;
      continue;
    }
    if (current == 0) fail("n-gram entry before any section header");
    auto cols = split_whitespace(t);
    // prob + n tokens [+ bow]
    if (cols.size() != static_cast<size_t>(current) + 1 &&
        cols.size() != static_cast<size_t>(current) + 2)
      fail(strprintf("expected %d tokens with probability (and optional back-off)", current));
    RawEntry e;
    try {
      e.prob = std::stod(cols[0]);
    } catch (const std::exception &) {
      fail("bad probability");
    }
    e.tokens.assign(cols.begin() + 1, cols.begin() + 1 + current);
    e.has_bow = cols.size() == static_cast<size_t>(current) + 2;
    e.bow = 0.0;
    if (e.has_bow) {
      if (current == order) fail("back-off weight on highest-order n-gram");
      try {
        e.bow = std::stod(cols.back());
      } catch (const std::exception &) {
        fail("bad back-off weight");
      }
    }
    raw[current - 1].push_back(std::move(e));
  }
  if (!ended) fail("missing \\end\\ marker");
  for (int n = 1; n <= order; n++)
    if (raw[n - 1].size() != declared[n - 1])
      throw DataError(strprintf("%s: \\data\\ declares %zu %d-grams but section has %zu",
                                origin.c_str(), declared[n - 1], n, raw[n - 1].size()));

  NgramModel model;
  model.order = order;
  std::set<std::string> tokens;
  for (const auto &e : raw[0]) {
    if (e.tokens.size() != 1) throw Error("internal: bad unigram");
    tokens.insert(e.tokens[0]);
  }
  for (const auto &t : tokens) {
    model.token_ids[t] = static_cast<int>(model.vocab.size());
    model.vocab.push_back(t);
  }
  auto lookup = [&model, &origin](const std::string &t) {
    auto it = model.token_ids.find(t);
    if (it == model.token_ids.end())
      throw DataError(origin + ": token '" + t + "' appears in an n-gram but has no unigram");
    return it->second;
  };
  model.bos_id = model.token_ids.count(kBosToken) ? model.token_ids[kBosToken] : -1;
  model.eos_id = model.token_ids.count(kEosToken) ? model.token_ids[kEosToken] : -1;
  model.unk_id = model.token_ids.count(kUnkToken) ? model.token_ids[kUnkToken] : -1;
  if (model.eos_id < 0) throw DataError(origin + ": model lacks " + kEosToken);
  if (model.bos_id < 0) throw DataError(origin + ": model lacks " + kBosToken);

  model.probs.assign(order, {});
  model.backoffs.assign(order > 1 ? order - 1 : 0, {});
  for (int n = 1; n <= order; n++) {
    for (const auto &e : raw[n - 1]) {
      std::vector<int> ids;
      ids.reserve(e.tokens.size());
      for (const auto &t : e.tokens) ids.push_back(lookup(t));
      if (!model.probs[n - 1].emplace(ids, e.prob).second)
        throw DataError(origin + ": duplicate n-gram entry");
      if (n < order && e.has_bow && e.bow != 0.0) model.backoffs[n - 1][ids] = e.bow;
      else if (n < order && e.has_bow) model.backoffs[n - 1][ids] = 0.0;
    }
  }
  return model;
}

inline NgramModel import_arpa(const std::filesystem::path &path) {
  return import_arpa_text(read_text_file(path), path.string());
}

inline void export_arpa_file(const NgramModel &model, const std::filesystem::path &path) {
  write_text_file_atomic(path, export_arpa(model));
}

}  // namespace polyphone

#endif  // POLYPHONE_LM_HPP
