// polyphone/lexicon.hpp

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

#ifndef POLYPHONE_LEXICON_HPP
#define POLYPHONE_LEXICON_HPP

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "polyphone/common.hpp"
#include "polyphone/genre.hpp"

namespace polyphone {

constexpr const char *kSilencePhone = "SIL";

// A phone unit, optionally carrying a genre label.  A tagged phone's
// identity is (base, genre): "AA@pop" and "AA@metal" are distinct model
// units.  Untagged phones appear in raw lexicon input and in the
// genre-agnostic system.
struct Phone {
  std::string base;
  std::optional<GenreBroadclass> genre_tag;
  bool is_silence = false;

  std::string name() const {
    if (genre_tag) return base + "@" + genre_name(*genre_tag);
    return base;
  }

  bool operator<(const Phone &o) const {
    if (base != o.base) return base < o.base;
    int a = genre_tag ? static_cast<int>(*genre_tag) : -1;
    int b = o.genre_tag ? static_cast<int>(*o.genre_tag) : -1;
    return a < b;
  }
  bool operator==(const Phone &o) const {
    return base == o.base && genre_tag == o.genre_tag && is_silence == o.is_silence;
  }

  static Phone silence(std::optional<GenreBroadclass> g = std::nullopt) {
    return Phone{kSilencePhone, g, true};
  }
  static Phone speech(const std::string &base, std::optional<GenreBroadclass> g = std::nullopt) {
    return Phone{base, g, false};
  }

  // Parses "AA", "AA@pop", "SIL@metal".
  static Phone parse(const std::string &name) {
    size_t at = name.find('@');
    std::string base = at == std::string::npos ? name : name.substr(0, at);
    std::optional<GenreBroadclass> tag;
    if (at != std::string::npos) tag = parse_genre(name.substr(at + 1));
    Phone p{base, tag, base == kSilencePhone};
    if (p.base.empty()) throw DataError("empty phone name '" + name + "'");
    return p;
  }
};

enum class OovPolicy { strict, spell };

// Letter-name pronunciations used by the "spell" OOV policy.  The same
// table ships as data/letter_names.tsv for inspection.
inline const std::map<char, std::vector<std::string>> &letter_name_phones() {
  static const std::map<char, std::vector<std::string>> table = {
      {'A', {"EY"}},          {'B', {"B", "IY"}},   {'C', {"S", "IY"}},
      {'D', {"D", "IY"}},     {'E', {"IY"}},        {'F', {"EH", "F"}},
      {'G', {"JH", "IY"}},    {'H', {"EY", "CH"}},  {'I', {"AY"}},
      {'J', {"JH", "EY"}},    {'K', {"K", "EY"}},   {'L', {"EH", "L"}},
      {'M', {"EH", "M"}},     {'N', {"EH", "N"}},   {'O', {"OW"}},
      {'P', {"P", "IY"}},     {'Q', {"K", "Y", "UW"}}, {'R', {"AA", "R"}},
      {'S', {"EH", "S"}},     {'T', {"T", "IY"}},   {'U', {"Y", "UW"}},
      {'V', {"V", "IY"}},     {'W', {"D", "AH", "B", "AH", "L", "Y", "UW"}},
      {'X', {"EH", "K", "S"}}, {'Y', {"W", "AY"}},  {'Z', {"Z", "IY"}},
  };
  return table;
}

using Pronunciation = std::vector<std::string>;  // base phone symbols

// Pronunciation lexicon: word -> alternative pronunciations, plus the phone
// inventory.  Words are uppercased for lookup.  expand_genre_phones() adds
// genre-tagged copies of every base phone to the inventory; entries stay in
// base phones, tag selection happens at graph construction.
class Lexicon {
 public:
  void add_entry(const std::string &word, const Pronunciation &pron, WarningLog *warnings = nullptr) {
    if (pron.empty()) throw DataError("empty pronunciation for word '" + word + "'");
    std::string w = to_upper(trim(word));
    if (w.empty()) throw DataError("empty word in lexicon entry");
    auto &prons = entries_[w];
    for (const auto &existing : prons) {
      if (existing == pron) {
        if (warnings)
          warnings->add("duplicate-pronunciation",
                        "duplicate (word, pronunciation) pair for '" + w + "' ignored");
        return;
      }
    }
    prons.push_back(pron);
    for (const auto &ph : pron) base_inventory_.insert(ph);
  }

  bool has_word(const std::string &word) const { return entries_.count(to_upper(trim(word))) > 0; }

  const std::vector<Pronunciation> &pronunciations(const std::string &word) const {
    auto it = entries_.find(to_upper(trim(word)));
    if (it == entries_.end()) throw DataError("word not in lexicon: '" + word + "'");
    return it->second;
  }

  const std::map<std::string, std::vector<Pronunciation>> &entries() const { return entries_; }
  const std::set<std::string> &base_inventory() const { return base_inventory_; }

  std::vector<std::string> vocabulary() const {
    std::vector<std::string> v;
    v.reserve(entries_.size());
    for (const auto &[w, _] : entries_) v.push_back(w);
    return v;
  }

  // Genre-tagged phone inventory: |genres| tagged copies of each base phone
  // plus |genres| tagged silence phones.  Idempotent.
  std::set<Phone> expanded_inventory(const std::set<GenreBroadclass> &genres) const {
    if (genres.empty()) throw DataError("expand_genre_phones: genre set must be non-empty");
    std::set<Phone> inv;
    for (const auto &base : base_inventory_)
      for (auto g : genres) inv.insert(Phone::speech(base, g));
    for (auto g : genres) inv.insert(Phone::silence(g));
    return inv;
  }

  std::set<Phone> untagged_inventory() const {
    std::set<Phone> inv;
    for (const auto &base : base_inventory_) inv.insert(Phone::speech(base));
    inv.insert(Phone::silence());
    return inv;
  }

  std::string serialize() const {
    std::string out;
    for (const auto &[word, prons] : entries_) {
      for (const auto &p : prons) {
        out += word;
        out += '\t';
        for (size_t i = 0; i < p.size(); i++) {
          if (i) out += ' ';
          out += p[i];
        }
        out += '\n';
      }
    }
    return out;
  }

 private:
  std::map<std::string, std::vector<Pronunciation>> entries_;
  std::set<std::string> base_inventory_;
};

inline Lexicon parse_lexicon_text(const std::string &text, const std::string &origin,
                                  WarningLog *warnings = nullptr) {
  Lexicon lex;
  std::istringstream iss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(iss, line)) {
    lineno++;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty() || trim(line).front() == '#') continue;
    size_t tab = line.find('\t');
    if (tab == std::string::npos)
      throw DataError(strprintf("%s:%d: expected WORD<TAB>PHONES", origin.c_str(), lineno));
    std::string word = trim(line.substr(0, tab));
    Pronunciation pron = split_whitespace(line.substr(tab + 1));
    if (pron.empty())
      throw DataError(strprintf("%s:%d: empty pronunciation for '%s'", origin.c_str(), lineno,
                                word.c_str()));
    for (const auto &ph : pron) {
      if (ph == kSilencePhone)
        throw DataError(strprintf("%s:%d: SIL is reserved and cannot appear in a pronunciation",
                                  origin.c_str(), lineno));
    }
    lex.add_entry(word, pron, warnings);
  }
  return lex;
}

inline Lexicon load_lexicon(const std::filesystem::path &path, WarningLog *warnings = nullptr) {
  return parse_lexicon_text(read_text_file(path), path.string(), warnings);
}

// Maps each word to its pronunciation alternatives.  OOV handling:
// "strict" raises naming the word; "spell" concatenates letter-name
// pronunciations of the word's characters (apostrophes skipped).
inline std::vector<std::vector<Pronunciation>> words_to_phone_sequences(
    const Lexicon &lex, const std::vector<std::string> &words, OovPolicy policy = OovPolicy::strict,
    WarningLog *warnings = nullptr) {
  std::vector<std::vector<Pronunciation>> out;
  out.reserve(words.size());
  for (const auto &word : words) {
    if (lex.has_word(word)) {
      out.push_back(lex.pronunciations(word));
      continue;
    }
    if (policy == OovPolicy::strict)
      throw DataError("OOV word under strict policy: '" + word + "'");
    Pronunciation spelled;
    for (char c : to_upper(trim(word))) {
      if (c == '\'') continue;
      auto it = letter_name_phones().find(c);
      if (it == letter_name_phones().end())
        throw DataError(strprintf("cannot spell OOV word '%s': no letter pronunciation for '%c'",
                                  word.c_str(), c));
      spelled.insert(spelled.end(), it->second.begin(), it->second.end());
    }
    if (spelled.empty()) throw DataError("cannot spell empty OOV word '" + word + "'");
    if (warnings) warnings->add("oov-spelled", "OOV word '" + word + "' spelled out");
    out.push_back({spelled});
  }
  return out;
}

// phones.txt: one phone per line, BASE@genre naming for tagged phones.
inline std::string serialize_phone_inventory(const std::set<Phone> &inventory) {
  std::string out;
  for (const auto &p : inventory) {
    out += p.name();
    out += '\n';
  }
  return out;
}

inline std::set<Phone> parse_phone_inventory(const std::string &text) {
  std::set<Phone> inv;
  std::istringstream iss(text);
  std::string line;
  while (std::getline(iss, line)) {
    line = trim(line);
    if (line.empty()) continue;
    inv.insert(Phone::parse(line));
  }
  return inv;
}

}  // namespace polyphone

#endif  // POLYPHONE_LEXICON_HPP
