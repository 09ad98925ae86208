// polyphone/genre.hpp

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

#ifndef POLYPHONE_GENRE_HPP
#define POLYPHONE_GENRE_HPP

#include <array>
#include <filesystem>
#include <map>
#include <string>

#include "polyphone/common.hpp"

namespace polyphone {

// The three broad genre classes.  Raw genre tags group into these by shared
// accompaniment and vocal-loudness characteristics.
enum class GenreBroadclass { pop = 0, hiphop = 1, metal = 2 };

constexpr int kNumGenres = 3;
constexpr std::array<GenreBroadclass, kNumGenres> kAllGenres = {
    GenreBroadclass::pop, GenreBroadclass::hiphop, GenreBroadclass::metal};

inline const char *genre_name(GenreBroadclass g) {
  switch (g) {
    case GenreBroadclass::pop: return "pop";
    case GenreBroadclass::hiphop: return "hiphop";
    case GenreBroadclass::metal: return "metal";
  }
  throw Error("genre_name: invalid broadclass");
}

inline GenreBroadclass parse_genre(const std::string &name) {
  std::string s = to_lower(trim(name));
  if (s == "pop") return GenreBroadclass::pop;
  if (s == "hiphop") return GenreBroadclass::hiphop;
  if (s == "metal") return GenreBroadclass::metal;
  throw DataError("unknown genre broadclass '" + name + "' (want pop, hiphop or metal)");
}

// Raw tag normalization: lowercase, '&' -> 'and', collapse whitespace, trim.
// "R&B", "r & b" and " R&B " all normalize to "r and b".
inline std::string normalize_genre_tag(const std::string &raw) {
  std::string expanded;
  for (char c : raw) {
    if (c == '&') {
      expanded += " and ";
    } else {
      expanded += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
  }
  std::string collapsed;
  bool prev_space = true;
  for (char c : expanded) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!prev_space) collapsed += ' ';
      prev_space = true;
    } else {
      collapsed += c;
      prev_space = false;
    }
  }
  if (!collapsed.empty() && collapsed.back() == ' ') collapsed.pop_back();
  return collapsed;
}

// Raw-genre -> broadclass table.  Ships with the built-in grouping below;
// entries loaded from a TSV override the defaults.
class GenreMap {
 public:
  GenreMap() : entries_(builtin_entries()) {}

  void set(const std::string &raw, GenreBroadclass g) { entries_[normalize_genre_tag(raw)] = g; }

  bool contains(const std::string &raw) const {
    return entries_.count(normalize_genre_tag(raw)) > 0;
  }

  const std::map<std::string, GenreBroadclass> &entries() const { return entries_; }

  // Total function: unmapped tags fall back to pop (the dominant training
  // class) and are recorded on the warning channel.
  GenreBroadclass classify(const std::string &raw, WarningLog *warnings = nullptr) const {
    auto it = entries_.find(normalize_genre_tag(raw));
    if (it != entries_.end()) return it->second;
    if (warnings)
      warnings->add("unmapped-genre", "genre tag '" + raw + "' not in map, defaulting to pop");
    return GenreBroadclass::pop;
  }

  static std::map<std::string, GenreBroadclass> builtin_entries() {
    std::map<std::string, GenreBroadclass> m;
    auto put = [&m](const char *raw, GenreBroadclass g) { m[normalize_genre_tag(raw)] = g; };
    put("Rap", GenreBroadclass::hiphop);
    put("Hip Hop", GenreBroadclass::hiphop);
    put("R&B", GenreBroadclass::hiphop);
    put("Metal", GenreBroadclass::metal);
    put("Hard Rock", GenreBroadclass::metal);
    put("Electro", GenreBroadclass::metal);
    put("Alternative", GenreBroadclass::metal);
    put("Dance", GenreBroadclass::metal);
    put("Disco", GenreBroadclass::metal);
    put("Rock", GenreBroadclass::metal);
    put("Indie", GenreBroadclass::metal);
    put("Country", GenreBroadclass::pop);
    put("Pop", GenreBroadclass::pop);
    put("Jazz", GenreBroadclass::pop);
    put("Soul", GenreBroadclass::pop);
    put("Reggae", GenreBroadclass::pop);
    put("Blues", GenreBroadclass::pop);
    put("Classical", GenreBroadclass::pop);
    return m;
  }

 private:
  std::map<std::string, GenreBroadclass> entries_;
};

inline GenreBroadclass classify_genre(const std::string &raw, const GenreMap &map,
                                      WarningLog *warnings = nullptr) {
  return map.classify(raw, warnings);
}

// TSV format: raw_genre <TAB> broadclass.  File entries override the
// built-in table; an empty file yields exactly the built-in table.
inline GenreMap load_genre_map(const std::filesystem::path &path) {
  GenreMap map;
  std::string text = read_text_file(path);
  std::istringstream iss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(iss, line)) {
    lineno++;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty() || trim(line).front() == '#') continue;
    auto cols = split_char(line, '\t');
    if (cols.size() != 2)
      throw DataError(strprintf("%s:%d: expected 2 tab-separated columns, got %zu",
                                path.string().c_str(), lineno, cols.size()));
    std::string raw = trim(cols[0]);
    if (raw.empty())
      throw DataError(strprintf("%s:%d: empty genre tag", path.string().c_str(), lineno));
    GenreBroadclass g;
    try {
      g = parse_genre(cols[1]);
    } catch (const DataError &e) {
      throw DataError(strprintf("%s:%d: %s", path.string().c_str(), lineno, e.what()));
    }
    map.set(raw, g);
  }
  return map;
}

}  // namespace polyphone

#endif  // POLYPHONE_GENRE_HPP
