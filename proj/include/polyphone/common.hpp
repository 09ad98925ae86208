// polyphone/common.hpp

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

#ifndef POLYPHONE_COMMON_HPP
#define POLYPHONE_COMMON_HPP

#include <algorithm>
#include <cctype>
#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace polyphone {

// Internal failures (bugs, broken invariants, I/O that should not fail).
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string &msg) : std::runtime_error(msg) {}
};

// Failures caused by user input: malformed files, inconsistent configs,
// OOV words under a strict policy.  The CLI maps these to exit code 1,
// everything else to 2.
class DataError : public Error {
 public:
  explicit DataError(const std::string &msg) : Error(msg) {}
};

inline std::string strprintf(const char *fmt, ...) {
  va_list ap;
  va_start(ap, fmt);
  char buf[1024];
  int n = std::vsnprintf(buf, sizeof(buf), fmt, ap);
  va_end(ap);
  if (n < 0) throw Error("strprintf: formatting failed");
  if (static_cast<size_t>(n) < sizeof(buf)) return std::string(buf, n);
  std::vector<char> big(n + 1);
  va_start(ap, fmt);
  std::vsnprintf(big.data(), big.size(), fmt, ap);
  va_end(ap);
  return std::string(big.data(), n);
}

// Structured warning channel.  Non-fatal conditions (unmapped genres,
// duplicate lexicon entries, zero-occupancy phones) are recorded here so
// callers can audit them; the CLI prints them as "WARN code: message".
struct Warning {
  std::string code;
  std::string message;
};

class WarningLog {
 public:
  void add(const std::string &code, const std::string &message) {
    warnings_.push_back({code, message});
  }
  const std::vector<Warning> &all() const { return warnings_; }
  bool empty() const { return warnings_.empty(); }
  size_t count(const std::string &code) const {
    size_t n = 0;
    for (const auto &w : warnings_)
      if (w.code == code) n++;
    return n;
  }

 private:
  std::vector<Warning> warnings_;
};

// ---------------------------------------------------------------------------
// String helpers
// ---------------------------------------------------------------------------

inline std::string trim(const std::string &s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::string to_upper(std::string s) {
  for (char &c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

inline std::string to_lower(std::string s) {
  for (char &c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

inline std::vector<std::string> split_whitespace(const std::string &s) {
  std::vector<std::string> out;
  std::istringstream iss(s);
  std::string tok;
  while (iss >> tok) out.push_back(tok);
  return out;
}

inline std::vector<std::string> split_char(const std::string &s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

// Lyrics/text normalization shared by corpus ingestion, LM training and
// WER scoring: uppercase, strip punctuation except apostrophes, collapse
// whitespace.
inline std::string normalize_text(const std::string &raw) {
  std::string out;
  out.reserve(raw.size());
  for (char c : raw) {
    unsigned char u = static_cast<unsigned char>(c);
    if (std::isalnum(u) || c == '\'') {
      out += static_cast<char>(std::toupper(u));
    } else if (std::isspace(u) || std::ispunct(u)) {
      out += ' ';
    }
    // bytes outside ASCII alnum/punct/space are dropped
  }
  std::string collapsed;
  bool prev_space = true;
  for (char c : out) {
    if (c == ' ') {
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

inline std::vector<std::string> normalize_words(const std::string &raw) {
  return split_whitespace(normalize_text(raw));
}

// ---------------------------------------------------------------------------
// Deterministic RNG
// ---------------------------------------------------------------------------

// splitmix64-based generator.  Used everywhere randomness is needed in the
// artifact itself (synthesis, dither) so outputs are bit-identical across
// platforms and standard library versions; std:: distributions are not.
class Prng {
 public:
  explicit Prng(uint64_t seed) : state_(seed + 0x9e3779b97f4a7c15ULL) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // Uniform integer in [0, n).
  uint64_t next_below(uint64_t n) { return next_u64() % n; }

  // Derive an independent stream, e.g. per-song sub-seeds.
  static uint64_t derive(uint64_t master, uint64_t index) {
    Prng p(master ^ (0x632be59bd9b4e019ULL * (index + 1)));
    return p.next_u64();
  }

 private:
  uint64_t state_;
};

// ---------------------------------------------------------------------------
// Config files
// ---------------------------------------------------------------------------

// Flat key/value config with optional [section] headers.  A key inside
// [features] is exposed as "features.key".  '#' starts a comment.
inline std::map<std::string, std::string> parse_config_text(const std::string &text,
                                                            const std::string &origin = "<config>") {
  std::map<std::string, std::string> kv;
  std::istringstream iss(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(iss, line)) {
    lineno++;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw DataError(strprintf("%s:%d: unterminated section header", origin.c_str(), lineno));
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw DataError(strprintf("%s:%d: expected key = value", origin.c_str(), lineno));
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    if (key.empty())
      throw DataError(strprintf("%s:%d: empty key", origin.c_str(), lineno));
    if (!section.empty()) key = section + "." + key;
    kv[key] = val;
  }
  return kv;
}

inline std::string read_text_file(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Write via temp file + rename so consumers never observe partial content.
inline void write_text_file_atomic(const std::filesystem::path &path, const std::string &content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write file: " + tmp.string());
    out << content;
    if (!out) throw Error("short write: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline std::map<std::string, std::string> parse_config_file(const std::filesystem::path &path) {
  return parse_config_text(read_text_file(path), path.string());
}

inline bool parse_bool(const std::string &v, const std::string &what) {
  std::string s = to_lower(trim(v));
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw DataError("expected boolean for " + what + ", got '" + v + "'");
}

// ---------------------------------------------------------------------------
// Parallel map with deterministic order
// ---------------------------------------------------------------------------

// Runs fn(i) for i in [0, n) on up to `jobs` threads.  Results land in a
// pre-sized vector so any later reduction happens in index order and is
// bit-reproducible regardless of thread count.
template <typename Fn>
inline void parallel_for(size_t n, int jobs, Fn fn) {
  if (jobs <= 1 || n <= 1) {
    for (size_t i = 0; i < n; i++) fn(i);
    return;
  }
  size_t nthreads = std::min<size_t>(jobs, n);
  std::vector<std::thread> threads;
  std::vector<std::exception_ptr> errors(nthreads);
  for (size_t t = 0; t < nthreads; t++) {
    threads.emplace_back([&, t]() {
      try {
        for (size_t i = t; i < n; i += nthreads) fn(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto &th : threads) th.join();
  for (auto &e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace polyphone

#endif  // POLYPHONE_COMMON_HPP
