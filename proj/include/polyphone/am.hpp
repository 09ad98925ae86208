// polyphone/am.hpp

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

#ifndef POLYPHONE_AM_HPP
#define POLYPHONE_AM_HPP

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "polyphone/common.hpp"
#include "polyphone/features.hpp"
#include "polyphone/gmm.hpp"
#include "polyphone/lexicon.hpp"

namespace polyphone {

constexpr int kSpeechStates = 3;
constexpr int kSilenceStates = 5;

// Left-to-right HMM for one phone unit.  Speech phones: 3 emitting states,
// self-loop + forward.  Silence: 5 emitting states, self-loop + forward,
// plus a skip from the first to the last state so short gaps stay cheap.
// transitions[s][j] is P(state s -> state j), with j == num_states meaning
// exit; every row sums to 1.
struct HmmPhoneModel {
  Phone phone;
  std::vector<GaussianMixture> states;
  std::vector<std::vector<double>> transitions;

  int num_states() const { return static_cast<int>(states.size()); }

  // Fewest frames a single pass through the model can consume.
  int min_frames() const { return phone.is_silence ? 2 : num_states(); }

  static std::vector<std::vector<double>> uniform_transitions(bool is_silence) {
    const int n = is_silence ? kSilenceStates : kSpeechStates;
    std::vector<std::vector<double>> t(n, std::vector<double>(n + 1, 0.0));
    for (int s = 0; s < n; s++) {
      t[s][s] = 0.5;
      t[s][s + 1] = 0.5;  // forward; last state forwards to exit
    }
    if (is_silence) {
      t[0][0] = t[0][1] = t[0][n - 1] = 1.0 / 3.0;  // skip to last emitting state
    }
    return t;
  }

  void validate() const {
    const int n = num_states();
    const int expect = phone.is_silence ? kSilenceStates : kSpeechStates;
    if (n != expect)
      throw Error(strprintf("phone %s has %d states, expected %d", phone.name().c_str(), n,
                            expect));
    if (static_cast<int>(transitions.size()) != n) throw Error("transition row count mismatch");
    for (int s = 0; s < n; s++) {
      if (static_cast<int>(transitions[s].size()) != n + 1)
        throw Error("transition column count mismatch");
      double sum = 0.0;
      for (double p : transitions[s]) sum += p;
      if (std::abs(sum - 1.0) > 1e-9)
        throw Error(strprintf("transition row %d of %s sums to %.12f", s, phone.name().c_str(),
                              sum));
    }
    for (const auto &st : states) {
      double wsum = 0.0;
      for (const auto &c : st.components) {
        wsum += c.weight;
        for (double v : c.var)
          if (v < kVarianceFloor - 1e-12) throw Error("variance below floor");
      }
      if (std::abs(wsum - 1.0) > 1e-9) throw Error("mixture weights do not sum to 1");
    }
  }
};

// The three system shapes under comparison.  genre_agnostic: untagged
// phones and silence.  genre_silence: shared untagged speech phones, one
// tagged silence model per genre.  genre_silence_phone: every unit tagged
// per genre.
enum class ModelMode { genre_agnostic, genre_silence, genre_silence_phone };

inline const char *model_mode_name(ModelMode m) {
  switch (m) {
    case ModelMode::genre_agnostic: return "genre_agnostic";
    case ModelMode::genre_silence: return "genre_silence";
    case ModelMode::genre_silence_phone: return "genre_silence_phone";
  }
  throw Error("invalid model mode");
}

inline ModelMode parse_model_mode(const std::string &s) {
  std::string m = to_lower(trim(s));
  if (m == "genre_agnostic") return ModelMode::genre_agnostic;
  if (m == "genre_silence") return ModelMode::genre_silence;
  if (m == "genre_silence_phone") return ModelMode::genre_silence_phone;
  throw DataError("unknown model mode '" + s +
                  "' (want genre_agnostic, genre_silence or genre_silence_phone)");
}

// Builds the phone inventory a mode trains over, from a lexicon's base
// inventory.
inline std::set<Phone> inventory_for_mode(const Lexicon &lex, ModelMode mode) {
  std::set<Phone> inv;
  switch (mode) {
    case ModelMode::genre_agnostic:
      return lex.untagged_inventory();
    case ModelMode::genre_silence:
      for (const auto &base : lex.base_inventory()) inv.insert(Phone::speech(base));
      for (auto g : kAllGenres) inv.insert(Phone::silence(g));
      return inv;
    case ModelMode::genre_silence_phone: {
      std::set<GenreBroadclass> genres(kAllGenres.begin(), kAllGenres.end());
      return lex.expanded_inventory(genres);
    }
  }
  throw Error("invalid model mode");
}

class AcousticModelSet {
 public:
  ModelMode mode = ModelMode::genre_agnostic;
  std::string feature_fingerprint;
  int dim = 0;
  std::map<Phone, HmmPhoneModel> models;

  bool has(const Phone &p) const { return models.count(p) > 0; }

  const HmmPhoneModel &model(const Phone &p) const {
    auto it = models.find(p);
    if (it == models.end()) throw DataError("unknown phone in model set: " + p.name());
    return it->second;
  }
  HmmPhoneModel &mutable_model(const Phone &p) {
    auto it = models.find(p);
    if (it == models.end()) throw DataError("unknown phone in model set: " + p.name());
    return it->second;
  }

  // The silence unit a graph should use for genre g under this mode.
  Phone silence_phone(std::optional<GenreBroadclass> g) const {
    if (mode == ModelMode::genre_agnostic) return Phone::silence();
    if (!g) throw Error("genre required to select a silence model in genre modes");
    return Phone::silence(*g);
  }

  // The speech unit for base phone under this mode.
  Phone speech_phone(const std::string &base, std::optional<GenreBroadclass> g) const {
    if (mode == ModelMode::genre_silence_phone) {
      if (!g) throw Error("genre required to select a phone model in genre_silence_phone mode");
      return Phone::speech(base, *g);
    }
    return Phone::speech(base);
  }

  // All genre variants a test-time graph should offer in parallel.
  std::vector<Phone> silence_variants() const {
    if (mode == ModelMode::genre_agnostic) return {Phone::silence()};
    std::vector<Phone> v;
    for (auto g : kAllGenres) v.push_back(Phone::silence(g));
    return v;
  }
  std::vector<Phone> speech_variants(const std::string &base) const {
    if (mode != ModelMode::genre_silence_phone) return {Phone::speech(base)};
    std::vector<Phone> v;
    for (auto g : kAllGenres) v.push_back(Phone::speech(base, g));
    return v;
  }

  void validate() const {
    for (const auto &[phone, model] : models) {
      if (!(phone == model.phone)) throw Error("model keyed under wrong phone");
      model.validate();
      const bool tagged = phone.genre_tag.has_value();
      switch (mode) {
        case ModelMode::genre_agnostic:
          if (tagged) throw Error("genre_agnostic set contains tagged phone " + phone.name());
          break;
        case ModelMode::genre_silence:
          if (phone.is_silence != tagged)
            throw Error("genre_silence set: only SIL may be tagged, got " + phone.name());
          break;
        case ModelMode::genre_silence_phone:
          if (!tagged) throw Error("genre_silence_phone set contains untagged " + phone.name());
          break;
      }
    }
  }
};

// Flat start: every state of every model gets a single Gaussian with the
// global mean and variance of the training sample, and uniform permitted
// transitions.
inline AcousticModelSet flat_start(const std::set<Phone> &inventory,
                                   const std::vector<const FeatureMatrix *> &sample,
                                   ModelMode mode, const std::string &feature_fingerprint) {
  size_t total = 0;
  int dim = 0;
  for (const auto *f : sample) {
    total += f->num_frames();
    if (f->dim() > 0) dim = f->dim();
  }
  if (total == 0 || dim == 0) throw DataError("flat_start: empty training sample");

  std::vector<double> mean(dim, 0.0), var(dim, 0.0);
  for (const auto *f : sample)
    for (const auto &fr : f->frames)
      for (int d = 0; d < dim; d++) mean[d] += fr[d];
  for (int d = 0; d < dim; d++) mean[d] /= static_cast<double>(total);
  for (const auto *f : sample)
    for (const auto &fr : f->frames)
      for (int d = 0; d < dim; d++) {
        const double c = fr[d] - mean[d];
        var[d] += c * c;
      }
  for (int d = 0; d < dim; d++) var[d] = std::max(var[d] / static_cast<double>(total), kVarianceFloor);

  AcousticModelSet set;
  set.mode = mode;
  set.feature_fingerprint = feature_fingerprint;
  set.dim = dim;
  for (const auto &phone : inventory) {
    HmmPhoneModel m;
    m.phone = phone;
    const int n = phone.is_silence ? kSilenceStates : kSpeechStates;
    m.states.assign(n, GaussianMixture::single(mean, var));
    m.transitions = HmmPhoneModel::uniform_transitions(phone.is_silence);
    set.models.emplace(phone, std::move(m));
  }
  set.validate();
  return set;
}

inline double score_state(const AcousticModelSet &set, const Phone &phone, int state_index,
                          std::span<const double> frame) {
  const HmmPhoneModel &m = set.model(phone);
  if (state_index < 0 || state_index >= m.num_states())
    throw DataError(strprintf("state %d out of range for phone %s", state_index,
                              phone.name().c_str()));
  return m.states[state_index].log_density(frame);
}

// ---------------------------------------------------------------------------
// Serialization: versioned JSON container.  nlohmann emits shortest
// round-trip doubles and sorts object keys, so save -> load -> save is
// byte-identical and parameters survive bit-exactly.
// ---------------------------------------------------------------------------

constexpr int kModelFormatVersion = 1;

inline nlohmann::json model_set_to_json(const AcousticModelSet &set) {
  nlohmann::json j;
  j["format"] = "polyphone-am";
  j["version"] = kModelFormatVersion;
  j["mode"] = model_mode_name(set.mode);
  j["feature_fingerprint"] = set.feature_fingerprint;
  j["dim"] = set.dim;
  j["phones"] = nlohmann::json::array();
  for (const auto &[phone, model] : set.models) {
    nlohmann::json jp;
    jp["name"] = phone.name();
    jp["silence"] = phone.is_silence;
    jp["transitions"] = model.transitions;
    jp["states"] = nlohmann::json::array();
    for (const auto &st : model.states) {
      nlohmann::json js = nlohmann::json::array();
      for (const auto &c : st.components) {
        nlohmann::json jc;
        jc["weight"] = c.weight;
        jc["mean"] = c.mean;
        jc["var"] = c.var;
        js.push_back(jc);
      }
      jp["states"].push_back(js);
    }
    j["phones"].push_back(jp);
  }
  return j;
}

inline void save_models(const AcousticModelSet &set, const std::filesystem::path &path) {
  write_text_file_atomic(path, model_set_to_json(set).dump(1) + "\n");
}

inline AcousticModelSet load_models(const std::filesystem::path &path,
                                    const std::string &expected_fingerprint = "") {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception &e) {
    throw DataError(path.string() + ": invalid model file: " + e.what());
  }
  if (!j.is_object() || j.value("format", "") != "polyphone-am")
    throw DataError(path.string() + ": not a polyphone acoustic model file");
  if (j.value("version", -1) != kModelFormatVersion)
    throw DataError(strprintf("%s: unsupported model version %d", path.string().c_str(),
                              j.value("version", -1)));

  AcousticModelSet set;
  set.mode = parse_model_mode(j.at("mode").get<std::string>());
  set.feature_fingerprint = j.at("feature_fingerprint").get<std::string>();
  set.dim = j.at("dim").get<int>();
  if (!expected_fingerprint.empty() && set.feature_fingerprint != expected_fingerprint)
    throw DataError(path.string() + ": feature fingerprint mismatch\n  model:   " +
                    set.feature_fingerprint + "\n  current: " + expected_fingerprint);

  try {
    for (const auto &jp : j.at("phones")) {
      HmmPhoneModel m;
      m.phone = Phone::parse(jp.at("name").get<std::string>());
      if (jp.at("silence").get<bool>() != m.phone.is_silence)
        throw DataError("silence flag inconsistent with phone name");
      m.transitions = jp.at("transitions").get<std::vector<std::vector<double>>>();
      for (const auto &js : jp.at("states")) {
        GaussianMixture mix;
        for (const auto &jc : js) {
          GaussianComponent c;
          c.weight = jc.at("weight").get<double>();
          c.mean = jc.at("mean").get<std::vector<double>>();
          c.var = jc.at("var").get<std::vector<double>>();
          mix.components.push_back(std::move(c));
        }
        mix.finalize();
        m.states.push_back(std::move(mix));
      }
      set.models.emplace(m.phone, std::move(m));
    }
  } catch (const nlohmann::json::exception &e) {
    throw DataError(path.string() + ": malformed model file: " + e.what());
  }
  try {
    set.validate();
  } catch (const Error &e) {
    throw DataError(path.string() + ": corrupt model file: " + e.what());
  }
  return set;
}

// Human-readable dump for the inspect-model subcommand.
inline std::string describe_model_set(const AcousticModelSet &set) {
  std::string out;
  out += strprintf("mode: %s\n", model_mode_name(set.mode));
  out += strprintf("feature fingerprint: %s\n", set.feature_fingerprint.c_str());
  out += strprintf("dim: %d\nphones: %zu\n", set.dim, set.models.size());
  for (const auto &[phone, model] : set.models) {
    out += strprintf("\n[%s]%s  states=%d\n", phone.name().c_str(),
                     phone.is_silence ? " (silence)" : "", model.num_states());
    for (int s = 0; s < model.num_states(); s++) {
      const auto &mix = model.states[s];
      out += strprintf("  state %d: %d component(s); trans:", s, mix.num_components());
      for (int t = 0; t <= model.num_states(); t++) {
        if (model.transitions[s][t] > 0)
          out += strprintf(" ->%s%.3f", t == model.num_states() ? "exit " : strprintf("%d ", t).c_str(),
                           model.transitions[s][t]);
      }
      out += "\n";
      for (const auto &c : mix.components) {
        out += strprintf("    w=%.4f mean[0..3]=(%.3f %.3f %.3f %.3f)\n", c.weight,
                         c.mean.size() > 0 ? c.mean[0] : 0.0, c.mean.size() > 1 ? c.mean[1] : 0.0,
                         c.mean.size() > 2 ? c.mean[2] : 0.0, c.mean.size() > 3 ? c.mean[3] : 0.0);
      }
    }
  }
  return out;
}

}  // namespace polyphone

#endif  // POLYPHONE_AM_HPP
