// GMM-HMM acoustic models: flat start, state scoring, EM training,
// genre routing, serialization.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "doctest.h"
#include "polyphone/am.hpp"
#include "polyphone/train.hpp"
#include "test_util.hpp"

using namespace polyphone;
namespace fs = std::filesystem;

namespace {

SynthSpec tiny_spec() {
  SynthSpec spec = default_synth_spec();
  spec.songs_per_genre = 1;
  spec.lines_per_song = 2;
  spec.words_per_line = 2;
  spec.interlude_dur_min = 0.4;
  spec.interlude_dur_max = 0.8;
  return spec;
}

}  // namespace

TEST_CASE("flat_start initializes every state from global statistics") {
  FeatureMatrix a, b;
  std::mt19937 rng(3);
  std::normal_distribution<double> gauss(0.5, 2.0);
  a.frames.assign(30, std::vector<double>(4));
  b.frames.assign(20, std::vector<double>(4));
  for (auto *f : {&a, &b})
    for (auto &fr : f->frames)
      for (double &v : fr) v = gauss(rng);

  // independent two-pass oracle
  std::vector<double> mean(4, 0.0), var(4, 0.0);
  size_t total = 0;
  for (auto *f : {&a, &b})
    for (const auto &fr : f->frames) {
      for (int d = 0; d < 4; d++) mean[d] += fr[d];
      total++;
    }
  for (double &m : mean) m /= static_cast<double>(total);
  for (auto *f : {&a, &b})
    for (const auto &fr : f->frames)
      for (int d = 0; d < 4; d++) var[d] += (fr[d] - mean[d]) * (fr[d] - mean[d]);
  for (double &v : var) v /= static_cast<double>(total);

  std::set<Phone> inventory = {Phone::speech("AA"), Phone::speech("B"), Phone::silence()};
  AcousticModelSet set =
      flat_start(inventory, {&a, &b}, ModelMode::genre_agnostic, "test-fp");
  for (const auto &[phone, model] : set.models) {
    CHECK(model.num_states() == (phone.is_silence ? 5 : 3));
    for (const auto &state : model.states) {
      REQUIRE(state.num_components() == 1);
      for (int d = 0; d < 4; d++) {
        CHECK(state.components[0].mean[d] == doctest::Approx(mean[d]).epsilon(1e-8));
        CHECK(state.components[0].var[d] == doctest::Approx(var[d]).epsilon(1e-8));
      }
    }
  }
  // two speech phones are identical apart from identity
  const auto &ma = set.model(Phone::speech("AA"));
  const auto &mb = set.model(Phone::speech("B"));
  for (int s = 0; s < 3; s++) {
    CHECK(ma.states[s].components[0].mean == mb.states[s].components[0].mean);
    CHECK(ma.transitions[s] == mb.transitions[s]);
  }
  CHECK_THROWS_AS(flat_start(inventory, {}, ModelMode::genre_agnostic, "fp"), DataError);
}

TEST_CASE("score_state matches the closed form") {
  AcousticModelSet set;
  set.mode = ModelMode::genre_agnostic;
  set.dim = 3;
  Phone p = Phone::speech("T");
  HmmPhoneModel model;
  model.phone = p;
  std::vector<double> mean = {0.5, -1.0, 2.0};
  std::vector<double> var = {0.25, 1.0, 4.0};
  model.states.assign(3, GaussianMixture::single(mean, var));
  model.transitions = HmmPhoneModel::uniform_transitions(false);
  set.models.emplace(p, model);

  SUBCASE("at the mean the density is the normalizer") {
    double expected = 0.0;
    for (double v : var) expected -= 0.5 * std::log(2.0 * std::numbers::pi * v);
    CHECK(score_state(set, p, 1, mean) == doctest::Approx(expected).epsilon(1e-12));
  }
  SUBCASE("duplicate equal-weight components collapse to the single component") {
    GaussianMixture two;
    two.components = {model.states[0].components[0], model.states[0].components[0]};
    two.components[0].weight = two.components[1].weight = 0.5;
    two.finalize();
    std::vector<double> x = {1.0, 0.3, -2.0};
    CHECK(two.log_density(x) ==
          doctest::Approx(model.states[0].log_density(x)).epsilon(1e-12));
  }
  SUBCASE("arbitrary frame matches an independent evaluation") {
    std::vector<double> x = {1.7, 0.2, -3.1};
    double expected = 0.0;
    for (int d = 0; d < 3; d++)
      expected += -0.5 * std::log(2.0 * std::numbers::pi * var[d]) -
                  0.5 * (x[d] - mean[d]) * (x[d] - mean[d]) / var[d];
    CHECK(score_state(set, p, 0, x) == doctest::Approx(expected).epsilon(1e-10));
  }
  SUBCASE("unknown phone or state") {
    CHECK_THROWS_AS(score_state(set, Phone::speech("ZZ"), 0, mean), DataError);
    CHECK_THROWS_AS(score_state(set, p, 7, mean), DataError);
  }
}

TEST_CASE("train_em: likelihood is non-decreasing without splits") {
  SynthSpec spec = tiny_spec();
  FeatureConfig config;
  auto data = testutil::make_synth_data(spec, 11, config);
  Lexicon lex = spec.lexicon();

  TrainSchedule schedule;
  schedule.iterations = 6;
  schedule.split_iterations = {};
  AcousticModelSet init = flat_start(inventory_for_mode(lex, ModelMode::genre_agnostic),
                                     {&data.train[0].features, &data.train[1].features,
                                      &data.train[2].features},
                                     ModelMode::genre_agnostic, config.fingerprint());
  TrainResult result = train_em(init, data.train, lex, schedule);
  REQUIRE(result.iterations.size() == 6);
  for (size_t i = 1; i < result.iterations.size(); i++) {
    const double prev = result.iterations[i - 1].total_loglik;
    const double cur = result.iterations[i].total_loglik;
    const double frames = static_cast<double>(result.iterations[i].total_frames);
    CHECK(cur >= prev - 1e-6 * frames);
  }
  result.models.validate();  // transition rows and weights sum to 1, floors hold

  SUBCASE("variance floor holds everywhere") {
    for (const auto &[phone, model] : result.models.models)
      for (const auto &state : model.states)
        for (const auto &comp : state.components)
          for (double v : comp.var) CHECK(v >= kVarianceFloor - 1e-15);
  }

  SUBCASE("training is deterministic") {
    TrainResult again = train_em(init, data.train, lex, schedule);
    CHECK(model_set_to_json(again.models).dump() == model_set_to_json(result.models).dump());
  }

  SUBCASE("mixture splitting grows components up to the cap") {
    TrainSchedule split_schedule;
    split_schedule.iterations = 4;
    split_schedule.split_iterations = {2};
    split_schedule.max_components = 2;
    TrainResult split_result = train_em(init, data.train, lex, split_schedule);
    for (const auto &[phone, model] : split_result.models.models)
      for (const auto &state : model.states) CHECK(state.num_components() <= 2);
    bool any_two = false;
    for (const auto &[phone, model] : split_result.models.models)
      for (const auto &state : model.states)
        if (state.num_components() == 2) any_two = true;
    CHECK(any_two);
  }
}

TEST_CASE("train_em: genre routing and zero occupancy") {
  SynthSpec spec = tiny_spec();
  FeatureConfig config;
  Lexicon lex = spec.lexicon();
  auto full = testutil::make_synth_data(spec, 21, config);
  // same generator sequence restricted to pop and metal: drop hiphop songs
  std::vector<TrainSong> no_hiphop;
  for (const auto &s : full.train)
    if (s.genre != GenreBroadclass::hiphop) no_hiphop.push_back(s);

  std::vector<const FeatureMatrix *> sample;
  for (const auto &s : full.train) sample.push_back(&s.features);
  AcousticModelSet init = flat_start(inventory_for_mode(lex, ModelMode::genre_silence_phone),
                                     sample, ModelMode::genre_silence_phone,
                                     config.fingerprint());
  TrainSchedule schedule;
  schedule.iterations = 2;
  schedule.split_iterations = {};

  TrainResult without = train_em(init, no_hiphop, lex, schedule);

  SUBCASE("hiphop-tagged phones report zero occupancy and keep flat-start values") {
    REQUIRE(!without.iterations.empty());
    size_t hiphop_zero = 0;
    for (const auto &name : without.iterations[0].zero_occupancy)
      if (name.find("@hiphop") != std::string::npos) hiphop_zero++;
    size_t hiphop_models = 0;
    for (const auto &[phone, model] : without.models.models) {
      if (!phone.genre_tag || *phone.genre_tag != GenreBroadclass::hiphop) continue;
      hiphop_models++;
      const auto &flat = init.model(phone);
      for (int s = 0; s < model.num_states(); s++)
        CHECK(model.states[s].components[0].mean == flat.states[s].components[0].mean);
    }
    CHECK(hiphop_zero == hiphop_models);
    CHECK(without.warnings.count("zero-occupancy") > 0);
  }

  SUBCASE("statistics of one genre never leak into another genre's models") {
    TrainResult with = train_em(init, full.train, lex, schedule);
    for (const auto &[phone, model] : with.models.models) {
      if (!phone.genre_tag || *phone.genre_tag == GenreBroadclass::hiphop) continue;
      const auto &other = without.models.model(phone);
      for (int s = 0; s < model.num_states(); s++) {
        CHECK(model.states[s].components[0].mean == other.states[s].components[0].mean);
        CHECK(model.states[s].components[0].var == other.states[s].components[0].var);
        CHECK(model.transitions[s] == other.transitions[s]);
      }
    }
  }
}

TEST_CASE("train_em: trained means land near their phone's true features") {
  // two words with disjoint phones, strongly separated signatures
  SynthSpec spec;
  spec.phone_signatures = {{"DA", {400.0, 900.0, 1400.0}},
                           {"SO", {2300.0, 3000.0, 3700.0}}};
  spec.words = {{"DAH", {"DA"}}, {"SOH", {"SO"}}};
  spec.interlude_signatures[GenreBroadclass::pop] = {250.0, 610.0, 975.0};
  spec.interlude_signatures[GenreBroadclass::hiphop] = {1480.0, 1810.0, 2140.0};
  spec.interlude_signatures[GenreBroadclass::metal] = {3120.0, 3560.0, 3930.0};
  spec.songs_per_genre = 1;
  spec.lines_per_song = 3;
  spec.words_per_line = 3;
  spec.phone_dur_min = 0.15;
  spec.phone_dur_max = 0.25;

  FeatureConfig config;
  auto data = testutil::make_synth_data(spec, 31, config, {GenreBroadclass::pop});
  Lexicon lex = spec.lexicon();

  std::vector<const FeatureMatrix *> sample = {&data.train[0].features};
  AcousticModelSet init = flat_start(inventory_for_mode(lex, ModelMode::genre_agnostic), sample,
                                     ModelMode::genre_agnostic, config.fingerprint());
  TrainSchedule schedule;
  schedule.iterations = 8;
  schedule.split_iterations = {};
  TrainResult result = train_em(init, data.train, lex, schedule);

  // oracle: per-phone mean features from the generator's phone boundaries
  std::map<std::string, std::vector<double>> true_mean;
  std::map<std::string, size_t> true_count;
  const auto &feats = data.train[0].features;
  for (const auto &pb : data.songs[0].phone_boundaries) {
    size_t b = feats.frame_index(pb.start), e = feats.frame_index(pb.end);
    auto &m = true_mean[pb.word];
    m.resize(feats.dim(), 0.0);
    for (size_t t = b; t < e && t < feats.num_frames(); t++) {
      for (int d = 0; d < feats.dim(); d++) m[d] += feats.frames[t][d];
      true_count[pb.word]++;
    }
  }
  for (auto &[ph, m] : true_mean)
    for (double &v : m) v /= static_cast<double>(true_count[ph]);

  auto dist = [](const std::vector<double> &a, const std::vector<double> &b) {
    double acc = 0.0;
    for (size_t d = 0; d < a.size(); d++) acc += (a[d] - b[d]) * (a[d] - b[d]);
    return std::sqrt(acc);
  };
  for (const char *ph : {"DA", "SO"}) {
    const char *other = std::string(ph) == "DA" ? "SO" : "DA";
    const auto &mid = result.models.model(Phone::speech(ph)).states[1].components[0].mean;
    CHECK(dist(mid, true_mean[ph]) < dist(mid, true_mean[other]));
  }
}

TEST_CASE("model serialization round trips bit-exactly") {
  SynthSpec spec = tiny_spec();
  FeatureConfig config;
  auto data = testutil::make_synth_data(spec, 41, config, {GenreBroadclass::pop});
  Lexicon lex = spec.lexicon();
  std::vector<const FeatureMatrix *> sample = {&data.train[0].features};
  AcousticModelSet set = flat_start(inventory_for_mode(lex, ModelMode::genre_silence), sample,
                                    ModelMode::genre_silence, config.fingerprint());
  TrainSchedule schedule;
  schedule.iterations = 2;
  schedule.split_iterations = {};
  set = train_em(set, data.train, lex, schedule).models;

  fs::path dir = fs::temp_directory_path() / "polyphone_am_test";
  fs::create_directories(dir);
  fs::path path = dir / "models.json";
  save_models(set, path);
  AcousticModelSet loaded = load_models(path, config.fingerprint());

  CHECK(loaded.mode == ModelMode::genre_silence);
  CHECK(loaded.feature_fingerprint == set.feature_fingerprint);
  REQUIRE(loaded.models.size() == set.models.size());
  for (const auto &[phone, model] : set.models) {
    const auto &other = loaded.model(phone);
    for (int s = 0; s < model.num_states(); s++) {
      CHECK(model.states[s].components[0].mean == other.states[s].components[0].mean);
      CHECK(model.states[s].components[0].var == other.states[s].components[0].var);
      CHECK(model.states[s].components[0].weight == other.states[s].components[0].weight);
      CHECK(model.transitions[s] == other.transitions[s]);
    }
  }

  // save -> load -> save is byte-identical
  fs::path path2 = dir / "models2.json";
  save_models(loaded, path2);
  CHECK(read_text_file(path) == read_text_file(path2));

  SUBCASE("fingerprint mismatch is rejected") {
    CHECK_THROWS_AS(load_models(path, "some-other-frontend"), DataError);
  }
  SUBCASE("corrupted file is rejected") {
    std::string text = read_text_file(path);
    write_text_file_atomic(dir / "corrupt.json", text.substr(0, text.size() / 2));
    CHECK_THROWS_AS(load_models(dir / "corrupt.json"), DataError);
    write_text_file_atomic(dir / "notmodel.json", "{\"format\": \"something-else\"}");
    CHECK_THROWS_AS(load_models(dir / "notmodel.json"), DataError);
  }
  SUBCASE("wrong version is rejected") {
    nlohmann::json j = model_set_to_json(set);
    j["version"] = 999;
    write_text_file_atomic(dir / "badver.json", j.dump(1));
    CHECK_THROWS_AS(load_models(dir / "badver.json"), DataError);
  }
}
