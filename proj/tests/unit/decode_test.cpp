// Prefix-tree decoding network and token-passing beam search.

#include <cmath>
#include <random>

#include "doctest.h"
#include "polyphone/decode.hpp"
#include "polyphone/eval.hpp"
#include "test_util.hpp"

using namespace polyphone;

namespace {

AcousticModelSet chain_models(const std::vector<std::string> &bases) {
  AcousticModelSet set;
  set.mode = ModelMode::genre_agnostic;
  set.dim = 2;
  set.feature_fingerprint = "toy";
  int i = 0;
  auto add = [&](const Phone &phone, double offset) {
    HmmPhoneModel model;
    model.phone = phone;
    const int n = phone.is_silence ? kSilenceStates : kSpeechStates;
    for (int s = 0; s < n; s++)
      model.states.push_back(
          GaussianMixture::single({offset + 0.7 * s, offset - 0.7 * s}, {0.4, 0.4}));
    model.transitions = HmmPhoneModel::uniform_transitions(phone.is_silence);
    set.models.emplace(phone, model);
  };
  for (const auto &base : bases) add(Phone::speech(base), 4.0 * i++);
  add(Phone::silence(), -6.0);
  return set;
}

NgramModel tiny_lm(const std::vector<std::vector<std::string>> &corpus, int order = 2) {
  return train_ngram(corpus, order);
}

}  // namespace

TEST_CASE("build_decode_network structure") {
  SUBCASE("single-word lexicon is a linear chain with one word end") {
    Lexicon lex = parse_lexicon_text("GO\tG OW\n", "<t>");
    auto models = chain_models({"G", "OW"});
    DecodeNetwork net = build_decode_network(lex, models);
    CHECK(net.tree_node_count == 2);
    CHECK(net.words == std::vector<std::string>{"GO"});
    // exactly one word-labelled ending
    size_t label_finals = 0;
    for (const auto &fins : net.finals)
      for (const auto &f : fins)
        if (f.word >= 0) label_finals++;
    CHECK(label_finals == 1);
  }
  SUBCASE("shared prefixes share tree nodes: CAT, CAB, DOG -> 7 nodes") {
    Lexicon lex = parse_lexicon_text("CAT\tK AE T\nCAB\tK AE B\nDOG\tD AO G\n", "<t>");
    auto models = chain_models({"K", "AE", "T", "B", "D", "AO", "G"});
    DecodeNetwork net = build_decode_network(lex, models);
    CHECK(net.tree_node_count == 7);  // K, K.AE, K.AE.T, K.AE.B, D, D.AO, D.AO.G
  }
  SUBCASE("empty lexicon is rejected") {
    Lexicon empty;
    auto models = chain_models({"G"});
    CHECK_THROWS_AS(build_decode_network(empty, models), DataError);
  }
}

TEST_CASE("beam_decode with no pruning equals exhaustive search") {
  Lexicon lex = parse_lexicon_text("GO\tG OW\nNO\tN OW\n", "<t>");
  auto models = chain_models({"G", "OW", "N"});
  NgramModel lm = tiny_lm({{"GO", "NO"}, {"NO", "GO"}, {"GO", "GO"}});

  DecodeConfig config;
  config.beam = 0;        // off
  config.max_active = 0;  // off
  config.lm_weight = 2.0;
  config.word_insertion_penalty = -0.5;

  DecodeNetwork net = build_decode_network(lex, models, config);
  std::mt19937 rng(99);
  std::uniform_real_distribution<double> jitter(-0.4, 0.4);
  for (int trial = 0; trial < 6; trial++) {
    // features that roughly spell one or two words with some noise
    FeatureMatrix feats;
    feats.frame_hop = 0.01;
    auto push = [&](const Phone &p, int s, int times) {
      for (int i = 0; i < times; i++) {
        auto m = models.model(p).states[s].components[0].mean;
        for (double &v : m) v += jitter(rng);
        feats.frames.push_back(m);
      }
    };
    const char *first = trial % 2 ? "G" : "N";
    push(Phone::silence(), 2, 2);
    push(Phone::speech(first), 0, 2);
    push(Phone::speech(first), 1, 2);
    push(Phone::speech(first), 2, 2);
    push(Phone::speech("OW"), 0, 2);
    push(Phone::speech("OW"), 1, 1);
    push(Phone::speech("OW"), 2, 2);
    if (trial % 3 == 0) push(Phone::silence(), 2, 3);

    TranscriptResult hyp = beam_decode(net, feats, models, lm, config);
    auto oracle = testutil::exhaustive_decode(lex, models, lm, feats, config, 3);
    CAPTURE(trial);
    CHECK(hyp.words == oracle.words);
    CHECK(hyp.total_score == doctest::Approx(oracle.score).epsilon(1e-9));
  }
}

TEST_CASE("lm_weight zero makes the output LM-invariant") {
  Lexicon lex = parse_lexicon_text("GO\tG OW\nNO\tN OW\n", "<t>");
  auto models = chain_models({"G", "OW", "N"});
  NgramModel lm_a = tiny_lm({{"GO"}, {"GO"}, {"GO", "GO"}});
  NgramModel lm_b = tiny_lm({{"NO"}, {"NO", "NO"}});

  DecodeConfig config;
  config.beam = 0;
  config.max_active = 0;
  config.lm_weight = 0.0;

  FeatureMatrix feats;
  feats.frame_hop = 0.01;
  for (int s = 0; s < 3; s++)
    for (int i = 0; i < 3; i++)
      feats.frames.push_back(models.model(Phone::speech("N")).states[s].components[0].mean);
  for (int s = 0; s < 3; s++)
    for (int i = 0; i < 2; i++)
      feats.frames.push_back(models.model(Phone::speech("OW")).states[s].components[0].mean);

  DecodeNetwork net = build_decode_network(lex, models, config);
  TranscriptResult ha = beam_decode(net, feats, models, lm_a, config);
  TranscriptResult hb = beam_decode(net, feats, models, lm_b, config);
  CHECK(ha.words == hb.words);
  CHECK(ha.words == std::vector<std::string>{"NO"});
  CHECK(ha.total_score == doctest::Approx(hb.total_score).epsilon(1e-12));
}

TEST_CASE("widening the beam never lowers the best score") {
  Lexicon lex = parse_lexicon_text("GO\tG OW\nNO\tN OW\n", "<t>");
  auto models = chain_models({"G", "OW", "N"});
  NgramModel lm = tiny_lm({{"GO", "NO"}});

  FeatureMatrix feats;
  feats.frame_hop = 0.01;
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> dist(-1.0, 5.0);
  feats.frames.assign(12, std::vector<double>(2));
  for (auto &fr : feats.frames)
    for (double &v : fr) v = dist(rng);

  // exact search bounds every pruned run from above; wider beams (spaced
  // beyond the per-frame score spread) never score worse
  DecodeConfig exact_config;
  exact_config.beam = 0;
  exact_config.max_active = 0;
  exact_config.lm_weight = 1.0;
  DecodeNetwork net = build_decode_network(lex, models, exact_config);
  const double exact = beam_decode(net, feats, models, lm, exact_config).total_score;

  double last_score = -1e300;
  for (double beam : {40.0, 100.0, 250.0, 0.0 /* off */}) {
    DecodeConfig config = exact_config;
    config.beam = beam;
    double score = -1e300;
    try {
      score = beam_decode(net, feats, models, lm, config).total_score;
    } catch (const DataError &) {
    }
    CHECK(score <= exact + 1e-9);
    CHECK(score >= last_score - 1e-9);
    last_score = score;
  }
  CHECK(last_score == doctest::Approx(exact).epsilon(1e-12));
}

TEST_CASE("beam_decode recovers trained synthetic utterances exactly") {
  SynthSpec spec = default_synth_spec();
  spec.songs_per_genre = 1;
  spec.lines_per_song = 3;
  spec.words_per_line = 3;
  spec.interlude_dur_min = 0.4;
  spec.interlude_dur_max = 0.8;
  FeatureConfig config;
  auto data = testutil::make_synth_data(spec, 88, config, {GenreBroadclass::pop});
  Lexicon lex = spec.lexicon();

  std::vector<const FeatureMatrix *> sample = {&data.train[0].features};
  TrainSchedule schedule;
  schedule.iterations = 6;
  schedule.split_iterations = {};
  AcousticModelSet models =
      train_em(flat_start(inventory_for_mode(lex, ModelMode::genre_agnostic), sample,
                          ModelMode::genre_agnostic, config.fingerprint()),
               data.train, lex, schedule)
          .models;
  NgramModel lm = train_ngram({{"MOON", "STAR"}, {"GOLD", "DREAM"}, {"ECHO", "DUSK"},
                               {"STONE", "RUN"}, {"MIST", "SOUL"}},
                              2);

  DecodeConfig dc;
  dc.beam = 0;  // exact
  dc.max_active = 0;
  dc.lm_weight = 1.0;
  DecodeNetwork net = build_decode_network(lex, models, dc);

  const auto &feats = data.train[0].features;
  size_t exact = 0, lines = 0;
  std::vector<std::string> all_ref, all_hyp;
  for (const auto &line : data.train[0].lines) {
    FeatureMatrix slice =
        feats.slice(feats.frame_index(line.line_start), feats.frame_index(line.line_end));
    TranscriptResult hyp = beam_decode(net, slice, models, lm, dc);
    lines++;
    if (hyp.words == line.text) exact++;
    all_ref.insert(all_ref.end(), line.text.begin(), line.text.end());
    all_hyp.insert(all_hyp.end(), hyp.words.begin(), hyp.words.end());
  }
  CHECK(exact == lines);  // WER 0 on every line
  CHECK(word_error_rate(all_ref, all_hyp) == 0.0);

  SUBCASE("shuffled model parameters decode worse") {
    // rotate state means across phones; structure intact, acoustics nonsense
    AcousticModelSet shuffled = models;
    std::vector<Phone> phones;
    for (const auto &[p, m] : shuffled.models)
      if (!p.is_silence) phones.push_back(p);
    for (size_t i = 0; i < phones.size(); i++) {
      const auto &src = models.model(phones[(i + 3) % phones.size()]);
      auto &dst = shuffled.mutable_model(phones[i]);
      for (int s = 0; s < dst.num_states(); s++) {
        dst.states[s].components = src.states[s].components;
        dst.states[s].finalize();
      }
    }
    DecodeNetwork bad_net = build_decode_network(lex, shuffled, dc);
    std::vector<std::string> bad_hyp;
    for (const auto &line : data.train[0].lines) {
      FeatureMatrix slice =
          feats.slice(feats.frame_index(line.line_start), feats.frame_index(line.line_end));
      TranscriptResult hyp = beam_decode(bad_net, slice, shuffled, lm, dc);
      bad_hyp.insert(bad_hyp.end(), hyp.words.begin(), hyp.words.end());
    }
    CHECK(word_error_rate(all_ref, bad_hyp) > word_error_rate(all_ref, all_hyp));
  }
}

TEST_CASE("beam_decode error paths") {
  Lexicon lex = parse_lexicon_text("GO\tG OW\n", "<t>");
  auto models = chain_models({"G", "OW"});
  NgramModel lm = tiny_lm({{"GO"}});
  DecodeConfig config;
  DecodeNetwork net = build_decode_network(lex, models, config);

  SUBCASE("empty features") {
    FeatureMatrix feats;
    CHECK_THROWS_AS(beam_decode(net, feats, models, lm, config), DataError);
  }
  SUBCASE("utterance too short for any complete hypothesis") {
    FeatureMatrix feats;
    feats.frames.assign(1, std::vector<double>(2, 0.0));  // SIL needs 2, a word needs 6
    CHECK_THROWS_AS(beam_decode(net, feats, models, lm, config), DataError);
  }
}
