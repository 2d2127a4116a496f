#include <cmath>
#include <cstring>
#include <map>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "asrkit/corpus.hpp"
#include "asrkit/error.hpp"
#include "asrkit/features.hpp"
#include "asrkit/matrix_io.hpp"
#include "asrkit/wav.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace asrkit;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& s) {
  std::ofstream os(p, std::ios::binary);
  os << s;
}

Utterance make_utt(const std::string& id, const std::string& spk, const std::string& dia, Sentence words) {
  Utterance u;
  u.id = id;
  u.speaker_id = spk;
  u.dialect_id = dia;
  u.transcript = std::move(words);
  u.audio_path = "wav/" + id + ".wav";
  u.duration = 1.0;
  return u;
}

}  // namespace

TEST_SUITE("corpus") {
  TEST_CASE("empty manifest gives empty corpus") {
    oracle::TempDir dir("manifest-empty");
    write_file(dir.path / "m.jsonl", "");
    Corpus c = read_manifest(dir.path / "m.jsonl");
    CHECK(c.size() == 0);
    CHECK(c.dialect_inventory().empty());
  }

  TEST_CASE("manifest inventories and line order") {
    oracle::TempDir dir("manifest-two");
    write_file(dir.path / "m.jsonl",
               R"({"id":"u1","speaker_id":"s1","dialect_id":"d1","text":"a b","audio":"x.wav","sample_rate":16000,"duration":1.0})"
               "\n"
               R"({"id":"u2","speaker_id":"s2","dialect_id":"d2","text":"c","audio":"y.wav","sample_rate":16000,"duration":0.5})"
               "\n");
    Corpus c = read_manifest(dir.path / "m.jsonl");
    REQUIRE(c.size() == 2);
    CHECK(c[0].id == "u1");
    CHECK(c[1].id == "u2");
    CHECK(c.dialect_inventory() == std::set<std::string>{"d1", "d2"});
    CHECK(c.speaker_inventory() == std::set<std::string>{"s1", "s2"});
    CHECK(c.resolve_audio(c[0]) == dir.path / "x.wav");
  }

  TEST_CASE("missing speaker_id is a parse error citing line 1") {
    oracle::TempDir dir("manifest-bad");
    write_file(dir.path / "m.jsonl",
               R"({"id":"u1","dialect_id":"d1","text":"a","audio":"x.wav","sample_rate":16000,"duration":1.0})"
               "\n");
    try {
      read_manifest(dir.path / "m.jsonl");
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(std::string(e.what()).find(":1:") != std::string::npos);
    }
  }

  TEST_CASE("duplicate ids are rejected") {
    Corpus c;
    c.add(make_utt("a", "s", "d", {"x"}));
    CHECK_THROWS_AS(c.add(make_utt("a", "s", "d", {"y"})), ValidationError);
  }

  TEST_CASE("utterance invariants") {
    CHECK_THROWS_AS(validate_utterance(make_utt("a", "s", "d", {})), ValidationError);
    CHECK_THROWS_AS(validate_utterance(make_utt("a", "s", "d", {""})), ValidationError);
    CHECK_THROWS_AS(validate_utterance(make_utt("a", "s", "d", {"x y"})), ValidationError);
    Utterance u = make_utt("a", "s", "d", {"x", "y"});
    u.alignment = std::vector<WordSpan>{WordSpan::from_frames(0, 0, 5, 16000), WordSpan::from_frames(1, 4, 8, 16000)};
    CHECK_THROWS_AS(validate_utterance(u), ValidationError);  // overlap
    u.alignment = std::vector<WordSpan>{WordSpan::from_frames(0, 0, 5, 16000)};
    CHECK_THROWS_AS(validate_utterance(u), ValidationError);  // count
    u.alignment = std::vector<WordSpan>{WordSpan::from_frames(0, 0, 5, 16000), WordSpan::from_frames(1, 5, 8, 16000)};
    CHECK_NOTHROW(validate_utterance(u));
  }

  TEST_CASE("manifest round trip, randomized") {
    oracle::TempDir dir("manifest-rt");
    Rng rng(11);
    for (int trial = 0; trial < 100; ++trial) {
      Corpus c(dir.path);
      const int n = 1 + static_cast<int>(rng.uniform_int(4));
      for (int i = 0; i < n; ++i) {
        Sentence words;
        const int nw = 1 + static_cast<int>(rng.uniform_int(4));
        for (int k = 0; k < nw; ++k) words.push_back(std::string(1 + rng.uniform_int(3), static_cast<char>('a' + rng.uniform_int(5))));
        Utterance u = make_utt("u" + std::to_string(i), "s" + std::to_string(rng.uniform_int(3)),
                               "d" + std::to_string(rng.uniform_int(2)), words);
        u.duration = 0.5 + static_cast<double>(rng.uniform_int(1000)) / 1000.0;
        if (rng.bernoulli(0.5)) {
          std::vector<WordSpan> spans;
          std::int64_t f = 0;
          for (int k = 0; k < nw; ++k) {
            spans.push_back(WordSpan::from_frames(k, f, f + 1 + static_cast<std::int64_t>(rng.uniform_int(4)), 16000));
            f = spans.back().end_frame;
          }
          u.duration = static_cast<double>(f * 160 + 240) / 16000.0;
          u.alignment = spans;
        }
        c.add(u);
      }
      write_manifest(c, dir.path / "m.jsonl");
      Corpus back = read_manifest(dir.path / "m.jsonl");
      REQUIRE(back.size() == c.size());
      for (std::size_t i = 0; i < c.size(); ++i) CHECK(back[i] == c[i]);
    }
  }

  TEST_CASE("wav write/read quantization") {
    oracle::TempDir dir("wav");
    std::vector<float> s{0.0f, 0.5f, -0.5f};
    write_wav(s, 16000, dir.path / "a.wav");
    Audio a = read_wav(dir.path / "a.wav");
    CHECK(a.sample_rate == 16000);
    REQUIRE(a.samples.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(a.samples[i] - s[i]) <= 1.0 / 32768);
    CHECK(a.samples[2] == -0.5f);

    Rng rng(3);
    std::vector<float> r(16000);
    for (auto& x : r) x = static_cast<float>(rng.uniform(-1.0, 1.0));
    write_wav(r, 16000, dir.path / "r.wav");
    Audio b = read_wav(dir.path / "r.wav");
    double mx = 0;
    for (std::size_t i = 0; i < r.size(); ++i) mx = std::max(mx, std::abs(static_cast<double>(b.samples[i] - r[i])));
    CHECK(mx <= 1.0 / 32768);
    // decoded samples re-encode to identical bytes
    write_wav(b.samples, 16000, dir.path / "r2.wav");
    CHECK(slurp(dir.path / "r.wav") == slurp(dir.path / "r2.wav"));
  }

  TEST_CASE("wav rejects unsupported formats") {
    oracle::TempDir dir("wav-bad");
    write_wav(std::vector<float>{0.1f, 0.2f}, 16000, dir.path / "ok.wav");
    std::string bytes = slurp(dir.path / "ok.wav");
    std::string eight = bytes;
    eight[34] = 8;  // bits per sample
    write_file(dir.path / "8bit.wav", eight);
    CHECK_THROWS_AS(read_wav(dir.path / "8bit.wav"), FormatError);
    std::string stereo = bytes;
    stereo[22] = 2;
    write_file(dir.path / "stereo.wav", stereo);
    CHECK_THROWS_AS(read_wav(dir.path / "stereo.wav"), FormatError);
    std::string fmt = bytes;
    fmt[20] = 3;  // IEEE float
    write_file(dir.path / "float.wav", fmt);
    CHECK_THROWS_AS(read_wav(dir.path / "float.wav"), FormatError);
    write_file(dir.path / "trunc.wav", bytes.substr(0, bytes.size() - 1));
    CHECK_THROWS_AS(read_wav(dir.path / "trunc.wav"), FormatError);
  }

  TEST_CASE("logmel frame count and constant input") {
    std::vector<float> one(400, 0.0f);
    CHECK(logmel_features(one, 16000, 40).rows == 1);
    std::vector<float> z(16000, 0.0f);
    LogProbMatrix m = logmel_features(z, 16000, 40);
    CHECK(m.rows == 1 + (16000 - 400) / 160);
    CHECK(m.rows == num_frames(16000, 16000));
    for (std::size_t t = 1; t < m.rows; ++t)
      for (std::size_t k = 0; k < m.cols; ++k) CHECK(m(t, k) == m(0, k));
    CHECK_THROWS(logmel_features(z, 0, 40));
  }

  TEST_CASE("1 kHz sine peaks in the mel band containing 1 kHz") {
    const int sr = 16000, n_mels = 40;
    std::vector<float> s(8000);
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = 0.5f * static_cast<float>(std::sin(2 * std::numbers::pi * 1000.0 * i / sr));
    LogProbMatrix m = logmel_features(s, sr, n_mels);
    // independent band layout: n_mels + 2 points equally spaced on the HTK mel scale
    auto mel = [](double f) { return 2595.0 * std::log10(1.0 + f / 700.0); };
    auto inv = [](double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); };
    std::vector<double> pts;
    for (int i = 0; i < n_mels + 2; ++i) pts.push_back(inv(mel(sr / 2.0) * i / (n_mels + 1)));
    int expect = -1;
    double best = -1;
    for (int b = 0; b < n_mels; ++b) {
      const double lo = pts[b], c = pts[b + 1], hi = pts[b + 2];
      double w = 0;
      if (1000.0 > lo && 1000.0 <= c) w = (1000.0 - lo) / (c - lo);
      else if (1000.0 > c && 1000.0 < hi) w = (hi - 1000.0) / (hi - c);
      if (w > best) best = w, expect = b;
    }
    for (std::size_t t = 0; t < m.rows; ++t) {
      auto row = m.row(t);
      CHECK(std::max_element(row.begin(), row.end()) - row.begin() == expect);
    }
  }

  TEST_CASE("normalize_features gives zero mean, unit variance") {
    Rng rng(5);
    LogProbMatrix m(50, 4);
    for (auto& v : m.data) v = static_cast<float>(rng.normal(3.0, 2.0));
    normalize_features(m);
    for (std::size_t k = 0; k < 4; ++k) {
      double s = 0, s2 = 0;
      for (std::size_t t = 0; t < 50; ++t) s += m(t, k), s2 += m(t, k) * m(t, k);
      CHECK(std::abs(s / 50) < 1e-5);
      CHECK(std::abs(s2 / 50 - 1.0) < 1e-3);
    }
  }

  TEST_CASE("LPM1 round trips are bit-exact") {
    oracle::TempDir dir("lpm");
    LogProbMatrix one(1, 1, 0.0f);
    write_matrix(one, dir.path / "one.lpm");
    CHECK(read_matrix(dir.path / "one.lpm") == one);
    Rng rng(9);
    for (int trial = 0; trial < 100; ++trial) {
      LogProbMatrix m(1 + rng.uniform_int(6), 1 + rng.uniform_int(6));
      for (auto& v : m.data) v = static_cast<float>(rng.normal(0, 100));
      write_matrix(m, dir.path / "m.lpm");
      LogProbMatrix back = read_matrix(dir.path / "m.lpm");
      REQUIRE(back.rows == m.rows);
      CHECK(std::memcmp(back.data.data(), m.data.data(), m.data.size() * 4) == 0);
    }
    std::string bytes = slurp(dir.path / "one.lpm");
    CHECK(bytes.substr(0, 4) == "LPM1");
    write_file(dir.path / "bad.lpm", "XXXX" + bytes.substr(4));
    CHECK_THROWS_AS(read_matrix(dir.path / "bad.lpm"), FormatError);
    write_file(dir.path / "short.lpm", bytes.substr(0, bytes.size() - 2));
    CHECK_THROWS_AS(read_matrix(dir.path / "short.lpm"), FormatError);
  }

  TEST_CASE("synth corpus bookkeeping") {
    oracle::TempDir dir("synth");
    SynthOptions o;
    o.seed = 4;
    o.n_speakers = 5;
    o.n_dialects = 5;
    o.n_unique_sentences = 17;
    o.repetitions_per_sentence = 34;
    o.min_words = 1;
    o.max_words = 2;
    Corpus c = synth_corpus(o, dir.path);
    CHECK(c.size() == 578);
    CorpusStats st = corpus_stats(c);
    CHECK(st.n_utterances == 578);
    CHECK(st.n_unique_sentences == 17);
    CHECK(st.n_dialects == 5);
    CHECK(st.n_speakers == 5);
    CHECK(st.hours > 0);
    std::map<std::string, int> per;
    for (const auto& u : c.utterances()) ++per[u.dialect_id];
    int lo = 1 << 30, hi = 0;
    for (auto& [d, n] : per) lo = std::min(lo, n), hi = std::max(hi, n);
    CHECK(hi - lo <= 1);
  }

  TEST_CASE("synth is deterministic and alignments tile the frames") {
    oracle::TempDir a("synth-a"), b("synth-b");
    SynthOptions o;
    o.seed = 21;
    Corpus ca = synth_corpus(o, a.path);
    Corpus cb = synth_corpus(o, b.path);
    write_manifest(ca, a.path / "m.jsonl");
    write_manifest(cb, b.path / "m.jsonl");
    CHECK(slurp(a.path / "m.jsonl") == slurp(b.path / "m.jsonl"));
    for (const auto& u : ca.utterances()) {
      CHECK(slurp(ca.resolve_audio(u)) == slurp(cb.resolve_audio(u)));
      Audio au = read_wav(ca.resolve_audio(u));
      const std::int64_t T = static_cast<std::int64_t>(num_frames(au.samples.size(), 16000));
      REQUIRE(u.alignment.has_value());
      const auto& sp = *u.alignment;
      CHECK(sp.front().start_frame == 0);
      CHECK(sp.back().end_frame == T);
      for (std::size_t i = 1; i < sp.size(); ++i) CHECK(sp[i].start_frame == sp[i - 1].end_frame);
    }
  }

  TEST_CASE("corpus_stats edge cases") {
    CorpusStats z = corpus_stats(Corpus{});
    CHECK(z.n_utterances == 0);
    CHECK(z.hours == 0.0);
    Corpus c;
    c.add(make_utt("a", "s", "d", {"x", "y"}));
    c.add(make_utt("b", "s", "d", {"x", "y"}));
    c.add(make_utt("c", "s", "d", {"x"}));
    CHECK(corpus_stats(c).n_unique_sentences == 2);
    CHECK(corpus_stats(c).n_unique_sentences <= corpus_stats(c).n_utterances);
  }

  TEST_CASE("charset smaller than two symbols is rejected") {
    oracle::TempDir dir("synth-bad");
    SynthOptions o;
    o.charset = "a";
    CHECK_THROWS_AS(synth_corpus(o, dir.path), ValidationError);
  }
}
