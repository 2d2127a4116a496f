#include <benchmark/benchmark.h>

#include <cmath>

#include "asrkit/ctc.hpp"
#include "asrkit/features.hpp"
#include "asrkit/fusion.hpp"
#include "asrkit/lm.hpp"
#include "asrkit/model.hpp"
#include "asrkit/rng.hpp"

using namespace asrkit;

namespace {

LogProbMatrix random_log_probs(std::size_t T, std::size_t V, Rng& rng) {
  LogProbMatrix m(T, V);
  for (std::size_t t = 0; t < T; ++t) {
    double z = 0;
    for (std::size_t k = 0; k < V; ++k) z += std::exp(m(t, k) = static_cast<float>(rng.normal(0.0, 2.0)));
    for (std::size_t k = 0; k < V; ++k) m(t, k) -= static_cast<float>(std::log(z));
  }
  return m;
}

CharVocab letters(std::size_t V) {
  std::vector<std::string> s{CharVocab::kBlankSymbol, CharVocab::kSeparatorSymbol};
  for (std::size_t k = 2; k < V; ++k) s.push_back(std::string(1, static_cast<char>('a' + k - 2)));
  return CharVocab(s);
}

std::vector<Sentence> corpus(Rng& rng, std::size_t n) {
  std::vector<Sentence> out(n);
  for (auto& s : out)
    for (std::size_t k = 0, len = 3 + rng.uniform_int(6); k < len; ++k) {
      const double u = rng.uniform();
      s.push_back("w" + std::to_string(static_cast<int>(u * u * 200)));
    }
  return out;
}

void BM_LogMel(benchmark::State& st) {
  Rng rng(1);
  std::vector<float> audio(static_cast<std::size_t>(st.range(0)) * 16);
  for (auto& x : audio) x = static_cast<float>(rng.normal(0.0, 0.1));
  for (auto _ : st) benchmark::DoNotOptimize(logmel_features(audio, 16000, 40));
  st.SetLabel(std::to_string(st.range(0)) + " ms");
}
BENCHMARK(BM_LogMel)->Arg(1000)->Arg(5000);

void BM_CtcLoss(benchmark::State& st) {
  Rng rng(2);
  const auto T = static_cast<std::size_t>(st.range(0));
  BasicMatrix<float> lp = random_log_probs(T, 30, rng);
  std::vector<int> label;
  for (std::size_t i = 0; i < T / 3; ++i) label.push_back(1 + static_cast<int>(rng.uniform_int(29)));
  for (auto _ : st) benchmark::DoNotOptimize(ctc_loss<float>(lp, label, true));
}
BENCHMARK(BM_CtcLoss)->Arg(100)->Arg(400);

void BM_BeamSearch(benchmark::State& st) {
  Rng rng(3);
  LogProbMatrix lp = random_log_probs(100, 14, rng);
  CharVocab v = letters(14);
  BeamOptions o;
  o.beam_width = static_cast<std::size_t>(st.range(0));
  for (auto _ : st) benchmark::DoNotOptimize(prefix_beam_search(lp, v, nullptr, o));
}
BENCHMARK(BM_BeamSearch)->Arg(1)->Arg(8)->Arg(32);

void BM_ModelForward(benchmark::State& st) {
  ModelConfig cfg;
  cfg.vocab_size = 30;
  auto p = ModelParams<float>::init(cfg, 4);
  Rng rng(4);
  LogProbMatrix x(static_cast<std::size_t>(st.range(0)), 40);
  for (auto& v : x.data) v = static_cast<float>(rng.normal());
  for (auto _ : st) benchmark::DoNotOptimize(infer(p, cfg, x));
}
BENCHMARK(BM_ModelForward)->Arg(100)->Arg(300);

void BM_TrainKn(benchmark::State& st) {
  Rng rng(5);
  auto sentences = corpus(rng, static_cast<std::size_t>(st.range(0)));
  for (auto _ : st) benchmark::DoNotOptimize(train_kn(sentences, KnOptions{4, {}}));
}
BENCHMARK(BM_TrainKn)->Arg(1000)->Arg(5000);

void BM_BuildCn(benchmark::State& st) {
  Rng rng(6);
  std::vector<NBestList> systems(2);
  for (auto& l : systems)
    for (int i = 0; i < 50; ++i) {
      NBestHypothesis h;
      for (std::size_t k = 0, len = 8 + rng.uniform_int(4); k < len; ++k)
        h.words.push_back("w" + std::to_string(rng.uniform_int(12)));
      h.word_count = h.words.size();
      h.am_score = -rng.uniform(0, 10);
      h.lm_score = -rng.uniform(0, 10);
      l.hypotheses.push_back(h);
    }
  std::vector<SystemWeights> w(2);
  for (auto _ : st) benchmark::DoNotOptimize(build_cn({&systems[0], &systems[1]}, {0.5, 0.5}, w));
}
BENCHMARK(BM_BuildCn);

}  // namespace

BENCHMARK_MAIN();
