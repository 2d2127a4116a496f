// Independent reference implementations used by the unit and acceptance tests.
#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "asrkit/corpus.hpp"
#include "asrkit/ctc.hpp"
#include "asrkit/lm.hpp"
#include "asrkit/fusion.hpp"
#include "asrkit/model.hpp"
#include "asrkit/rng.hpp"
#include "asrkit/score.hpp"

namespace oracle {

using asrkit::BasicMatrix;
using asrkit::Mat;

// Scratch directory removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("asrkit-" + tag + "-" + std::to_string(asrkit::fnv1a64(tag + std::to_string(reinterpret_cast<std::uintptr_t>(this)))));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

// Random row-normalized log-probability matrix.
template <typename Real>
BasicMatrix<Real> random_log_probs(std::size_t T, std::size_t V, asrkit::Rng& rng, double spread = 2.0) {
  BasicMatrix<Real> m(T, V);
  for (std::size_t t = 0; t < T; ++t) {
    double mx = -1e300;
    std::vector<double> z(V);
    for (auto& v : z) mx = std::max(mx, v = rng.normal(0.0, spread));
    double s = 0.0;
    for (double v : z) s += std::exp(v - mx);
    for (std::size_t k = 0; k < V; ++k) m(t, k) = static_cast<Real>(z[k] - mx - std::log(s));
  }
  return m;
}

inline std::vector<int> collapse(const std::vector<int>& path) {
  std::vector<int> out;
  int prev = -1;
  for (int s : path) {
    if (s != prev && s != asrkit::CharVocab::kBlank) out.push_back(s);
    prev = s;
  }
  return out;
}

// Calls f(path) for every length-T sequence over V symbols.
template <typename F>
void for_each_path(std::size_t T, std::size_t V, F&& f) {
  std::vector<int> path(T, 0);
  while (true) {
    f(path);
    std::size_t i = 0;
    while (i < T && ++path[i] == static_cast<int>(V)) path[i++] = 0;
    if (i == T) break;
  }
}

// -ln sum over all alignments of `label` by explicit enumeration.
template <typename Real>
double brute_ctc_nll(const BasicMatrix<Real>& lp, const std::vector<int>& label) {
  double sum = 0.0;
  for_each_path(lp.rows, lp.cols, [&](const std::vector<int>& path) {
    if (collapse(path) != label) return;
    double s = 0.0;
    for (std::size_t t = 0; t < path.size(); ++t) s += static_cast<double>(lp(t, static_cast<std::size_t>(path[t])));
    sum += std::exp(s);
  });
  return sum > 0 ? -std::log(sum) : std::numeric_limits<double>::infinity();
}

// Label sequence with the highest CTC marginal; ties by lexicographic order.
inline std::pair<std::vector<int>, double> brute_best_labels(const asrkit::LogProbMatrix& lp) {
  std::map<std::vector<int>, double> mass;
  for_each_path(lp.rows, lp.cols, [&](const std::vector<int>& path) {
    double s = 0.0;
    for (std::size_t t = 0; t < path.size(); ++t) s += lp(t, static_cast<std::size_t>(path[t]));
    mass[collapse(path)] += std::exp(s);
  });
  std::pair<std::vector<int>, double> best{{}, -1.0};
  for (const auto& [k, v] : mass)
    if (v > best.second) best = {k, v};  // map order gives the lexicographic tie-break
  best.second = std::log(best.second);
  return best;
}

// Textbook prefix beam search without LM: map-based, ranks by total
// probability with lexicographic ties.  Returns (labels, log marginal).
inline std::vector<std::pair<std::vector<int>, double>> reference_prefix_beam(const asrkit::LogProbMatrix& lp,
                                                                              std::size_t width) {
  const double ninf = -std::numeric_limits<double>::infinity();
  auto lae = [&](double a, double b) {
    if (a == ninf) return b;
    if (b == ninf) return a;
    const double m = std::max(a, b);
    return m + std::log(std::exp(a - m) + std::exp(b - m));
  };
  std::map<std::vector<int>, std::pair<double, double>> beam{{{}, {0.0, ninf}}};
  for (std::size_t t = 0; t < lp.rows; ++t) {
    std::map<std::vector<int>, std::pair<double, double>> next;
    auto get = [&](const std::vector<int>& k) -> std::pair<double, double>& {
      return next.try_emplace(k, ninf, ninf).first->second;
    };
    for (const auto& [l, p] : beam) {
      const double tot = lae(p.first, p.second);
      auto& self = get(l);
      self.first = lae(self.first, tot + lp(t, 0));
      if (!l.empty()) self.second = lae(self.second, p.second + lp(t, static_cast<std::size_t>(l.back())));
      for (int c = 1; c < static_cast<int>(lp.cols); ++c) {
        auto k = l;
        k.push_back(c);
        const double via = (!l.empty() && l.back() == c) ? p.first : tot;
        auto& e = get(k);
        e.second = lae(e.second, via + lp(t, static_cast<std::size_t>(c)));
      }
    }
    std::vector<std::pair<double, std::vector<int>>> ranked;
    for (const auto& [k, p] : next) ranked.emplace_back(lae(p.first, p.second), k);
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    if (ranked.size() > width) ranked.resize(width);
    beam.clear();
    for (const auto& [s, k] : ranked) beam[k] = next[k];
  }
  std::vector<std::pair<std::vector<int>, double>> out;
  for (const auto& [k, p] : beam) out.emplace_back(k, lae(p.first, p.second));
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  return out;
}

// Toy model for gradient checks.
inline asrkit::ModelConfig toy_config(int vocab = 5) {
  asrkit::ModelConfig c;
  c.feature_dim = 5;
  c.d_model = 8;
  c.n_layers = 2;
  c.n_heads = 2;
  c.ffn_dim = 12;
  c.vocab_size = vocab;
  c.dropout_p = 0.1;
  c.layerdrop_p = 0.0;
  return c;
}

struct GradCheck {
  double max_rel_error = 0.0;  // worst tensor
  std::string worst_tensor;
  std::size_t checked = 0;
};

// Relative error of one tensor: max |analytic - numeric| / max(max|analytic|, max|numeric|).
// A gradient that is exactly zero in theory (key biases without a prefix:
// softmax ignores a per-row shift) comes out at rounding level analytically
// and at difference-quotient noise numerically; such a tensor is reported as
// the absolute numeric magnitude, which must sit below the noise bound.
inline double tensor_rel_error(const Mat<double>& a, const Mat<double>& n) {
  const double amax = a.cwiseAbs().maxCoeff(), nmax = n.cwiseAbs().maxCoeff();
  if (amax < 1e-12) return nmax < 1e-7 ? nmax : 1.0;
  return (a - n).cwiseAbs().maxCoeff() / std::max(amax, nmax);
}

// CTC loss of the toy model (train mode, dropout masks fixed by `seed`)
// checked against central differences for every parameter entry and, when
// prefix_length > 0, every prefix entry.
inline GradCheck model_grad_check(std::uint64_t seed, std::size_t prefix_length, bool train_mode = true) {
  using namespace asrkit;
  ModelConfig cfg = toy_config();
  cfg.seed = seed;
  ModelParams<double> p = ModelParams<double>::init(cfg, seed);
  Rng r = Rng::derive(seed, "gradcheck");
  // Perturb gains/biases away from their 1/0 init so every path is exercised.
  p.visit([&](const std::string&, Mat<double>& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] += r.normal(0.0, 0.1);
  });
  const Eigen::Index T = 7;
  Mat<double> x(T, cfg.feature_dim);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = r.normal();
  std::vector<int> label{2, 3, 1, 4};
  PrefixKV<double> prefix;
  for (int l = 0; prefix_length > 0 && l < cfg.n_layers; ++l) {
    Mat<double> k(static_cast<Eigen::Index>(prefix_length), cfg.d_model), v(k.rows(), k.cols());
    for (Eigen::Index i = 0; i < k.size(); ++i) k.data()[i] = r.normal(0.0, 0.5);
    for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = r.normal(0.0, 0.5);
    prefix.keys.push_back(k);
    prefix.values.push_back(v);
  }
  const PrefixKV<double>* pp = prefix_length ? &prefix : nullptr;
  const Mode mode = train_mode ? Mode::Train : Mode::Eval;

  auto loss = [&]() {
    Rng dr(seed);
    Mat<double> lp = forward<double>(p, cfg, x, mode, pp, &dr);
    return ctc_loss<double>(from_eigen(lp), label, false).loss;
  };
  Rng dr(seed);
  ForwardCache<double> cache;
  Mat<double> lp = forward<double>(p, cfg, x, mode, pp, &dr, &cache);
  auto ctc = ctc_loss<double>(from_eigen(lp), label, true);
  Gradients<double> g = backward<double>(p, cfg, cache, to_eigen(ctc.grad));

  GradCheck out;
  const double h = 1e-6;
  auto check = [&](const std::string& name, Mat<double>& w, const Mat<double>& analytic) {
    Mat<double> numeric(w.rows(), w.cols());
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      const double keep = w.data()[i];
      w.data()[i] = keep + h;
      const double up = loss();
      w.data()[i] = keep - h;
      const double down = loss();
      w.data()[i] = keep;
      numeric.data()[i] = (up - down) / (2 * h);
      ++out.checked;
    }
    const double e = tensor_rel_error(analytic, numeric);
    if (e > out.max_rel_error) {
      out.max_rel_error = e;
      out.worst_tensor = name;
    }
  };
  std::vector<const Mat<double>*> grads;
  g.params.visit([&](const std::string&, const Mat<double>& m) { grads.push_back(&m); });
  std::size_t k = 0;
  p.visit([&](const std::string& name, Mat<double>& w) { check(name, w, *grads[k++]); });
  for (std::size_t l = 0; l < prefix.keys.size(); ++l) {
    check("prefix.k" + std::to_string(l), prefix.keys[l], g.prefix.keys[l]);
    check("prefix.v" + std::to_string(l), prefix.values[l], g.prefix.values[l]);
  }
  return out;
}

// Expected number of slot disagreements between `choice` and the pooled
// hypotheses, each read along its path through the network.
inline double expected_slot_loss(const asrkit::CnBuild& b, const std::vector<std::string>& choice) {
  double total_mass = 0.0, loss = 0.0;
  for (const auto& ph : b.pooled) total_mass += ph.mass;
  for (const auto& ph : b.pooled)
    for (std::size_t i = 0; i < choice.size(); ++i)
      if (ph.path[i] != choice[i]) loss += ph.mass / total_mass;
  return loss;
}

// Expected word edit distance between the emitted words and the pooled hypotheses.
inline double expected_edit_loss(const asrkit::CnBuild& b, const std::vector<std::string>& choice) {
  std::vector<std::string> words;
  for (const auto& c : choice)
    if (c != asrkit::kEpsilon) words.push_back(c);
  double total_mass = 0.0, loss = 0.0;
  for (const auto& ph : b.pooled) total_mass += ph.mass;
  for (const auto& ph : b.pooled) loss += ph.mass / total_mass * static_cast<double>(asrkit::edit_distance(ph.words, words));
  return loss;
}

// Minimum of `loss` over every slot-wise token choice.
template <typename Loss>
double min_over_slot_choices(const asrkit::CnBuild& b, Loss&& loss) {
  const auto& slots = b.cn.slots;
  std::vector<std::vector<std::string>> options;
  for (const auto& s : slots) {
    std::vector<std::string> o;
    for (const auto& [w, m] : s.mass) o.push_back(w);
    if (!s.mass.count(asrkit::kEpsilon)) o.push_back(asrkit::kEpsilon);
    options.push_back(o);
  }
  std::vector<std::size_t> idx(slots.size(), 0);
  double best = std::numeric_limits<double>::infinity();
  while (true) {
    std::vector<std::string> choice;
    for (std::size_t i = 0; i < slots.size(); ++i) choice.push_back(options[i][idx[i]]);
    best = std::min(best, loss(b, choice));
    std::size_t i = 0;
    while (i < slots.size() && ++idx[i] == options[i].size()) idx[i++] = 0;
    if (i == slots.size()) break;
  }
  return best;
}

// Slot-wise tokens chosen by decode_cn (epsilon where nothing is emitted).
inline std::vector<std::string> decoded_slots(const asrkit::ConfusionNetwork& cn) {
  std::vector<std::string> out;
  for (const auto& s : cn.slots) {
    asrkit::ConfusionNetwork one;
    one.slots.push_back(s);
    auto w = asrkit::decode_cn(one);
    out.push_back(w.empty() ? std::string(asrkit::kEpsilon) : w[0]);
  }
  return out;
}

// Random N-best list over a small word set.
inline asrkit::NBestList random_nbest(asrkit::Rng& rng, std::size_t n_hyp, std::size_t max_words,
                                      const std::vector<std::string>& words, const std::string& id = "u") {
  asrkit::NBestList nb;
  nb.utterance_id = id;
  for (std::size_t i = 0; i < n_hyp; ++i) {
    asrkit::NBestHypothesis h;
    const std::size_t len = static_cast<std::size_t>(rng.uniform_int(max_words + 1));
    for (std::size_t k = 0; k < len; ++k) h.words.push_back(words[rng.uniform_int(words.size())]);
    h.word_count = h.words.size();
    h.am_score = -rng.uniform(0.0, 5.0);
    h.lm_score = -rng.uniform(0.0, 5.0);
    nb.hypotheses.push_back(std::move(h));
  }
  return nb;
}


// Blank, separator, then letters a, b, ... for V symbols in total.
inline asrkit::CharVocab letters(std::size_t V) {
  std::vector<std::string> s{asrkit::CharVocab::kBlankSymbol, asrkit::CharVocab::kSeparatorSymbol};
  for (std::size_t k = 2; k < V; ++k) s.push_back(std::string(1, static_cast<char>('a' + k - 2)));
  return asrkit::CharVocab(s);
}

// Every label sequence over symbols 1..V-1 up to max_len, shortest first.
inline void enumerate_labels(std::size_t max_len, int V, std::vector<int>& cur, std::vector<std::vector<int>>& out) {
  out.push_back(cur);
  if (cur.size() == max_len) return;
  for (int c = 1; c < V; ++c) {
    cur.push_back(c);
    enumerate_labels(max_len, V, cur, out);
    cur.pop_back();
  }
}

// Sentences of 1..max_len words drawn from w0..w{vocab-1}.
inline std::vector<asrkit::Sentence> random_corpus(asrkit::Rng& rng, std::size_t n, std::size_t vocab,
                                                  std::size_t max_len) {
  std::vector<asrkit::Sentence> out;
  for (std::size_t i = 0; i < n; ++i) {
    asrkit::Sentence s;
    const std::size_t len = 1 + rng.uniform_int(max_len);
    for (std::size_t k = 0; k < len; ++k) {
      // skewed draw so count-of-counts are non-degenerate
      const double u = rng.uniform();
      s.push_back("w" + std::to_string(static_cast<std::size_t>(u * u * static_cast<double>(vocab))));
    }
    out.push_back(s);
  }
  return out;
}

// Sum over every predictable word, following back-off, for every context of
// length order-1 over the vocabulary (plus <s>-anchored contexts).
inline double worst_mass_error(const asrkit::NGramModel& m) {
  const int V = static_cast<int>(m.vocab().size());
  std::vector<std::vector<int>> contexts{{}};
  for (int len = 1; len < m.order(); ++len) {
    std::vector<std::vector<int>> next;
    for (const auto& c : contexts)
      if (static_cast<int>(c.size()) == len - 1)
        for (int w = 0; w < V; ++w) {
          if (w == asrkit::Vocabulary::kEos) continue;
          if (w == asrkit::Vocabulary::kBos && !c.empty()) continue;
          auto k = c;
          k.push_back(w);
          next.push_back(k);
        }
    contexts.insert(contexts.end(), next.begin(), next.end());
  }
  double worst = 0;
  for (const auto& ctx : contexts) {
    double s = 0;
    for (int w = 0; w < V; ++w)
      if (w != asrkit::Vocabulary::kBos) s += std::pow(10.0, m.log10_prob(ctx, w));
    worst = std::max(worst, std::abs(s - 1.0));
  }
  return worst;
}

// Alignment-only corpus with no audio, for planning statistics.
inline asrkit::Corpus planning_corpus(std::size_t n_utts, std::size_t n_words, std::size_t n_speakers) {
  asrkit::Corpus c;
  for (std::size_t i = 0; i < n_utts; ++i) {
    asrkit::Utterance u;
    u.id = "u" + std::to_string(i);
    u.speaker_id = "s" + std::to_string(i % n_speakers);
    u.dialect_id = "d0";
    std::vector<asrkit::WordSpan> spans;
    for (std::size_t w = 0; w < n_words; ++w) {
      u.transcript.push_back("w" + std::to_string((i + w) % 13));
      spans.push_back(asrkit::WordSpan::from_frames(static_cast<int>(w), static_cast<std::int64_t>(2 * w),
                                                    static_cast<std::int64_t>(2 * w + 2), asrkit::kDefaultSampleRate));
    }
    u.alignment = spans;
    u.duration = static_cast<double>(2 * n_words * asrkit::hop_samples(asrkit::kDefaultSampleRate)) / asrkit::kDefaultSampleRate;
    u.audio_path = "wav/" + u.id + ".wav";
    c.add(u);
  }
  return c;
}

}  // namespace oracle
