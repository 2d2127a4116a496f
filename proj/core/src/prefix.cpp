#include "asrkit/prefix.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <thread>

#include "asrkit/error.hpp"

namespace asrkit {

PrefixConfig PrefixConfig::for_model(const ModelConfig& m, std::size_t prefix_length) {
  return {prefix_length, static_cast<std::size_t>(m.n_layers), static_cast<std::size_t>(m.d_model)};
}

void PrefixConfig::check(const ModelConfig& m) const {
  if (n_layers != static_cast<std::size_t>(m.n_layers) || d_model != static_cast<std::size_t>(m.d_model))
    throw ValidationError("prefix config does not match backbone (layers " + std::to_string(n_layers) + " vs " +
                          std::to_string(m.n_layers) + ", d_model " + std::to_string(d_model) + " vs " +
                          std::to_string(m.d_model) + ")");
}

std::int64_t count_prefix_params(const PrefixConfig& cfg) {
  return static_cast<std::int64_t>(cfg.prefix_length) * static_cast<std::int64_t>(cfg.n_layers) *
         static_cast<std::int64_t>(cfg.d_model) * 2;
}

PrefixKV<float> init_prefix(const PrefixConfig& cfg, double stddev, Rng& rng) {
  PrefixKV<float> p;
  const auto L = static_cast<Eigen::Index>(cfg.prefix_length), d = static_cast<Eigen::Index>(cfg.d_model);
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    Mat<float> k(L, d), v(L, d);
    for (Eigen::Index i = 0; i < k.size(); ++i) k.data()[i] = static_cast<float>(rng.normal(0.0, stddev));
    for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = static_cast<float>(rng.normal(0.0, stddev));
    p.keys.push_back(std::move(k));
    p.values.push_back(std::move(v));
  }
  return p;
}

void PrefixTrainConfig::validate() const {
  if (!(learning_rate > 0) || weight_decay < 0 || batch_size < 1 || epochs < 1 || init_stddev < 0)
    throw ValidationError("prefix train config: invalid values");
}

template <typename Real>
PrefixLoss<Real> prefix_loss(const ModelParams<Real>& backbone, const ModelConfig& cfg, const PrefixKV<Real>& prefix,
                             const Mat<Real>& features, const std::vector<int>& labels) {
  ForwardCache<Real> cache;
  Mat<Real> lp = forward<Real>(backbone, cfg, features, Mode::Eval, &prefix, nullptr, &cache);
  auto ctc = ctc_loss<Real>(from_eigen(lp), labels, true);
  PrefixLoss<Real> out;
  out.loss = ctc.loss;
  if (!std::isfinite(ctc.loss)) {
    for (std::size_t l = 0; l < prefix.num_layers(); ++l) {
      out.grad.keys.push_back(Mat<Real>::Zero(prefix.keys[l].rows(), prefix.keys[l].cols()));
      out.grad.values.push_back(Mat<Real>::Zero(prefix.values[l].rows(), prefix.values[l].cols()));
    }
    return out;
  }
  out.grad = backward<Real>(backbone, cfg, cache, to_eigen(ctc.grad)).prefix;
  return out;
}

template PrefixLoss<float> prefix_loss(const ModelParams<float>&, const ModelConfig&, const PrefixKV<float>&,
                                       const Mat<float>&, const std::vector<int>&);
template PrefixLoss<double> prefix_loss(const ModelParams<double>&, const ModelConfig&, const PrefixKV<double>&,
                                        const Mat<double>&, const std::vector<int>&);

PrefixBank train_prefixes(const ModelParams<float>& backbone, const ModelConfig& model_cfg,
                          const std::vector<Example>& examples, const std::vector<std::string>& dialects,
                          const PrefixConfig& cfg, const PrefixTrainConfig& tc, std::vector<std::string>* warnings) {
  tc.validate();
  cfg.check(model_cfg);
  PrefixBank bank;
  std::map<std::string, std::vector<const Example*>> by_dialect;
  for (const auto& e : examples) {
    if (e.dialect_id.empty()) throw ValidationError("train_prefixes: utterance " + e.id + " has no dialect_id");
    by_dialect[e.dialect_id].push_back(&e);
  }
  for (const auto& d : dialects) {
    auto it = by_dialect.find(d);
    if (it == by_dialect.end() || it->second.empty()) {
      if (warnings) warnings->push_back("dialect " + d + " has no training utterances; prefix skipped");
      continue;
    }
    Rng rng = Rng::derive(tc.seed, "prefix-" + d);
    PrefixKV<float> p = init_prefix(cfg, tc.init_stddev, rng);
    if (cfg.prefix_length == 0) {
      bank[d] = std::move(p);
      continue;
    }
    PrefixKV<float> m1 = p, m2 = p;
    for (std::size_t l = 0; l < p.num_layers(); ++l) {
      m1.keys[l].setZero();
      m1.values[l].setZero();
      m2.keys[l].setZero();
      m2.values[l].setZero();
    }
    std::vector<const Example*> order = it->second;
    std::size_t t = 0;
    for (int ep = 0; ep < tc.epochs; ++ep) {
      rng.shuffle(order);
      for (std::size_t b0 = 0; b0 < order.size(); b0 += tc.batch_size) {
        const std::size_t b1 = std::min(order.size(), b0 + tc.batch_size);
        PrefixKV<float> g = m1;
        for (std::size_t l = 0; l < g.num_layers(); ++l) {
          g.keys[l].setZero();
          g.values[l].setZero();
        }
        std::size_t used = 0;
        for (std::size_t i = b0; i < b1; ++i) {
          auto r = prefix_loss<float>(backbone, model_cfg, p, to_eigen(order[i]->features), order[i]->labels);
          if (std::isnan(r.loss)) throw Error("prefix training diverged for dialect " + d);
          if (!std::isfinite(r.loss)) continue;
          ++used;
          for (std::size_t l = 0; l < g.num_layers(); ++l) {
            g.keys[l] += r.grad.keys[l];
            g.values[l] += r.grad.values[l];
          }
        }
        if (used == 0) continue;
        ++t;
        const float inv = 1.0f / static_cast<float>(used);
        const float b1c = static_cast<float>(1 - std::pow(tc.adam_beta1, t));
        const float b2c = static_cast<float>(1 - std::pow(tc.adam_beta2, t));
        const float be1 = static_cast<float>(tc.adam_beta1), be2 = static_cast<float>(tc.adam_beta2);
        const float lr = static_cast<float>(tc.learning_rate), wd = static_cast<float>(tc.weight_decay);
        auto step = [&](Mat<float>& w, Mat<float>& a, Mat<float>& b, const Mat<float>& gr) {
          Mat<float> gg = gr * inv;
          a = be1 * a + (1 - be1) * gg;
          b = be2 * b + (1 - be2) * gg.cwiseProduct(gg);
          Mat<float> upd = (a.array() / b1c) / ((b.array() / b2c).sqrt() + static_cast<float>(tc.adam_eps));
          w -= lr * (upd + wd * w);
        };
        for (std::size_t l = 0; l < p.num_layers(); ++l) {
          step(p.keys[l], m1.keys[l], m2.keys[l], g.keys[l]);
          step(p.values[l], m1.values[l], m2.values[l], g.values[l]);
        }
      }
    }
    bank[d] = std::move(p);
  }
  return bank;
}

NBestList decode_features(const ModelParams<float>& backbone, const ModelConfig& cfg, const CharVocab& vocab,
                          const LogProbMatrix& features, const PrefixKV<float>* prefix, const DecodeOptions& opts,
                          const std::string& utterance_id) {
  LogProbMatrix lp = infer(backbone, cfg, features, prefix);
  NBestList out;
  if (opts.beam) {
    out = beam_search(lp, vocab, opts.lm, opts.beam_options);
  } else {
    NBestHypothesis h;
    h.words = greedy_decode(lp, vocab);
    for (std::size_t t = 0; t < lp.rows; ++t) {
      auto row = lp.row(t);
      h.am_score += *std::max_element(row.begin(), row.end());
    }
    h.word_count = h.words.size();
    out.hypotheses.push_back(std::move(h));
  }
  out.utterance_id = utterance_id;
  return out;
}

NBestList decode_with_dialect(const ModelParams<float>& backbone, const ModelConfig& cfg, const CharVocab& vocab,
                              const PrefixBank& bank, const std::string& dialect_id, const LogProbMatrix& features,
                              const DecodeOptions& opts, const std::string& utterance_id) {
  auto it = bank.find(dialect_id);
  if (it == bank.end()) {
    if (!opts.allow_dialect_fallback)
      throw ValidationError("no prefix for dialect '" + dialect_id + "' and fallback is disabled");
    NBestList out = decode_features(backbone, cfg, vocab, features, nullptr, opts, utterance_id);
    out.flags.push_back(kDialectFallbackFlag);
    return out;
  }
  return decode_features(backbone, cfg, vocab, features, &it->second, opts, utterance_id);
}

std::vector<NBestList> decode_examples(const ModelParams<float>& backbone, const ModelConfig& cfg,
                                       const CharVocab& vocab, const std::vector<Example>& examples,
                                       const PrefixBank* bank, const DecodeOptions& opts, unsigned jobs) {
  std::vector<NBestList> out(examples.size());
  auto work = [&](std::size_t i) {
    const Example& e = examples[i];
    out[i] = bank ? decode_with_dialect(backbone, cfg, vocab, *bank, e.dialect_id, e.features, opts, e.id)
                  : decode_features(backbone, cfg, vocab, e.features, nullptr, opts, e.id);
  };
  jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(std::max<std::size_t>(1, examples.size()))));
  if (jobs == 1) {
    for (std::size_t i = 0; i < examples.size(); ++i) work(i);
    return out;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(jobs);
  for (unsigned j = 0; j < jobs; ++j)
    pool.emplace_back([&, j] {
      try {
        for (std::size_t i = j; i < examples.size(); i += jobs) work(i);
      } catch (...) {
        errors[j] = std::current_exception();
      }
    });
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

}  // namespace asrkit
