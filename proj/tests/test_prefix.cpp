#include <cmath>

#include "asrkit/error.hpp"
#include "asrkit/prefix.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace asrkit;

namespace {

Mat<double> gaussian(Eigen::Index r, Eigen::Index c, Rng& rng, double sd = 1.0) {
  Mat<double> m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal(0.0, sd);
  return m;
}

PrefixKV<double> random_prefix(const ModelConfig& cfg, std::size_t L, Rng& rng) {
  PrefixKV<double> p;
  for (int l = 0; l < cfg.n_layers; ++l) {
    p.keys.push_back(gaussian(static_cast<Eigen::Index>(L), cfg.d_model, rng, 0.5));
    p.values.push_back(gaussian(static_cast<Eigen::Index>(L), cfg.d_model, rng, 0.5));
  }
  return p;
}

struct DialectCorpus {
  oracle::TempDir dir{"prefix-corpus"};
  Corpus corpus;
  CharVocab vocab;
  std::vector<Example> examples;
  ModelConfig mc;
  ModelParams<float> backbone;
  DialectCorpus() {
    SynthOptions o;
    o.seed = 4;
    o.n_speakers = 3;
    o.n_dialects = 3;
    o.n_unique_sentences = 6;
    o.repetitions_per_sentence = 1;
    o.charset = "abcdef";
    o.lexicon_size = 8;
    o.min_words = 1;
    o.max_words = 2;
    corpus = synth_corpus(o, dir.path);
    std::vector<Sentence> t;
    for (const auto& u : corpus.utterances()) t.push_back(u.transcript);
    vocab = CharVocab::from_transcripts(t);
    examples = prepare_examples(corpus, vocab);
    mc.feature_dim = kDefaultMels;
    mc.d_model = 16;
    mc.n_layers = 2;
    mc.n_heads = 2;
    mc.ffn_dim = 32;
    mc.vocab_size = static_cast<int>(vocab.size());
    mc.seed = 2;
    backbone = ModelParams<float>::init(mc, 2);
  }
};

}  // namespace

TEST_SUITE("prefix") {
  TEST_CASE("parameter count formula") {
    CHECK(count_prefix_params({4, 48, 1280}) == 491520);
    CHECK(count_prefix_params({0, 48, 1280}) == 0);
    CHECK(count_prefix_params({4, 2, 64}) == 1024);
    ModelConfig m;
    m.vocab_size = 10;
    PrefixConfig pc = PrefixConfig::for_model(m, 4);
    Rng rng(1);
    auto p = init_prefix(pc, 0.02, rng);
    std::int64_t n = 0;
    for (const auto& k : p.keys) n += k.size();
    for (const auto& v : p.values) n += v.size();
    CHECK(n == count_prefix_params(pc));
    ModelConfig other = m;
    other.d_model = 32;
    other.n_heads = 4;
    CHECK_THROWS(pc.check(other));
  }

  TEST_CASE("attention rows cover prefix and content slots") {
    Rng rng(2);
    const int d = 8, heads = 2;
    auto q = gaussian(10, d, rng), k = gaussian(10, d, rng), v = gaussian(10, d, rng);
    auto pk = gaussian(4, d, rng), pv = gaussian(4, d, rng);
    auto r = apply_prefix<double>(q, k, v, &pk, &pv, heads);
    CHECK(r.context.rows() == 10);
    REQUIRE(r.weights.size() == 2);
    for (const auto& w : r.weights) {
      CHECK(w.cols() == 14);
      for (Eigen::Index t = 0; t < w.rows(); ++t) CHECK(std::abs(w.row(t).sum() - 1.0) <= 1e-6);
    }
    CHECK(r.keys.topRows(4) == pk);
    Mat<double> bad = gaussian(4, d + 2, rng);
    CHECK_THROWS(apply_prefix<double>(q, k, v, &bad, &pv, heads));
  }

  TEST_CASE("attention with masked prefix equals plain attention") {
    Rng rng(3);
    const int d = 8;
    auto q = gaussian(6, d, rng), k = gaussian(6, d, rng), v = gaussian(6, d, rng);
    auto pk = gaussian(3, d, rng), pv = gaussian(3, d, rng);
    std::vector<double> mask(3, -1e9);
    auto plain = apply_prefix<double>(q, k, v, nullptr, nullptr, 2);
    auto masked = apply_prefix<double>(q, k, v, &pk, &pv, 2, &mask);
    CHECK((plain.context - masked.context).cwiseAbs().maxCoeff() <= 1e-5);
  }

  TEST_CASE("model forward: masked prefix and empty prefix") {
    ModelConfig cfg = oracle::toy_config();
    auto p = ModelParams<double>::init(cfg, 3);
    Rng rng(4);
    auto x = gaussian(10, cfg.feature_dim, rng);
    auto base = forward<double>(p, cfg, x, Mode::Eval, nullptr, nullptr);
    auto pre = random_prefix(cfg, 4, rng);
    pre.logit_bias.assign(4, -1e9);
    CHECK((forward<double>(p, cfg, x, Mode::Eval, &pre, nullptr) - base).cwiseAbs().maxCoeff() <= 1e-5);
    pre.logit_bias.clear();
    CHECK((forward<double>(p, cfg, x, Mode::Eval, &pre, nullptr) - base).cwiseAbs().maxCoeff() > 1e-4);
    // zero length: bit-identical, float and double
    PrefixKV<double> empty;
    for (int l = 0; l < cfg.n_layers; ++l) {
      empty.keys.emplace_back(0, cfg.d_model);
      empty.values.emplace_back(0, cfg.d_model);
    }
    CHECK(forward<double>(p, cfg, x, Mode::Eval, &empty, nullptr) == base);
    auto pf = p.cast<float>();
    Mat<float> xf = x.cast<float>();
    auto ef = empty.cast<float>();
    CHECK(forward<float>(pf, cfg, xf, Mode::Eval, &ef, nullptr) == forward<float>(pf, cfg, xf, Mode::Eval, nullptr, nullptr));
    // wrong layer count
    PrefixKV<double> short_prefix = random_prefix(cfg, 2, rng);
    short_prefix.keys.pop_back();
    short_prefix.values.pop_back();
    CHECK_THROWS(forward<double>(p, cfg, x, Mode::Eval, &short_prefix, nullptr));
  }

  TEST_CASE("full-model gradient check including prefix tensors on ten seeds") {
    for (std::uint64_t seed = 31; seed <= 40; ++seed) {
      auto g = oracle::model_grad_check(seed, 4, true);
      INFO("seed " << seed << " worst " << g.worst_tensor);
      CHECK(g.max_rel_error <= 1e-4);
    }
  }

  TEST_CASE("prefix_loss gradient matches central differences") {
    ModelConfig cfg = oracle::toy_config();
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      auto p = ModelParams<double>::init(cfg, seed);
      Rng rng(seed);
      auto x = gaussian(8, cfg.feature_dim, rng);
      auto pre = random_prefix(cfg, 3, rng);
      const std::vector<int> label{2, 1, 3};
      auto r = prefix_loss<double>(p, cfg, pre, x, label);
      const double h = 1e-6;
      double worst = 0;
      for (std::size_t l = 0; l < pre.keys.size(); ++l)
        for (Mat<double>* m : {&pre.keys[l], &pre.values[l]}) {
          const Mat<double>& g = m == &pre.keys[l] ? r.grad.keys[l] : r.grad.values[l];
          Mat<double> num(m->rows(), m->cols());
          for (Eigen::Index i = 0; i < m->size(); ++i) {
            const double keep = m->data()[i];
            m->data()[i] = keep + h;
            const double up = prefix_loss<double>(p, cfg, pre, x, label).loss;
            m->data()[i] = keep - h;
            const double down = prefix_loss<double>(p, cfg, pre, x, label).loss;
            m->data()[i] = keep;
            num.data()[i] = (up - down) / (2 * h);
          }
          worst = std::max(worst, oracle::tensor_rel_error(g, num));
        }
      CHECK(worst <= 1e-4);
    }
  }

  TEST_CASE("prefix training leaves the backbone untouched and is deterministic") {
    DialectCorpus dc;
    PrefixConfig pc = PrefixConfig::for_model(dc.mc, 4);
    PrefixTrainConfig tc;
    tc.batch_size = 4;
    tc.epochs = 2;
    tc.seed = 5;
    const auto before = dc.backbone.checksum();
    std::vector<std::string> warnings;
    std::vector<std::string> dialects(dc.corpus.dialect_inventory().begin(), dc.corpus.dialect_inventory().end());
    dialects.push_back("nowhere");
    auto bank = train_prefixes(dc.backbone, dc.mc, dc.examples, dialects, pc, tc, &warnings);
    CHECK(dc.backbone.checksum() == before);
    CHECK(bank.size() == 3);
    CHECK(bank.count("nowhere") == 0);
    CHECK(warnings.size() == 1);
    for (const auto& [d, p] : bank) {
      CHECK(p.length() == 4);
      CHECK(p.num_layers() == 2);
    }
    auto again = train_prefixes(dc.backbone, dc.mc, dc.examples, dialects, pc, tc);
    for (const auto& [d, p] : bank) {
      for (std::size_t l = 0; l < p.keys.size(); ++l) {
        CHECK(p.keys[l] == again.at(d).keys[l]);
        CHECK(p.values[l] == again.at(d).values[l]);
      }
    }
    // a dialect's prefix depends only on that dialect's data
    std::vector<Example> one;
    for (const auto& e : dc.examples)
      if (e.dialect_id == dialects[0]) one.push_back(e);
    auto solo = train_prefixes(dc.backbone, dc.mc, one, {dialects[0]}, pc, tc);
    CHECK(solo.at(dialects[0]).keys[0] == bank.at(dialects[0]).keys[0]);
    // training lowers the dialect's own loss
    const PrefixKV<float>& p0 = bank.at(dialects[0]);
    Rng rng(tc.seed);
    auto init = init_prefix(pc, tc.init_stddev, rng);
    CHECK(mean_ctc_loss(dc.backbone, dc.mc, one, &p0) < mean_ctc_loss(dc.backbone, dc.mc, one, &init));
  }

  TEST_CASE("dialect lookup and fallback flag") {
    DialectCorpus dc;
    PrefixConfig pc = PrefixConfig::for_model(dc.mc, 2);
    Rng rng(6);
    PrefixBank bank{{"d0", init_prefix(pc, 0.5, rng)}};
    DecodeOptions opts;
    const auto& f = dc.examples.front().features;
    auto with = decode_with_dialect(dc.backbone, dc.mc, dc.vocab, bank, "d0", f, opts, "u");
    CHECK(with == decode_features(dc.backbone, dc.mc, dc.vocab, f, &bank.at("d0"), opts, "u"));
    CHECK_THROWS_AS(decode_with_dialect(dc.backbone, dc.mc, dc.vocab, bank, "zz", f, opts), ValidationError);
    opts.allow_dialect_fallback = true;
    auto fb = decode_with_dialect(dc.backbone, dc.mc, dc.vocab, bank, "zz", f, opts, "u");
    CHECK(fb.has_flag(kDialectFallbackFlag));
    auto plain = decode_features(dc.backbone, dc.mc, dc.vocab, f, nullptr, opts, "u");
    CHECK(fb.hypotheses == plain.hypotheses);
  }

  TEST_CASE("greedy decode hypothesis score is the best-path log probability") {
    DialectCorpus dc;
    const auto& e = dc.examples.front();
    auto list = decode_features(dc.backbone, dc.mc, dc.vocab, e.features, nullptr, DecodeOptions{}, e.id);
    REQUIRE(list.hypotheses.size() == 1);
    auto lp = infer(dc.backbone, dc.mc, e.features, nullptr);
    double best = 0;
    for (std::size_t t = 0; t < lp.rows; ++t) {
      auto row = lp.row(t);
      best += *std::max_element(row.begin(), row.end());
    }
    CHECK(list.hypotheses[0].am_score == doctest::Approx(best).epsilon(1e-9));
    CHECK(list.hypotheses[0].words == greedy_decode(lp, dc.vocab));
  }

  TEST_CASE("decoding is independent of grouping and thread count") {
    DialectCorpus dc;
    PrefixConfig pc = PrefixConfig::for_model(dc.mc, 3);
    Rng rng(7);
    PrefixBank bank;
    for (const auto& d : dc.corpus.dialect_inventory()) bank[d] = init_prefix(pc, 0.5, rng);
    DecodeOptions opts;
    opts.beam = true;
    opts.beam_options.beam_width = 4;
    auto all = decode_examples(dc.backbone, dc.mc, dc.vocab, dc.examples, &bank, opts, 1);
    CHECK(all == decode_examples(dc.backbone, dc.mc, dc.vocab, dc.examples, &bank, opts, 3));
    std::vector<Example> tail(dc.examples.begin() + 5, dc.examples.end());
    auto part = decode_examples(dc.backbone, dc.mc, dc.vocab, tail, &bank, opts, 2);
    for (std::size_t i = 0; i < part.size(); ++i) CHECK(part[i] == all[i + 5]);
  }
}
