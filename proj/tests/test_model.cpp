#include <cmath>
#include <fstream>

#include "asrkit/checkpoint.hpp"
#include "asrkit/error.hpp"
#include "asrkit/train.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace asrkit;

namespace {

Mat<double> random_features(Eigen::Index T, Eigen::Index F, Rng& rng) {
  Mat<double> x(T, F);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  return x;
}

// Identity path of a model whose every layer is dropped: input projection,
// positions, final layer norm, classifier, log-softmax.
Mat<double> identity_path(const ModelParams<double>& p, const ModelConfig& cfg, const Mat<double>& x) {
  Mat<double> h = x * p.in_w;
  for (Eigen::Index t = 0; t < h.rows(); ++t)
    for (Eigen::Index i = 0; i < h.cols(); ++i) {
      const double angle = static_cast<double>(t) / std::pow(10000.0, 2.0 * static_cast<double>(i / 2) / cfg.d_model);
      h(t, i) += p.in_b(0, i) + static_cast<float>(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  Mat<double> out(h.rows(), cfg.vocab_size);
  for (Eigen::Index t = 0; t < h.rows(); ++t) {
    double mu = 0, var = 0;
    for (Eigen::Index i = 0; i < h.cols(); ++i) mu += h(t, i);
    mu /= static_cast<double>(h.cols());
    for (Eigen::Index i = 0; i < h.cols(); ++i) var += (h(t, i) - mu) * (h(t, i) - mu);
    var /= static_cast<double>(h.cols());
    std::vector<double> y(static_cast<std::size_t>(h.cols()));
    for (Eigen::Index i = 0; i < h.cols(); ++i)
      y[static_cast<std::size_t>(i)] = (h(t, i) - mu) / std::sqrt(var + 1e-5) * p.lnf_g(0, i) + p.lnf_b(0, i);
    double mx = -1e300;
    for (Eigen::Index k = 0; k < cfg.vocab_size; ++k) {
      double z = p.out_b(0, k);
      for (Eigen::Index i = 0; i < h.cols(); ++i) z += y[static_cast<std::size_t>(i)] * p.out_w(i, k);
      out(t, k) = z;
      mx = std::max(mx, z);
    }
    double s = 0;
    for (Eigen::Index k = 0; k < cfg.vocab_size; ++k) s += std::exp(out(t, k) - mx);
    for (Eigen::Index k = 0; k < cfg.vocab_size; ++k) out(t, k) -= mx + std::log(s);
  }
  return out;
}

struct SmallCorpus {
  oracle::TempDir dir{"model-corpus"};
  Corpus corpus;
  CharVocab vocab;
  std::vector<Example> examples;
  explicit SmallCorpus(int unique, int reps, std::uint64_t seed = 3) {
    SynthOptions o;
    o.seed = seed;
    o.n_speakers = 2;
    o.n_dialects = 1;
    o.n_unique_sentences = unique;
    o.repetitions_per_sentence = reps;
    o.charset = "abcdef";
    o.lexicon_size = 8;
    o.min_words = 1;
    o.max_words = 2;
    corpus = synth_corpus(o, dir.path);
    std::vector<Sentence> t;
    for (const auto& u : corpus.utterances()) t.push_back(u.transcript);
    vocab = CharVocab::from_transcripts(t);
    examples = prepare_examples(corpus, vocab);
  }
};

ModelConfig small_model(std::size_t vocab) {
  ModelConfig m;
  m.feature_dim = kDefaultMels;
  m.d_model = 32;
  m.n_layers = 2;
  m.n_heads = 4;
  m.ffn_dim = 64;
  m.vocab_size = static_cast<int>(vocab);
  m.dropout_p = 0.0;
  m.layerdrop_p = 0.0;
  m.seed = 11;
  return m;
}

}  // namespace

TEST_SUITE("model") {
  TEST_CASE("config validation and json round trip") {
    ModelConfig c = oracle::toy_config();
    CHECK_NOTHROW(c.validate());
    CHECK(ModelConfig::from_json(c.to_json()) == c);
    ModelConfig bad = c;
    bad.n_heads = 3;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = c;
    bad.dropout_p = 1.5;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = c;
    bad.vocab_size = 0;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
  }

  TEST_CASE("forward shape, normalization and eval determinism") {
    ModelConfig cfg = oracle::toy_config();
    auto p = ModelParams<double>::init(cfg, 1);
    Rng rng(2);
    for (Eigen::Index T : {1, 3, 17}) {
      auto x = random_features(T, cfg.feature_dim, rng);
      Rng r1(1), r2(99);
      auto a = forward<double>(p, cfg, x, Mode::Eval, nullptr, &r1);
      auto b = forward<double>(p, cfg, x, Mode::Eval, nullptr, &r2);
      CHECK(a.rows() == T);
      CHECK(a.cols() == cfg.vocab_size);
      CHECK(a == b);
      CHECK(rows_normalized(from_eigen(a), 1e-5));
      // eval mode ignores regularizer settings
      ModelConfig reg = cfg;
      reg.dropout_p = 0.7;
      reg.layerdrop_p = 0.9;
      CHECK(forward<double>(p, reg, x, Mode::Eval, nullptr, nullptr) == a);
    }
    CHECK_THROWS_AS(forward<double>(p, cfg, random_features(3, cfg.feature_dim + 1, rng), Mode::Eval, nullptr, nullptr),
                    ValidationError);
    CHECK_THROWS(forward<double>(p, cfg, random_features(3, cfg.feature_dim, rng), Mode::Train, nullptr, nullptr));
  }

  TEST_CASE("gradient check in train mode on ten seeds") {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      auto g = oracle::model_grad_check(seed, 0, true);
      INFO("seed " << seed << " worst " << g.worst_tensor);
      CHECK(g.max_rel_error <= 1e-4);
    }
  }

  TEST_CASE("gradient check in eval mode") {
    for (std::uint64_t seed = 21; seed <= 23; ++seed) CHECK(oracle::model_grad_check(seed, 0, false).max_rel_error <= 1e-4);
  }

  TEST_CASE("zero upstream gradient gives zero parameter gradients") {
    ModelConfig cfg = oracle::toy_config();
    auto p = ModelParams<double>::init(cfg, 4);
    Rng rng(4);
    auto x = random_features(6, cfg.feature_dim, rng);
    ForwardCache<double> cache;
    auto lp = forward<double>(p, cfg, x, Mode::Train, nullptr, &rng, &cache);
    auto g = backward<double>(p, cfg, cache, Mat<double>::Zero(lp.rows(), lp.cols()));
    g.params.visit([](const std::string&, const Mat<double>& m) { CHECK(m.cwiseAbs().maxCoeff() == 0.0); });
  }

  TEST_CASE("LayerDrop p=1 leaves only the identity path") {
    ModelConfig cfg = oracle::toy_config();
    cfg.n_layers = 1;
    cfg.layerdrop_p = 1.0;
    cfg.dropout_p = 0.0;
    auto p = ModelParams<double>::init(cfg, 5);
    Rng rng(5);
    auto x = random_features(9, cfg.feature_dim, rng);
    auto train_out = forward<double>(p, cfg, x, Mode::Train, nullptr, &rng);
    auto eval_out = forward<double>(p, cfg, x, Mode::Eval, nullptr, nullptr);
    auto want = identity_path(p, cfg, x);
    CHECK((train_out - want).cwiseAbs().maxCoeff() < 1e-5);
    // eval runs the layer, so it differs from the identity path
    CHECK((eval_out - want).cwiseAbs().maxCoeff() > 1e-3);
  }

  TEST_CASE("spec_augment examples") {
    LogProbMatrix f(20, 8, 1.0f);
    Rng rng(6);
    CHECK(spec_augment(f, 0.0, 0.0, 64, rng) == f);
    auto all = spec_augment(f, 1.0, 0.0, 64, rng);
    for (float v : all.data) CHECK(v == 0.0f);
    // a channel mask runs to the end when it would overflow
    LogProbMatrix wide(1, 5, 1.0f);
    Rng r2(7);
    auto m = spec_augment(wide, 0.0, 1.0, 64, r2);
    for (float v : m.data) CHECK(v == 0.0f);
  }

  TEST_CASE("spec_augment Monte Carlo rates") {
    Rng rng(8);
    const std::size_t n = 100000;
    LogProbMatrix tall(n, 1, 1.0f);
    auto t = spec_augment(tall, 0.5, 0.0, 64, rng);
    double masked = 0;
    for (float v : t.data) masked += v == 0.0f;
    CHECK(std::abs(masked / n - 0.5) <= 0.01);
    LogProbMatrix wide(1, n, 1.0f);
    auto c = spec_augment(wide, 0.0, 0.1, 1, rng);
    double starts = 0;
    for (float v : c.data) starts += v == 0.0f;
    CHECK(std::abs(starts / n - 0.1) <= 0.01);
  }

  TEST_CASE("learning-rate schedule rises then falls linearly") {
    const std::size_t total = 100;
    CHECK(scheduled_lr(1.0, 0, total, 0.1) > 0.0);
    CHECK(scheduled_lr(1.0, 9, total, 0.1) == doctest::Approx(1.0));
    double prev = 0;
    for (std::size_t s = 0; s < 10; ++s) {
      CHECK(scheduled_lr(1.0, s, total, 0.1) >= prev);
      prev = scheduled_lr(1.0, s, total, 0.1);
    }
    for (std::size_t s = 10; s < total; ++s) {
      CHECK(scheduled_lr(1.0, s, total, 0.1) <= prev + 1e-15);
      prev = scheduled_lr(1.0, s, total, 0.1);
    }
  }

  TEST_CASE("training: determinism, warmup freeze and checkpoint reload") {
    SmallCorpus sc(4, 2);
    ModelConfig mc = small_model(sc.vocab.size());
    mc.dropout_p = 0.1;
    mc.layerdrop_p = 0.1;
    TrainConfig tc;
    tc.epochs = 2;
    tc.batch_size = 4;
    tc.seed = 9;
    tc.spec_augment = {0.05, 0.1, 4};
    auto a = train(sc.examples, sc.examples, sc.vocab, tc, mc);
    auto b = train(sc.examples, sc.examples, sc.vocab, tc, mc);
    CHECK(a.params.checksum() == b.params.checksum());
    REQUIRE(a.trace.size() == 2);
    CHECK(a.trace[1].updates == 4);

    tc.seed = 10;
    CHECK(train(sc.examples, sc.examples, sc.vocab, tc, mc).params.checksum() != a.params.checksum());

    // every update inside the classifier-only warmup
    auto init = ModelParams<float>::init(mc, 12);
    TrainConfig warm = tc;
    warm.warmup_classifier_updates = 100;
    auto w = train(sc.examples, sc.examples, sc.vocab, warm, mc, &init);
    std::vector<const Mat<float>*> before;
    init.visit([&](const std::string&, const Mat<float>& m) { before.push_back(&m); });
    std::size_t i = 0;
    bool classifier_moved = false;
    w.params.visit([&](const std::string& name, const Mat<float>& m) {
      if (is_classifier_param(name)) classifier_moved |= m != *before[i];
      else CHECK_MESSAGE(m == *before[i], name);
      ++i;
    });
    CHECK(classifier_moved);

    oracle::TempDir dir("ckpt");
    Checkpoint ck{mc, sc.vocab, a.params, {}, 0};
    save_checkpoint(ck, dir.path / "m.ckpt");
    Checkpoint back = load_checkpoint(dir.path / "m.ckpt");
    CHECK(back.config == mc);
    CHECK(back.vocab.symbols() == sc.vocab.symbols());
    CHECK(back.params.checksum() == a.params.checksum());
    auto e1 = evaluate_greedy(a.params, mc, sc.vocab, sc.examples);
    auto e2 = evaluate_greedy(back.params, back.config, back.vocab, sc.examples);
    CHECK(e1.wer == e2.wer);
    CHECK(e1.cer == e2.cer);

    ModelConfig other = mc;
    other.vocab_size += 1;
    CHECK_THROWS(load_checkpoint(dir.path / "m.ckpt", other));
    // a header that disagrees with the stored tensors
    {
      std::ifstream in(dir.path / "m.ckpt", std::ios::binary);
      std::string bytes((std::istreambuf_iterator<char>(in)), {});
      const std::string key = "\"vocab_size\":" + std::to_string(mc.vocab_size);
      auto pos = bytes.find(key);
      REQUIRE(pos != std::string::npos);
      bytes[pos + key.size() - 1] = static_cast<char>(bytes[pos + key.size() - 1] == '9' ? '8' : bytes[pos + key.size() - 1] + 1);
      std::ofstream(dir.path / "edited.ckpt", std::ios::binary) << bytes;
      CHECK_THROWS(load_checkpoint(dir.path / "edited.ckpt"));
    }
    {
      std::ofstream(dir.path / "trunc.ckpt", std::ios::binary) << "ASRC";
      CHECK_THROWS(load_checkpoint(dir.path / "trunc.ckpt"));
    }
  }

  TEST_CASE("50 epochs of training cut the loss by ten") {
    SmallCorpus sc(10, 2, 5);
    REQUIRE(sc.examples.size() == 20);
    ModelConfig mc = small_model(sc.vocab.size());
    TrainConfig tc;
    tc.epochs = 50;
    tc.batch_size = 4;
    tc.learning_rate = 3e-3;
    tc.use_spec_augment = false;
    tc.seed = 1;
    auto init = ModelParams<float>::init(mc, mc.seed);
    const double before = mean_ctc_loss(init, mc, sc.examples);
    auto r = train(sc.examples, {}, sc.vocab, tc, mc, &init);
    const double after = mean_ctc_loss(r.params, mc, sc.examples);
    INFO("initial " << before << " final " << after);
    CHECK(after < 0.1 * before);
  }
}
