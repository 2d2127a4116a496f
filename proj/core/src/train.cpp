#include "asrkit/train.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <sstream>

#include "asrkit/error.hpp"
#include "asrkit/features.hpp"
#include "asrkit/score.hpp"
#include "asrkit/wav.hpp"

namespace asrkit {

namespace {

bool is_prob(double p) { return p >= 0.0 && p <= 1.0; }

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate > 0)) throw ValidationError("train config: learning_rate must be > 0");
  if (!(lr_warmup_fraction >= 0 && lr_warmup_fraction < 1)) throw ValidationError("train config: bad lr_warmup_fraction");
  if (warmup_classifier_updates < 0) throw ValidationError("train config: warmup_classifier_updates must be >= 0");
  if (batch_size < 1) throw ValidationError("train config: batch_size must be >= 1");
  if (epochs < 1) throw ValidationError("train config: epochs must be >= 1");
  if (!is_prob(spec_augment.time_mask_p) || !is_prob(spec_augment.channel_mask_p))
    throw ValidationError("train config: SpecAugment probabilities must be in [0, 1]");
  if (spec_augment.channel_mask_len < 0) throw ValidationError("train config: channel_mask_len must be >= 0");
  if (!(adam_beta1 >= 0 && adam_beta1 < 1 && adam_beta2 >= 0 && adam_beta2 < 1 && adam_eps > 0))
    throw ValidationError("train config: bad Adam moments");
  if (weight_decay < 0 || grad_clip < 0) throw ValidationError("train config: weight_decay and grad_clip must be >= 0");
}

LogProbMatrix utterance_features(const Corpus& corpus, const Utterance& u, int n_mels) {
  Audio a = read_wav(corpus.resolve_audio(u));
  LogProbMatrix f = logmel_features(a.samples, a.sample_rate, n_mels);
  if (f.rows == 0) throw ValidationError("utterance " + u.id + " is shorter than one analysis window");
  normalize_features(f);
  return f;
}

std::vector<Example> prepare_examples(const Corpus& corpus, const CharVocab& vocab, int n_mels) {
  std::vector<Example> out;
  out.reserve(corpus.size());
  for (const auto& u : corpus.utterances()) {
    Example e;
    e.id = u.id;
    e.dialect_id = u.dialect_id;
    e.features = utterance_features(corpus, u, n_mels);
    e.words = u.transcript;
    e.labels = vocab.encode(u.transcript);
    out.push_back(std::move(e));
  }
  return out;
}

double scheduled_lr(double peak, std::size_t step, std::size_t total, double warmup_fraction) {
  if (total == 0) return 0.0;
  const std::size_t warm = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(warmup_fraction * total)));
  if (step < warm) return peak * static_cast<double>(step + 1) / static_cast<double>(warm);
  if (total <= warm) return peak;
  return peak * static_cast<double>(total - step) / static_cast<double>(total - warm);
}

double mean_ctc_loss(const ModelParams<float>& params, const ModelConfig& cfg, const std::vector<Example>& examples,
                     const PrefixKV<float>* prefix) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& e : examples) {
    LogProbMatrix lp = infer(params, cfg, e.features, prefix);
    auto r = ctc_loss<float>(lp, e.labels, false);
    if (!std::isfinite(r.loss)) continue;
    sum += r.loss;
    ++n;
  }
  return n ? sum / static_cast<double>(n) : std::numeric_limits<double>::infinity();
}

ErrorRates evaluate_greedy(const ModelParams<float>& params, const ModelConfig& cfg, const CharVocab& vocab,
                           const std::vector<Example>& examples, const PrefixKV<float>* prefix) {
  std::vector<Sentence> refs, hyps;
  for (const auto& e : examples) {
    refs.push_back(e.words);
    hyps.push_back(greedy_decode(infer(params, cfg, e.features, prefix), vocab));
  }
  return {wer(refs, hyps), cer(refs, hyps)};
}

TrainResult train(const std::vector<Example>& train_set, const std::vector<Example>& dev_set, const CharVocab& vocab,
                  const TrainConfig& cfg, const ModelConfig& model_cfg, const ModelParams<float>* init,
                  const std::function<void(const EpochStats&)>& on_epoch) {
  cfg.validate();
  model_cfg.validate();
  if (train_set.empty()) throw ValidationError("train: empty training set");
  if (vocab.size() != static_cast<std::size_t>(model_cfg.vocab_size))
    throw ValidationError("train: vocabulary size does not match model config");
  for (const auto& e : train_set)
    if (e.features.cols != static_cast<std::size_t>(model_cfg.feature_dim))
      throw ValidationError("train: features of " + e.id + " do not match feature_dim");

  TrainResult result;
  result.params = init ? *init : ModelParams<float>::init(model_cfg, model_cfg.seed);
  ModelParams<float>& params = result.params;
  ModelParams<float> m1 = ModelParams<float>::zeros(model_cfg);
  ModelParams<float> m2 = ModelParams<float>::zeros(model_cfg);

  Rng order_rng = Rng::derive(cfg.seed, "train-order");
  Rng drop_rng = Rng::derive(cfg.seed, "train-dropout");
  Rng aug_rng = Rng::derive(cfg.seed, "spec-augment");

  const std::size_t per_epoch = (train_set.size() + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t total = per_epoch * static_cast<std::size_t>(cfg.epochs);
  std::size_t step = 0;
  std::size_t classifier_steps = 0;  // Adam bias-correction counters
  std::size_t full_steps = 0;

  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    order_rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t loss_n = 0, skipped = 0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg.batch_size, ++step) {
      const std::size_t b1 = std::min(order.size(), b0 + cfg.batch_size);
      const double scale = 1.0 / static_cast<double>(b1 - b0);
      ModelParams<float> grad = ModelParams<float>::zeros(model_cfg);
      for (std::size_t bi = b0; bi < b1; ++bi) {
        const Example& ex = train_set[order[bi]];
        LogProbMatrix feats = cfg.use_spec_augment
                                  ? spec_augment(ex.features, cfg.spec_augment.time_mask_p,
                                                 cfg.spec_augment.channel_mask_p, cfg.spec_augment.channel_mask_len,
                                                 aug_rng)
                                  : ex.features;
        ForwardCache<float> cache;
        Mat<float> lp = forward<float>(params, model_cfg, to_eigen(feats), Mode::Train, nullptr, &drop_rng, &cache);
        auto ctc = ctc_loss<float>(from_eigen(lp), ex.labels, true);
        if (std::isnan(ctc.loss)) {
          std::ostringstream msg;
          msg << "training diverged: NaN loss at epoch " << epoch << ", update " << step << ", utterance " << ex.id;
          throw Error(msg.str());
        }
        if (!std::isfinite(ctc.loss)) {
          ++skipped;
          continue;
        }
        loss_sum += ctc.loss;
        ++loss_n;
        Mat<float> d = to_eigen(ctc.grad) * static_cast<float>(scale);
        Gradients<float> g = backward<float>(params, model_cfg, cache, d);
        std::vector<Mat<float>*> dst;
        grad.visit([&](const std::string&, Mat<float>& m) { dst.push_back(&m); });
        std::size_t k = 0;
        g.params.visit([&](const std::string&, const Mat<float>& m) { *dst[k++] += m; });
      }

      const bool classifier_only = step < static_cast<std::size_t>(cfg.warmup_classifier_updates);
      double norm2 = 0.0;
      grad.visit([&](const std::string& name, const Mat<float>& m) {
        if (!classifier_only || is_classifier_param(name)) norm2 += m.cast<double>().squaredNorm();
      });
      if (!std::isfinite(norm2)) {
        std::ostringstream msg;
        msg << "training diverged: non-finite gradient at epoch " << epoch << ", update " << step;
        throw Error(msg.str());
      }
      const double norm = std::sqrt(norm2);
      const double clip = (cfg.grad_clip > 0 && norm > cfg.grad_clip) ? cfg.grad_clip / norm : 1.0;
      const double lr = scheduled_lr(cfg.learning_rate, step, total, cfg.lr_warmup_fraction);

      ++classifier_steps;
      if (!classifier_only) ++full_steps;
      std::vector<Mat<float>*> gs, a, b;
      grad.visit([&](const std::string&, Mat<float>& m) { gs.push_back(&m); });
      m1.visit([&](const std::string&, Mat<float>& m) { a.push_back(&m); });
      m2.visit([&](const std::string&, Mat<float>& m) { b.push_back(&m); });
      std::size_t k = 0;
      params.visit([&](const std::string& name, Mat<float>& p) {
        const std::size_t i = k++;
        const bool cls = is_classifier_param(name);
        if (classifier_only && !cls) return;
        const double t = static_cast<double>(cls ? classifier_steps : full_steps);
        const float bc1 = static_cast<float>(1.0 - std::pow(cfg.adam_beta1, t));
        const float bc2 = static_cast<float>(1.0 - std::pow(cfg.adam_beta2, t));
        const float be1 = static_cast<float>(cfg.adam_beta1), be2 = static_cast<float>(cfg.adam_beta2);
        Mat<float> g = *gs[i] * static_cast<float>(clip);
        *a[i] = be1 * *a[i] + (1 - be1) * g;
        *b[i] = be2 * *b[i] + (1 - be2) * g.cwiseProduct(g);
        Mat<float> upd = (a[i]->array() / bc1) / ((b[i]->array() / bc2).sqrt() + static_cast<float>(cfg.adam_eps));
        p -= static_cast<float>(lr) * (upd + static_cast<float>(cfg.weight_decay) * p);
      });
    }

    EpochStats st;
    st.epoch = epoch;
    st.train_loss = loss_n ? loss_sum / static_cast<double>(loss_n) : std::numeric_limits<double>::infinity();
    st.updates = step;
    st.skipped = skipped;
    if (!dev_set.empty()) {
      ErrorRates er = evaluate_greedy(params, model_cfg, vocab, dev_set);
      st.dev_wer = er.wer;
      st.dev_cer = er.cer;
    }
    if (!params.all_finite()) throw Error("training diverged: non-finite parameters after epoch " + std::to_string(epoch));
    result.trace.push_back(st);
    if (on_epoch) on_epoch(st);
  }
  return result;
}

}  // namespace asrkit
