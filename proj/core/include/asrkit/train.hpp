#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "asrkit/corpus.hpp"
#include "asrkit/ctc.hpp"
#include "asrkit/model.hpp"

namespace asrkit {

struct SpecAugmentConfig {
  double time_mask_p = 0.5;
  double channel_mask_p = 0.1;
  int channel_mask_len = 64;
  bool operator==(const SpecAugmentConfig&) const = default;
};

struct TrainConfig {
  double learning_rate = 1e-3;  // peak of the warmup-then-decay schedule
  double lr_warmup_fraction = 0.1;
  int warmup_classifier_updates = 0;
  std::size_t batch_size = 8;
  int epochs = 10;
  bool use_spec_augment = true;
  SpecAugmentConfig spec_augment;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.98;
  double adam_eps = 1e-8;
  double weight_decay = 0.0;
  double grad_clip = 5.0;  // global norm; 0 disables
  std::uint64_t seed = 0;

  void validate() const;
};

// One utterance ready for training or decoding: normalized log-mel features
// plus its label sequence.
struct Example {
  std::string id;
  std::string dialect_id;
  LogProbMatrix features;
  Sentence words;
  std::vector<int> labels;
};

inline constexpr int kDefaultMels = 40;

// Log-mel features of one utterance, mean/variance normalized per utterance.
LogProbMatrix utterance_features(const Corpus& corpus, const Utterance& u, int n_mels = kDefaultMels);
std::vector<Example> prepare_examples(const Corpus& corpus, const CharVocab& vocab, int n_mels = kDefaultMels);

struct EpochStats {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;  // mean CTC loss per utterance (train mode)
  double dev_wer = 0.0;
  double dev_cer = 0.0;
  std::size_t updates = 0;  // cumulative
  std::size_t skipped = 0;  // utterances with no CTC path this epoch
};

struct TrainResult {
  ModelParams<float> params;
  std::vector<EpochStats> trace;
};

// Adam with decoupled weight decay and a linear warmup-then-decay learning
// rate.  The first warmup_classifier_updates updates touch only the
// classifier.  Dev WER is computed with greedy decoding after every epoch.
// Throws Error when the loss becomes NaN.
TrainResult train(const std::vector<Example>& train_set, const std::vector<Example>& dev_set, const CharVocab& vocab,
                  const TrainConfig& cfg, const ModelConfig& model_cfg, const ModelParams<float>* init = nullptr,
                  const std::function<void(const EpochStats&)>& on_epoch = {});

// Learning rate of update `step` (0-based) out of `total`.
double scheduled_lr(double peak, std::size_t step, std::size_t total, double warmup_fraction);

// Eval-mode mean CTC loss; utterances without a path are skipped.
double mean_ctc_loss(const ModelParams<float>& params, const ModelConfig& cfg, const std::vector<Example>& examples,
                     const PrefixKV<float>* prefix = nullptr);

struct ErrorRates {
  double wer = 0.0;
  double cer = 0.0;
};

// Greedy decoding of every example; pooled error rates.
ErrorRates evaluate_greedy(const ModelParams<float>& params, const ModelConfig& cfg, const CharVocab& vocab,
                           const std::vector<Example>& examples, const PrefixKV<float>* prefix = nullptr);

}  // namespace asrkit
