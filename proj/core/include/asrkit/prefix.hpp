#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "asrkit/attention.hpp"
#include "asrkit/ctc.hpp"
#include "asrkit/model.hpp"
#include "asrkit/train.hpp"

namespace asrkit {

class NGramModel;

struct PrefixConfig {
  std::size_t prefix_length = 4;
  std::size_t n_layers = 0;
  std::size_t d_model = 0;

  static PrefixConfig for_model(const ModelConfig& m, std::size_t prefix_length);
  void check(const ModelConfig& m) const;
};

// L_prefix x n_layers x d_model x 2 (keys and values).
std::int64_t count_prefix_params(const PrefixConfig& cfg);

// Gaussian initialized prefix tensors.
PrefixKV<float> init_prefix(const PrefixConfig& cfg, double stddev, Rng& rng);

struct PrefixTrainConfig {
  double learning_rate = 0.01;
  double weight_decay = 0.001;
  std::size_t batch_size = 192;
  int epochs = 2;
  double init_stddev = 0.02;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.98;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;

  void validate() const;
};

// CTC loss of one example under the frozen backbone plus prefix, and its
// gradient with respect to the prefix tensors only.
template <typename Real>
struct PrefixLoss {
  Real loss = 0;
  PrefixKV<Real> grad;
};
template <typename Real>
PrefixLoss<Real> prefix_loss(const ModelParams<Real>& backbone, const ModelConfig& cfg, const PrefixKV<Real>& prefix,
                             const Mat<Real>& features, const std::vector<int>& labels);

// One prefix per dialect in `dialects`, each trained with AdamW on that
// dialect's examples only.  The backbone runs in eval mode and is never
// modified.  Dialects without examples are skipped with a warning.
PrefixBank train_prefixes(const ModelParams<float>& backbone, const ModelConfig& model_cfg,
                          const std::vector<Example>& examples, const std::vector<std::string>& dialects,
                          const PrefixConfig& cfg, const PrefixTrainConfig& train_cfg,
                          std::vector<std::string>* warnings = nullptr);

struct DecodeOptions {
  bool beam = false;  // greedy when false
  BeamOptions beam_options;
  const NGramModel* lm = nullptr;
  bool allow_dialect_fallback = false;
};

inline constexpr const char* kDialectFallbackFlag = "dialect_fallback";

// Decodes one utterance with an optional prefix.  Greedy output is a
// single hypothesis whose am_score is the best-path log probability.
NBestList decode_features(const ModelParams<float>& backbone, const ModelConfig& cfg, const CharVocab& vocab,
                          const LogProbMatrix& features, const PrefixKV<float>* prefix, const DecodeOptions& opts,
                          const std::string& utterance_id = "");

// Looks the dialect up in the bank.  Unknown dialects either fall back to
// the plain backbone (flagged) or throw ValidationError.
NBestList decode_with_dialect(const ModelParams<float>& backbone, const ModelConfig& cfg, const CharVocab& vocab,
                              const PrefixBank& bank, const std::string& dialect_id, const LogProbMatrix& features,
                              const DecodeOptions& opts, const std::string& utterance_id = "");

// Decodes every example, using its dialect prefix when `bank` is given.
// Results are per utterance and independent of how examples are grouped.
std::vector<NBestList> decode_examples(const ModelParams<float>& backbone, const ModelConfig& cfg,
                                       const CharVocab& vocab, const std::vector<Example>& examples,
                                       const PrefixBank* bank, const DecodeOptions& opts, unsigned jobs = 1);

}  // namespace asrkit
