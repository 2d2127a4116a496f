#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "asrkit/attention.hpp"
#include "asrkit/matrix.hpp"
#include "asrkit/rng.hpp"
#include "asrkit/tensor.hpp"

namespace asrkit {

struct ModelConfig {
  int feature_dim = 40;
  int d_model = 64;
  int n_layers = 2;
  int n_heads = 4;
  int ffn_dim = 256;
  int vocab_size = 0;
  double dropout_p = 0.1;
  double layerdrop_p = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);
  bool operator==(const ModelConfig&) const = default;
};

template <typename Real>
struct LayerParams {
  Mat<Real> ln1_g, ln1_b;
  Mat<Real> wq, bq, wk, bk, wv, bv, wo, bo;
  Mat<Real> ln2_g, ln2_b;
  Mat<Real> w1, b1, w2, b2;
};

template <typename Real>
struct ModelParams {
  Mat<Real> in_w, in_b;
  std::vector<LayerParams<Real>> layers;
  Mat<Real> lnf_g, lnf_b;
  Mat<Real> out_w, out_b;

  static ModelParams init(const ModelConfig& cfg, std::uint64_t seed);
  // Same shapes as `cfg`, all zeros.
  static ModelParams zeros(const ModelConfig& cfg);

  // f(name, tensor) over every parameter tensor in a fixed order.
  template <typename F>
  void visit(F&& f);
  template <typename F>
  void visit(F&& f) const;

  template <typename Other>
  ModelParams<Other> cast() const;

  std::size_t parameter_count() const;
  bool all_finite() const;
  std::uint64_t checksum() const;
};

enum class Mode { Train, Eval };

template <typename Real>
struct LayerNormCache {
  Mat<Real> xhat;
  Eigen::Matrix<Real, Eigen::Dynamic, 1> rstd;
};

template <typename Real>
struct LayerCache {
  bool skipped = false;
  LayerNormCache<Real> ln1, ln2;
  Mat<Real> a, q, k, v;
  AttentionResult<Real> att;
  Mat<Real> drop1, drop2;  // scaled dropout masks; empty when no dropout
  Mat<Real> b, h1, r;
};

template <typename Real>
struct ForwardCache {
  Mat<Real> features;
  std::vector<LayerCache<Real>> layers;
  LayerNormCache<Real> lnf;
  Mat<Real> y;
  Mat<Real> log_probs;
  const PrefixKV<Real>* prefix = nullptr;
};

template <typename Real>
struct Gradients {
  ModelParams<Real> params;
  PrefixKV<Real> prefix;  // empty when the forward had no prefix
};

// Pre-layernorm transformer encoder with a log-softmax character head.
// rng is used only in train mode (dropout masks, LayerDrop) and may be null
// in eval mode.
template <typename Real>
Mat<Real> forward(const ModelParams<Real>& params, const ModelConfig& cfg, const Mat<Real>& features, Mode mode,
                  const PrefixKV<Real>* prefix = nullptr, Rng* rng = nullptr, ForwardCache<Real>* cache = nullptr);

template <typename Real>
Gradients<Real> backward(const ModelParams<Real>& params, const ModelConfig& cfg, const ForwardCache<Real>& cache,
                         const Mat<Real>& d_log_probs);

// Convenience: eval-mode forward on a float feature matrix.
LogProbMatrix infer(const ModelParams<float>& params, const ModelConfig& cfg, const LogProbMatrix& features,
                    const PrefixKV<float>* prefix = nullptr);

Mat<float> positional_encoding(std::size_t T, int d_model);

// Per-step Bernoulli time masks and channel-run masks; masked entries become 0.
LogProbMatrix spec_augment(const LogProbMatrix& features, double time_mask_p, double channel_mask_p,
                           int channel_mask_len, Rng& rng);

template <typename Real>
template <typename F>
void ModelParams<Real>::visit(F&& f) {
  f("input.w", in_w);
  f("input.b", in_b);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    auto& l = layers[i];
    const std::string p = "layer" + std::to_string(i) + ".";
    f(p + "ln1.g", l.ln1_g);
    f(p + "ln1.b", l.ln1_b);
    f(p + "attn.wq", l.wq);
    f(p + "attn.bq", l.bq);
    f(p + "attn.wk", l.wk);
    f(p + "attn.bk", l.bk);
    f(p + "attn.wv", l.wv);
    f(p + "attn.bv", l.bv);
    f(p + "attn.wo", l.wo);
    f(p + "attn.bo", l.bo);
    f(p + "ln2.g", l.ln2_g);
    f(p + "ln2.b", l.ln2_b);
    f(p + "ffn.w1", l.w1);
    f(p + "ffn.b1", l.b1);
    f(p + "ffn.w2", l.w2);
    f(p + "ffn.b2", l.b2);
  }
  f("final_ln.g", lnf_g);
  f("final_ln.b", lnf_b);
  f("classifier.w", out_w);
  f("classifier.b", out_b);
}

template <typename Real>
template <typename F>
void ModelParams<Real>::visit(F&& f) const {
  const_cast<ModelParams<Real>*>(this)->visit(
      [&](const std::string& name, Mat<Real>& m) { f(name, static_cast<const Mat<Real>&>(m)); });
}

template <typename Real>
template <typename Other>
ModelParams<Other> ModelParams<Real>::cast() const {
  ModelParams<Other> out;
  out.layers.resize(layers.size());
  std::vector<const Mat<Real>*> src;
  visit([&](const std::string&, const Mat<Real>& m) { src.push_back(&m); });
  std::size_t i = 0;
  out.visit([&](const std::string&, Mat<Other>& m) { m = src[i++]->template cast<Other>(); });
  return out;
}

inline bool is_classifier_param(const std::string& name) { return name.rfind("classifier.", 0) == 0; }

}  // namespace asrkit
