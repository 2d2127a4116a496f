#include "asrkit/model.hpp"

#include <cmath>
#include <cstring>

#include "asrkit/error.hpp"
#include "json.hpp"

namespace asrkit {

using nlohmann::json;

namespace {

constexpr double kLnEps = 1e-5;

template <typename Real>
using Vec = Eigen::Matrix<Real, Eigen::Dynamic, 1>;

template <typename Real>
Mat<Real> layer_norm(const Mat<Real>& x, const Mat<Real>& g, const Mat<Real>& b, LayerNormCache<Real>* cache) {
  const Eigen::Index d = x.cols();
  Vec<Real> mu = x.rowwise().mean();
  Mat<Real> xc = x.colwise() - mu;
  Vec<Real> var = xc.array().square().rowwise().sum() / static_cast<Real>(d);
  Vec<Real> rstd = (var.array() + static_cast<Real>(kLnEps)).rsqrt();
  Mat<Real> xhat = xc.array().colwise() * rstd.array();
  Mat<Real> y = (xhat.array().rowwise() * g.row(0).array()).rowwise() + b.row(0).array();
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->rstd = std::move(rstd);
  }
  return y;
}

template <typename Real>
Mat<Real> layer_norm_backward(const LayerNormCache<Real>& c, const Mat<Real>& g, const Mat<Real>& dy, Mat<Real>& dg,
                              Mat<Real>& db) {
  const Real d = static_cast<Real>(dy.cols());
  dg += (dy.array() * c.xhat.array()).colwise().sum().matrix();
  db += dy.colwise().sum();
  Mat<Real> dxhat = dy.array().rowwise() * g.row(0).array();
  Vec<Real> m1 = dxhat.rowwise().sum() / d;
  Vec<Real> m2 = (dxhat.array() * c.xhat.array()).rowwise().sum().matrix() / d;
  Mat<Real> dx = (dxhat.colwise() - m1) - (c.xhat.array().colwise() * m2.array()).matrix();
  return dx.array().colwise() * c.rstd.array();
}

template <typename Real>
Mat<Real> affine(const Mat<Real>& x, const Mat<Real>& w, const Mat<Real>& b) {
  return (x * w).rowwise() + b.row(0);
}

template <typename Real>
Mat<Real> dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, Rng& rng) {
  Mat<Real> m(rows, cols);
  const Real keep = static_cast<Real>(1.0 / (1.0 - p));
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.bernoulli(p) ? Real(0) : keep;
  return m;
}

template <typename Real>
Mat<Real> gaussian(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng) {
  Mat<Real> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Real>(rng.normal(0.0, stddev));
  return m;
}

template <typename Real>
Mat<Real> glorot(Eigen::Index in, Eigen::Index out, Rng& rng) {
  return gaussian<Real>(in, out, std::sqrt(2.0 / static_cast<double>(in + out)), rng);
}

}  // namespace

void ModelConfig::validate() const {
  if (feature_dim < 1 || d_model < 1 || n_layers < 1 || n_heads < 1 || ffn_dim < 1 || vocab_size < 1)
    throw ValidationError("model config: all dimensions must be >= 1");
  if (d_model % n_heads != 0) throw ValidationError("model config: d_model must be divisible by n_heads");
  if (!(dropout_p >= 0 && dropout_p < 1)) throw ValidationError("model config: dropout_p must be in [0, 1)");
  if (!(layerdrop_p >= 0 && layerdrop_p <= 1)) throw ValidationError("model config: layerdrop_p must be in [0, 1]");
}

std::string ModelConfig::to_json() const {
  json j = {{"feature_dim", feature_dim}, {"d_model", d_model},     {"n_layers", n_layers},
            {"n_heads", n_heads},         {"ffn_dim", ffn_dim},     {"vocab_size", vocab_size},
            {"dropout_p", dropout_p},     {"layerdrop_p", layerdrop_p}, {"seed", seed}};
  return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("model config: ") + e.what());
  }
  ModelConfig c;
  try {
    c.feature_dim = j.at("feature_dim").get<int>();
    c.d_model = j.at("d_model").get<int>();
    c.n_layers = j.at("n_layers").get<int>();
    c.n_heads = j.at("n_heads").get<int>();
    c.ffn_dim = j.at("ffn_dim").get<int>();
    c.vocab_size = j.at("vocab_size").get<int>();
    c.dropout_p = j.at("dropout_p").get<double>();
    c.layerdrop_p = j.at("layerdrop_p").get<double>();
    c.seed = j.value("seed", std::uint64_t{0});
  } catch (const json::exception& e) {
    throw ParseError(std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

template <typename Real>
ModelParams<Real> ModelParams<Real>::zeros(const ModelConfig& cfg) {
  cfg.validate();
  const Eigen::Index F = cfg.feature_dim, d = cfg.d_model, f = cfg.ffn_dim, V = cfg.vocab_size;
  ModelParams p;
  p.in_w = Mat<Real>::Zero(F, d);
  p.in_b = Mat<Real>::Zero(1, d);
  p.layers.resize(static_cast<std::size_t>(cfg.n_layers));
  for (auto& l : p.layers) {
    l.ln1_g = l.ln1_b = l.ln2_g = l.ln2_b = Mat<Real>::Zero(1, d);
    l.wq = l.wk = l.wv = l.wo = Mat<Real>::Zero(d, d);
    l.bq = l.bk = l.bv = l.bo = Mat<Real>::Zero(1, d);
    l.w1 = Mat<Real>::Zero(d, f);
    l.b1 = Mat<Real>::Zero(1, f);
    l.w2 = Mat<Real>::Zero(f, d);
    l.b2 = Mat<Real>::Zero(1, d);
  }
  p.lnf_g = p.lnf_b = Mat<Real>::Zero(1, d);
  p.out_w = Mat<Real>::Zero(d, V);
  p.out_b = Mat<Real>::Zero(1, V);
  return p;
}

template <typename Real>
ModelParams<Real> ModelParams<Real>::init(const ModelConfig& cfg, std::uint64_t seed) {
  ModelParams p = zeros(cfg);
  Rng rng = Rng::derive(seed, "model-init");
  const Eigen::Index F = cfg.feature_dim, d = cfg.d_model, f = cfg.ffn_dim, V = cfg.vocab_size;
  p.in_w = glorot<Real>(F, d, rng);
  for (auto& l : p.layers) {
    l.ln1_g.setOnes();
    l.ln2_g.setOnes();
    l.wq = glorot<Real>(d, d, rng);
    l.wk = glorot<Real>(d, d, rng);
    l.wv = glorot<Real>(d, d, rng);
    l.wo = glorot<Real>(d, d, rng);
    l.w1 = glorot<Real>(d, f, rng);
    l.w2 = glorot<Real>(f, d, rng);
  }
  p.lnf_g.setOnes();
  p.out_w = glorot<Real>(d, V, rng);
  return p;
}

template <typename Real>
std::size_t ModelParams<Real>::parameter_count() const {
  std::size_t n = 0;
  visit([&](const std::string&, const Mat<Real>& m) { n += static_cast<std::size_t>(m.size()); });
  return n;
}

template <typename Real>
bool ModelParams<Real>::all_finite() const {
  bool ok = true;
  visit([&](const std::string&, const Mat<Real>& m) { ok = ok && m.allFinite(); });
  return ok;
}

template <typename Real>
std::uint64_t ModelParams<Real>::checksum() const {
  std::uint64_t h = 14695981039346656037ull;
  visit([&](const std::string& name, const Mat<Real>& m) {
    h = fnv1a64(name, h);
    h = fnv1a64(std::string_view(reinterpret_cast<const char*>(m.data()), sizeof(Real) * static_cast<std::size_t>(m.size())), h);
  });
  return h;
}

Mat<float> positional_encoding(std::size_t T, int d_model) {
  Mat<float> pe(static_cast<Eigen::Index>(T), d_model);
  for (std::size_t t = 0; t < T; ++t)
    for (int i = 0; i < d_model; ++i) {
      const int pair = i / 2;
      const double angle = static_cast<double>(t) / std::pow(10000.0, 2.0 * pair / d_model);
      pe(static_cast<Eigen::Index>(t), i) = static_cast<float>(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  return pe;
}

template <typename Real>
Mat<Real> forward(const ModelParams<Real>& params, const ModelConfig& cfg, const Mat<Real>& features, Mode mode,
                  const PrefixKV<Real>* prefix, Rng* rng, ForwardCache<Real>* cache) {
  if (features.cols() != cfg.feature_dim)
    throw ValidationError("forward: feature dimension " + std::to_string(features.cols()) + " does not match config " +
                          std::to_string(cfg.feature_dim));
  if (features.rows() < 1) throw ValidationError("forward: empty feature matrix");
  if (params.layers.size() != static_cast<std::size_t>(cfg.n_layers) || params.in_w.rows() != cfg.feature_dim ||
      params.in_w.cols() != cfg.d_model || params.out_w.cols() != cfg.vocab_size)
    throw ValidationError("forward: parameters do not match config");
  if (prefix && prefix->length() > 0 &&
      (prefix->num_layers() != params.layers.size() || prefix->values.size() != params.layers.size()))
    throw ValidationError("forward: prefix layer count does not match model");
  const bool train = mode == Mode::Train;
  if (train && !rng) throw Error("forward: train mode needs an rng");
  const bool use_prefix = prefix && prefix->length() > 0;

  const Eigen::Index T = features.rows();
  Mat<Real> x = affine(features, params.in_w, params.in_b);
  x += positional_encoding(static_cast<std::size_t>(T), cfg.d_model).template cast<Real>();

  if (cache) {
    cache->features = features;
    cache->layers.assign(params.layers.size(), LayerCache<Real>{});
    cache->prefix = use_prefix ? prefix : nullptr;
  }
  const bool dropout = train && cfg.dropout_p > 0;
  for (std::size_t li = 0; li < params.layers.size(); ++li) {
    const auto& l = params.layers[li];
    LayerCache<Real> local;
    LayerCache<Real>& c = cache ? cache->layers[li] : local;
    if (train && cfg.layerdrop_p > 0 && rng->bernoulli(cfg.layerdrop_p)) {
      c.skipped = true;
      continue;
    }
    c.a = layer_norm(x, l.ln1_g, l.ln1_b, &c.ln1);
    c.q = affine(c.a, l.wq, l.bq);
    c.k = affine(c.a, l.wk, l.bk);
    c.v = affine(c.a, l.wv, l.bv);
    c.att = apply_prefix<Real>(c.q, c.k, c.v, use_prefix ? &prefix->keys[li] : nullptr,
                               use_prefix ? &prefix->values[li] : nullptr, cfg.n_heads,
                               use_prefix ? &prefix->logit_bias : nullptr);
    Mat<Real> o = affine(c.att.context, l.wo, l.bo);
    if (dropout) {
      c.drop1 = dropout_mask<Real>(T, cfg.d_model, cfg.dropout_p, *rng);
      o.array() *= c.drop1.array();
    }
    x += o;
    c.b = layer_norm(x, l.ln2_g, l.ln2_b, &c.ln2);
    c.h1 = affine(c.b, l.w1, l.b1);
    c.r = c.h1.cwiseMax(Real(0));
    Mat<Real> f = affine(c.r, l.w2, l.b2);
    if (dropout) {
      c.drop2 = dropout_mask<Real>(T, cfg.d_model, cfg.dropout_p, *rng);
      f.array() *= c.drop2.array();
    }
    x += f;
  }
  LayerNormCache<Real> lnf_local;
  Mat<Real> y = layer_norm(x, params.lnf_g, params.lnf_b, cache ? &cache->lnf : &lnf_local);
  Mat<Real> z = affine(y, params.out_w, params.out_b);
  for (Eigen::Index t = 0; t < T; ++t) {
    const Real mx = z.row(t).maxCoeff();
    const Real lse = mx + std::log((z.row(t).array() - mx).exp().sum());
    z.row(t).array() -= lse;
  }
  if (cache) {
    cache->y = std::move(y);
    cache->log_probs = z;
  }
  return z;
}

template <typename Real>
Gradients<Real> backward(const ModelParams<Real>& params, const ModelConfig& cfg, const ForwardCache<Real>& cache,
                         const Mat<Real>& d_log_probs) {
  if (d_log_probs.rows() != cache.log_probs.rows() || d_log_probs.cols() != cache.log_probs.cols())
    throw ValidationError("backward: upstream gradient shape does not match cached forward");
  if (cache.layers.size() != params.layers.size()) throw ValidationError("backward: cache does not match model");
  Gradients<Real> g;
  g.params = ModelParams<Real>::zeros(cfg);
  const bool use_prefix = cache.prefix != nullptr;
  if (use_prefix) {
    for (std::size_t li = 0; li < params.layers.size(); ++li) {
      g.prefix.keys.push_back(Mat<Real>::Zero(cache.prefix->keys[li].rows(), cfg.d_model));
      g.prefix.values.push_back(Mat<Real>::Zero(cache.prefix->values[li].rows(), cfg.d_model));
    }
  }
  auto& gp = g.params;

  Mat<Real> p = cache.log_probs.array().exp();
  Mat<Real> dz = d_log_probs - (p.array().colwise() * d_log_probs.rowwise().sum().array()).matrix();
  gp.out_w = cache.y.transpose() * dz;
  gp.out_b = dz.colwise().sum();
  Mat<Real> dy = dz * params.out_w.transpose();
  Mat<Real> dx = layer_norm_backward(cache.lnf, params.lnf_g, dy, gp.lnf_g, gp.lnf_b);

  for (std::size_t li = params.layers.size(); li-- > 0;) {
    const auto& c = cache.layers[li];
    if (c.skipped) continue;
    const auto& l = params.layers[li];
    auto& gl = gp.layers[li];

    // FFN branch
    Mat<Real> df = dx;
    if (c.drop2.size()) df.array() *= c.drop2.array();
    gl.w2 = c.r.transpose() * df;
    gl.b2 = df.colwise().sum();
    Mat<Real> dh1 = (df * l.w2.transpose()).array() * (c.h1.array() > Real(0)).template cast<Real>();
    gl.w1 = c.b.transpose() * dh1;
    gl.b1 = dh1.colwise().sum();
    Mat<Real> db = dh1 * l.w1.transpose();
    dx += layer_norm_backward(c.ln2, l.ln2_g, db, gl.ln2_g, gl.ln2_b);

    // attention branch
    Mat<Real> dout = dx;
    if (c.drop1.size()) dout.array() *= c.drop1.array();
    gl.wo = c.att.context.transpose() * dout;
    gl.bo = dout.colwise().sum();
    Mat<Real> dctx = dout * l.wo.transpose();
    AttentionGrad<Real> ag = attention_backward(c.q, c.att, dctx, cfg.n_heads);
    const Eigen::Index P = ag.keys.rows() - c.q.rows();
    if (use_prefix && P > 0) {
      g.prefix.keys[li] = ag.keys.topRows(P);
      g.prefix.values[li] = ag.values.topRows(P);
    }
    Mat<Real> dk = ag.keys.bottomRows(c.q.rows());
    Mat<Real> dv = ag.values.bottomRows(c.q.rows());
    gl.wq = c.a.transpose() * ag.queries;
    gl.bq = ag.queries.colwise().sum();
    gl.wk = c.a.transpose() * dk;
    gl.bk = dk.colwise().sum();
    gl.wv = c.a.transpose() * dv;
    gl.bv = dv.colwise().sum();
    Mat<Real> da = ag.queries * l.wq.transpose() + dk * l.wk.transpose() + dv * l.wv.transpose();
    dx += layer_norm_backward(c.ln1, l.ln1_g, da, gl.ln1_g, gl.ln1_b);
  }
  gp.in_w = cache.features.transpose() * dx;
  gp.in_b = dx.colwise().sum();
  return g;
}

LogProbMatrix infer(const ModelParams<float>& params, const ModelConfig& cfg, const LogProbMatrix& features,
                    const PrefixKV<float>* prefix) {
  return from_eigen(forward<float>(params, cfg, to_eigen(features), Mode::Eval, prefix));
}

LogProbMatrix spec_augment(const LogProbMatrix& features, double time_mask_p, double channel_mask_p,
                           int channel_mask_len, Rng& rng) {
  LogProbMatrix out = features;
  if (time_mask_p > 0)
    for (std::size_t t = 0; t < out.rows; ++t)
      if (rng.bernoulli(time_mask_p))
        for (std::size_t f = 0; f < out.cols; ++f) out(t, f) = 0.0f;
  if (channel_mask_p > 0 && channel_mask_len > 0) {
    std::vector<bool> masked(out.cols, false);
    for (std::size_t f = 0; f < out.cols; ++f)
      if (rng.bernoulli(channel_mask_p)) {
        const std::size_t end = std::min(out.cols, f + static_cast<std::size_t>(channel_mask_len));
        for (std::size_t c = f; c < end; ++c) masked[c] = true;
      }
    for (std::size_t f = 0; f < out.cols; ++f)
      if (masked[f])
        for (std::size_t t = 0; t < out.rows; ++t) out(t, f) = 0.0f;
  }
  return out;
}

template struct ModelParams<float>;
template struct ModelParams<double>;
template Mat<float> forward(const ModelParams<float>&, const ModelConfig&, const Mat<float>&, Mode,
                            const PrefixKV<float>*, Rng*, ForwardCache<float>*);
template Mat<double> forward(const ModelParams<double>&, const ModelConfig&, const Mat<double>&, Mode,
                             const PrefixKV<double>*, Rng*, ForwardCache<double>*);
template Gradients<float> backward(const ModelParams<float>&, const ModelConfig&, const ForwardCache<float>&,
                                   const Mat<float>&);
template Gradients<double> backward(const ModelParams<double>&, const ModelConfig&, const ForwardCache<double>&,
                                    const Mat<double>&);

}  // namespace asrkit
