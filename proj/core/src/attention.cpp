#include "asrkit/attention.hpp"

#include <cmath>

#include "asrkit/error.hpp"

namespace asrkit {

template <typename Real>
AttentionResult<Real> apply_prefix(const Mat<Real>& queries, const Mat<Real>& keys, const Mat<Real>& values,
                                   const Mat<Real>* prefix_keys, const Mat<Real>* prefix_values, int n_heads,
                                   const std::vector<Real>* prefix_logit_bias) {
  const Eigen::Index T = queries.rows(), d = queries.cols();
  if (keys.rows() != T || values.rows() != T || keys.cols() != d || values.cols() != d)
    throw Error("apply_prefix: content projections disagree in shape");
  if (n_heads < 1 || d % n_heads != 0) throw Error("apply_prefix: d_model not divisible by n_heads");
  if ((prefix_keys == nullptr) != (prefix_values == nullptr)) throw Error("apply_prefix: need both prefix keys and values");
  const Eigen::Index P = prefix_keys ? prefix_keys->rows() : 0;
  if (prefix_keys && (prefix_keys->cols() != d || prefix_values->cols() != d || prefix_values->rows() != P))
    throw Error("apply_prefix: prefix shape does not match layer");
  if (prefix_logit_bias && !prefix_logit_bias->empty() && static_cast<Eigen::Index>(prefix_logit_bias->size()) != P)
    throw Error("apply_prefix: prefix bias length mismatch");

  AttentionResult<Real> r;
  r.keys.resize(P + T, d);
  r.values.resize(P + T, d);
  if (P > 0) {
    r.keys.topRows(P) = *prefix_keys;
    r.values.topRows(P) = *prefix_values;
  }
  r.keys.bottomRows(T) = keys;
  r.values.bottomRows(T) = values;

  const Eigen::Index dh = d / n_heads;
  const Real scale = Real(1) / std::sqrt(static_cast<Real>(dh));
  r.context.resize(T, d);
  r.weights.resize(static_cast<std::size_t>(n_heads));
  for (int h = 0; h < n_heads; ++h) {
    Mat<Real> s = (queries.middleCols(h * dh, dh) * r.keys.middleCols(h * dh, dh).transpose()) * scale;
    if (prefix_logit_bias && !prefix_logit_bias->empty())
      for (Eigen::Index j = 0; j < P; ++j) s.col(j).array() += (*prefix_logit_bias)[static_cast<std::size_t>(j)];
    for (Eigen::Index t = 0; t < T; ++t) {
      Real mx = s.row(t).maxCoeff();
      s.row(t) = (s.row(t).array() - mx).exp();
      s.row(t) /= s.row(t).sum();
    }
    r.context.middleCols(h * dh, dh) = s * r.values.middleCols(h * dh, dh);
    r.weights[static_cast<std::size_t>(h)] = std::move(s);
  }
  return r;
}

template <typename Real>
AttentionGrad<Real> attention_backward(const Mat<Real>& queries, const AttentionResult<Real>& fwd,
                                       const Mat<Real>& d_context, int n_heads) {
  const Eigen::Index T = queries.rows(), d = queries.cols(), S = fwd.keys.rows();
  const Eigen::Index dh = d / n_heads;
  const Real scale = Real(1) / std::sqrt(static_cast<Real>(dh));
  AttentionGrad<Real> g;
  g.queries = Mat<Real>::Zero(T, d);
  g.keys = Mat<Real>::Zero(S, d);
  g.values = Mat<Real>::Zero(S, d);
  for (int h = 0; h < n_heads; ++h) {
    const Mat<Real>& A = fwd.weights[static_cast<std::size_t>(h)];
    auto dC = d_context.middleCols(h * dh, dh);
    Mat<Real> dA = dC * fwd.values.middleCols(h * dh, dh).transpose();
    g.values.middleCols(h * dh, dh) = A.transpose() * dC;
    Mat<Real> dS = A.array() * (dA.colwise() - (dA.array() * A.array()).rowwise().sum().matrix()).array();
    g.queries.middleCols(h * dh, dh) = (dS * fwd.keys.middleCols(h * dh, dh)) * scale;
    g.keys.middleCols(h * dh, dh) = (dS.transpose() * queries.middleCols(h * dh, dh)) * scale;
  }
  return g;
}

template AttentionResult<float> apply_prefix(const Mat<float>&, const Mat<float>&, const Mat<float>&,
                                             const Mat<float>*, const Mat<float>*, int, const std::vector<float>*);
template AttentionResult<double> apply_prefix(const Mat<double>&, const Mat<double>&, const Mat<double>&,
                                              const Mat<double>*, const Mat<double>*, int,
                                              const std::vector<double>*);
template AttentionGrad<float> attention_backward(const Mat<float>&, const AttentionResult<float>&, const Mat<float>&,
                                                 int);
template AttentionGrad<double> attention_backward(const Mat<double>&, const AttentionResult<double>&,
                                                  const Mat<double>&, int);

}  // namespace asrkit
