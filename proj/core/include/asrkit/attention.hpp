#pragma once

#include <vector>

#include "asrkit/tensor.hpp"

namespace asrkit {

template <typename Real>
struct AttentionResult {
  Mat<Real> context;               // T x d, heads concatenated
  std::vector<Mat<Real>> weights;  // per head, T x (P + T)
  Mat<Real> keys;                  // (P + T) x d, prefix rows first
  Mat<Real> values;                // (P + T) x d
};

// Multi-head scaled dot-product attention whose keys and values are
// [prefix; content].  Queries come from content positions only, so the
// output has exactly T rows.  prefix_keys/values may be null (no prefix);
// they are split across heads the same way as the content projections.
template <typename Real>
AttentionResult<Real> apply_prefix(const Mat<Real>& queries, const Mat<Real>& keys, const Mat<Real>& values,
                                   const Mat<Real>* prefix_keys, const Mat<Real>* prefix_values, int n_heads,
                                   const std::vector<Real>* prefix_logit_bias = nullptr);

template <typename Real>
struct AttentionGrad {
  Mat<Real> queries;  // T x d
  Mat<Real> keys;     // (P + T) x d
  Mat<Real> values;   // (P + T) x d
};

template <typename Real>
AttentionGrad<Real> attention_backward(const Mat<Real>& queries, const AttentionResult<Real>& fwd,
                                       const Mat<Real>& d_context, int n_heads);

}  // namespace asrkit
