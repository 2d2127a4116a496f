#pragma once

#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "asrkit/matrix.hpp"

namespace asrkit {

template <typename Real>
using Mat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Real>
Mat<Real> to_eigen(const BasicMatrix<Real>& m) {
  Mat<Real> out(static_cast<Eigen::Index>(m.rows), static_cast<Eigen::Index>(m.cols));
  std::copy(m.data.begin(), m.data.end(), out.data());
  return out;
}

template <typename Real>
BasicMatrix<Real> from_eigen(const Mat<Real>& m) {
  BasicMatrix<Real> out(static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()));
  std::copy(m.data(), m.data() + m.size(), out.data.begin());
  return out;
}

// Per-layer prefix keys and values (each L_prefix x d_model), prepended to the
// attention keys/values of the corresponding layer.
template <typename Real>
struct PrefixKV {
  std::vector<Mat<Real>> keys;
  std::vector<Mat<Real>> values;
  // Optional additive bias on the prefix attention logits (one per slot);
  // used to mask prefixes out.  Not a trained parameter.
  std::vector<Real> logit_bias;

  std::size_t length() const { return keys.empty() ? 0 : static_cast<std::size_t>(keys.front().rows()); }
  std::size_t num_layers() const { return keys.size(); }

  template <typename Other>
  PrefixKV<Other> cast() const {
    PrefixKV<Other> out;
    for (const auto& k : keys) out.keys.push_back(k.template cast<Other>());
    for (const auto& v : values) out.values.push_back(v.template cast<Other>());
    for (Real b : logit_bias) out.logit_bias.push_back(static_cast<Other>(b));
    return out;
  }
};

// dialect id -> prefix tensors
using PrefixBank = std::map<std::string, PrefixKV<float>>;

}  // namespace asrkit
