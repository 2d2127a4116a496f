#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace asrkit {

// Dense row-major matrix.  Float instances carry frame-level log
// probabilities (T x V) and features (T x F) between pipeline stages.
template <typename Real>
struct BasicMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<Real> data;

  BasicMatrix() = default;
  BasicMatrix(std::size_t r, std::size_t c, Real fill = Real(0))
      : rows(r), cols(c), data(r * c, fill) {}

  Real& operator()(std::size_t r, std::size_t c) {
    assert(r < rows && c < cols);
    return data[r * cols + c];
  }
  Real operator()(std::size_t r, std::size_t c) const {
    assert(r < rows && c < cols);
    return data[r * cols + c];
  }
  std::span<Real> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const Real> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  bool empty() const { return rows == 0 || cols == 0; }
  bool operator==(const BasicMatrix&) const = default;

  template <typename Other>
  BasicMatrix<Other> cast() const {
    BasicMatrix<Other> out(rows, cols);
    for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<Other>(data[i]);
    return out;
  }
};

using LogProbMatrix = BasicMatrix<float>;

// Checks that every row log-sum-exps to zero within tol.
template <typename Real>
bool rows_normalized(const BasicMatrix<Real>& m, double tol) {
  for (std::size_t r = 0; r < m.rows; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Real v : m.row(r)) mx = std::max(mx, static_cast<double>(v));
    double s = 0.0;
    for (Real v : m.row(r)) s += std::exp(static_cast<double>(v) - mx);
    if (std::abs(mx + std::log(s)) > tol) return false;
  }
  return true;
}

}  // namespace asrkit
