#pragma once

#include <algorithm>
#include <cmath>
#include <limits>

namespace asrkit {

inline constexpr double kLogZero = -std::numeric_limits<double>::infinity();

template <typename Real>
inline Real log_add_exp(Real a, Real b) {
  if (a == -std::numeric_limits<Real>::infinity()) return b;
  if (b == -std::numeric_limits<Real>::infinity()) return a;
  Real mx = std::max(a, b);
  return mx + std::log1p(std::exp(-std::abs(a - b)));
}

inline constexpr double kLn10 = 2.302585092994045684;

inline double log10_to_ln(double x) { return x * kLn10; }

}  // namespace asrkit
