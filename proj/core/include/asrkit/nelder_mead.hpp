#pragma once

#include <functional>
#include <vector>

namespace asrkit {

struct NelderMeadOptions {
  double tolerance = 1e-6;  // stop when simplex diameter falls below
  int max_iterations = 500;
  double initial_step = 0.5;
  // Extra starting points tried after x0.  The best result wins; ties go to
  // the earlier start.
  std::vector<std::vector<double>> starts;
  // Restart from the best vertex this many times after convergence.
  int restarts = 1;
};

struct NelderMeadResult {
  std::vector<double> x;
  double value = 0.0;
  int iterations = 0;
  int evaluations = 0;
};

// Downhill simplex with reflection 1, expansion 2, contraction 0.5 and
// shrink 0.5.  Throws Error when the objective is not finite at a start point.
NelderMeadResult nelder_mead(const std::function<double(const std::vector<double>&)>& f,
                             const std::vector<double>& x0, const NelderMeadOptions& opts = {});

}  // namespace asrkit
