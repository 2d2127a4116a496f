#include "asrkit/nelder_mead.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "asrkit/error.hpp"

namespace asrkit {

namespace {

using Point = std::vector<double>;

double distance(const Point& a, const Point& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

NelderMeadResult run(const std::function<double(const Point&)>& f, const Point& x0, const NelderMeadOptions& o,
                     int budget) {
  const std::size_t n = x0.size();
  NelderMeadResult r;
  auto eval = [&](const Point& x) {
    ++r.evaluations;
    const double v = f(x);
    return std::isnan(v) ? std::numeric_limits<double>::infinity() : v;
  };
  std::vector<Point> xs{x0};
  for (std::size_t i = 0; i < n; ++i) {
    Point p = x0;
    p[i] += o.initial_step;
    xs.push_back(std::move(p));
  }
  std::vector<double> fs;
  for (const auto& x : xs) fs.push_back(eval(x));
  if (!std::isfinite(fs[0])) throw Error("nelder_mead: objective is not finite at the start point");

  std::vector<std::size_t> idx(n + 1);
  auto order = [&] {
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return fs[a] < fs[b]; });
    std::vector<Point> nx;
    std::vector<double> nf;
    for (auto i : idx) {
      nx.push_back(xs[i]);
      nf.push_back(fs[i]);
    }
    xs = std::move(nx);
    fs = std::move(nf);
  };
  auto lerp = [&](const Point& c, const Point& w, double t) {
    Point p(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = c[i] + t * (w[i] - c[i]);
    return p;
  };

  order();
  while (r.iterations < budget) {
    double diam = 0.0;
    for (std::size_t i = 1; i <= n; ++i) diam = std::max(diam, distance(xs[0], xs[i]));
    if (diam < o.tolerance) break;
    ++r.iterations;

    Point c(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < n; ++k) c[k] += xs[i][k] / static_cast<double>(n);
    const Point& worst = xs[n];
    Point xr = lerp(c, worst, -1.0);
    const double fr = eval(xr);
    if (fr < fs[0]) {
      Point xe = lerp(c, worst, -2.0);
      const double fe = eval(xe);
      if (fe < fr) {
        xs[n] = std::move(xe);
        fs[n] = fe;
      } else {
        xs[n] = std::move(xr);
        fs[n] = fr;
      }
    } else if (fr < fs[n - 1]) {
      xs[n] = std::move(xr);
      fs[n] = fr;
    } else {
      const bool outside = fr < fs[n];
      Point xc = outside ? lerp(c, xr, 0.5) : lerp(c, worst, 0.5);
      const double fc = eval(xc);
      if (fc < (outside ? fr : fs[n])) {
        xs[n] = std::move(xc);
        fs[n] = fc;
      } else {
        for (std::size_t i = 1; i <= n; ++i) {
          xs[i] = lerp(xs[0], xs[i], 0.5);
          fs[i] = eval(xs[i]);
        }
      }
    }
    order();
  }
  r.x = xs[0];
  r.value = fs[0];
  return r;
}

}  // namespace

NelderMeadResult nelder_mead(const std::function<double(const std::vector<double>&)>& f,
                             const std::vector<double>& x0, const NelderMeadOptions& opts) {
  if (x0.empty()) throw Error("nelder_mead: empty start point");
  std::vector<Point> starts{x0};
  for (const auto& s : opts.starts) {
    if (s.size() != x0.size()) throw Error("nelder_mead: start point dimension mismatch");
    starts.push_back(s);
  }
  NelderMeadResult best;
  bool have = false;
  int total_iter = 0, total_eval = 0;
  for (const auto& s : starts) {
    NelderMeadResult r = run(f, s, opts, opts.max_iterations);
    total_iter += r.iterations;
    total_eval += r.evaluations;
    for (int k = 0; k < opts.restarts && r.iterations > 0; ++k) {
      NelderMeadResult again = run(f, r.x, opts, opts.max_iterations);
      total_iter += again.iterations;
      total_eval += again.evaluations;
      if (!(again.value < r.value)) break;
      r = std::move(again);
    }
    if (!have || r.value < best.value) {
      best = std::move(r);
      have = true;
    }
  }
  best.iterations = total_iter;
  best.evaluations = total_eval;
  return best;
}

}  // namespace asrkit
