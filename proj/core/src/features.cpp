#include "asrkit/features.hpp"

#include <fftw3.h>

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>

#include "asrkit/error.hpp"

namespace asrkit {

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::size_t num_frames(std::size_t n_samples, int sample_rate, int win_ms, int hop_ms) {
  std::size_t win = static_cast<std::size_t>(sample_rate) * win_ms / 1000;
  std::size_t hop = static_cast<std::size_t>(sample_rate) * hop_ms / 1000;
  if (n_samples < win || hop == 0) return 0;
  return 1 + (n_samples - win) / hop;
}

namespace {

// FFTW planning is not thread safe; plans are created once per size under a lock
// and executed through the new-array interface afterwards.
struct Plan {
  int n;
  float* in;
  fftwf_complex* out;
  fftwf_plan plan;
  Plan(int size) : n(size) {
    in = fftwf_alloc_real(n);
    out = fftwf_alloc_complex(n / 2 + 1);
    plan = fftwf_plan_dft_r2c_1d(n, in, out, FFTW_ESTIMATE);
  }
  ~Plan() {
    fftwf_destroy_plan(plan);
    fftwf_free(in);
    fftwf_free(out);
  }
};

const Plan& plan_for(int n) {
  static std::mutex mu;
  static std::map<int, std::unique_ptr<Plan>> plans;
  std::lock_guard<std::mutex> lock(mu);
  auto& p = plans[n];
  if (!p) p = std::make_unique<Plan>(n);
  return *p;
}

// Triangular filters in the power-spectrum domain, indexed [mel][bin].
std::vector<std::vector<float>> mel_bank(int n_mels, int n_fft, int sample_rate) {
  double mel_lo = hz_to_mel(0.0), mel_hi = hz_to_mel(sample_rate / 2.0);
  std::vector<double> edges(n_mels + 2);
  for (int i = 0; i < n_mels + 2; ++i) edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (n_mels + 1));
  int n_bins = n_fft / 2 + 1;
  std::vector<std::vector<float>> bank(n_mels, std::vector<float>(n_bins, 0.0f));
  for (int m = 0; m < n_mels; ++m) {
    double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
    for (int k = 0; k < n_bins; ++k) {
      double f = static_cast<double>(k) * sample_rate / n_fft;
      double w = 0.0;
      if (f > lo && f <= mid) w = (f - lo) / (mid - lo);
      else if (f > mid && f < hi) w = (hi - f) / (hi - mid);
      bank[m][k] = static_cast<float>(w);
    }
  }
  return bank;
}

}  // namespace

LogProbMatrix logmel_features(std::span<const float> samples, int sample_rate, int n_mels, int win_ms, int hop_ms) {
  if (sample_rate <= 0) throw Error("logmel_features: sample_rate must be positive");
  if (n_mels <= 0) throw Error("logmel_features: n_mels must be positive");
  int win = sample_rate * win_ms / 1000;
  int hop = sample_rate * hop_ms / 1000;
  if (win <= 0 || hop <= 0) throw Error("logmel_features: window and hop must be at least one sample");
  std::size_t T = num_frames(samples.size(), sample_rate, win_ms, hop_ms);
  if (T == 0) throw Error("logmel_features: signal shorter than one analysis window");

  int n_fft = 1;
  while (n_fft < win) n_fft <<= 1;
  const Plan& plan = plan_for(n_fft);
  auto bank = mel_bank(n_mels, n_fft, sample_rate);
  int n_bins = n_fft / 2 + 1;

  std::vector<float> window(win);
  for (int i = 0; i < win; ++i)
    window[i] = static_cast<float>(0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * i / (win - 1)));

  float* in = fftwf_alloc_real(n_fft);
  fftwf_complex* out = fftwf_alloc_complex(n_bins);
  std::vector<double> power(n_bins);
  LogProbMatrix feats(T, static_cast<std::size_t>(n_mels));
  for (std::size_t t = 0; t < T; ++t) {
    const float* frame = samples.data() + t * hop;
    for (int i = 0; i < n_fft; ++i) in[i] = i < win ? frame[i] * window[i] : 0.0f;
    fftwf_execute_dft_r2c(plan.plan, in, out);
    for (int k = 0; k < n_bins; ++k)
      power[k] = static_cast<double>(out[k][0]) * out[k][0] + static_cast<double>(out[k][1]) * out[k][1];
    for (int m = 0; m < n_mels; ++m) {
      double e = 0.0;
      for (int k = 0; k < n_bins; ++k) e += bank[m][k] * power[k];
      feats(t, m) = static_cast<float>(std::log(std::max(e, kLogMelFloor)));
    }
  }
  fftwf_free(in);
  fftwf_free(out);
  return feats;
}

void normalize_features(LogProbMatrix& m) {
  if (m.rows == 0) return;
  for (std::size_t c = 0; c < m.cols; ++c) {
    double mean = 0.0, sq = 0.0;
    for (std::size_t r = 0; r < m.rows; ++r) mean += m(r, c);
    mean /= m.rows;
    for (std::size_t r = 0; r < m.rows; ++r) sq += (m(r, c) - mean) * (m(r, c) - mean);
    double sd = std::sqrt(sq / m.rows);
    double inv = sd > 1e-5 ? 1.0 / sd : 1.0;
    for (std::size_t r = 0; r < m.rows; ++r) m(r, c) = static_cast<float>((m(r, c) - mean) * inv);
  }
}

}  // namespace asrkit
