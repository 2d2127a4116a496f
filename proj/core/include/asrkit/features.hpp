#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "asrkit/matrix.hpp"

namespace asrkit {

inline constexpr double kLogMelFloor = 1e-10;

double hz_to_mel(double hz);
double mel_to_hz(double mel);

// Log mel filterbank energies, Hamming window, power spectrum.
// T = 1 + floor((len - win) / hop).
LogProbMatrix logmel_features(std::span<const float> samples, int sample_rate, int n_mels,
                              int win_ms = 25, int hop_ms = 10);

// Number of frames produced for a signal of n samples.
std::size_t num_frames(std::size_t n_samples, int sample_rate, int win_ms = 25, int hop_ms = 10);

// Per-dimension mean/variance normalization in place.
void normalize_features(LogProbMatrix& m);

}  // namespace asrkit
