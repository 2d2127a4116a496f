#pragma once

#include <filesystem>
#include <cstdint>
#include <span>
#include <vector>

namespace asrkit {

struct Audio {
  std::vector<float> samples;  // in [-1, 1)
  int sample_rate = 0;
};

// 16-bit PCM mono only.  Samples decode as s / 32768.
Audio read_wav(const std::filesystem::path& path);
void write_wav(std::span<const float> samples, int sample_rate, const std::filesystem::path& path);

// Quantizes to the 16-bit code write_wav stores.
std::int16_t to_pcm16(float x);

}  // namespace asrkit
