#pragma once

#include <filesystem>

#include "asrkit/ctc.hpp"
#include "asrkit/model.hpp"

namespace asrkit {

struct Checkpoint {
  ModelConfig config;
  CharVocab vocab;
  ModelParams<float> params;
  PrefixBank prefixes;
  std::size_t prefix_length = 0;
};

// Binary container: magic "ASRC", a JSON header (model config, symbol
// table, prefix metadata), then named float32 tensors.  Writes go through a
// temporary file so a failed save never leaves a partial checkpoint.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);

// Validates every tensor shape against the embedded config.
Checkpoint load_checkpoint(const std::filesystem::path& path);
// Additionally requires the stored architecture to equal `expected`
// (seed and regularization rates excluded).
Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected);

}  // namespace asrkit
