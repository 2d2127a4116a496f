#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "asrkit/model.hpp"
#include "asrkit/prefix.hpp"
#include "asrkit/train.hpp"

namespace asrkit {

struct ResultRow {
  std::string condition;
  double wer = 0.0;
  double cer = 0.0;
};

// Machine-readable result table: {experiment, seed, rows, traces}.
struct ExperimentResult {
  std::string experiment;
  std::uint64_t seed = 0;
  std::vector<ResultRow> rows;
  std::map<std::string, std::vector<double>> traces;  // e.g. per-epoch dev WER

  const ResultRow& row(const std::string& condition) const;
  std::string to_json() const;
};

using LogFn = std::function<void(const std::string&)>;

// Desk defaults shared by both experiments.
ModelConfig desk_model_config();
TrainConfig desk_train_config();

// Normal training vs training on original + ADA-augmented data, on a corpus
// of few unique sentences with many repetitions.  Dev sentences are new
// sentences over the same lexicon, read by unseen speakers.
struct Fig4Config {
  std::uint64_t seed = 17;
  int n_unique_sentences = 20;
  int repetitions = 30;
  int n_speakers = 6;
  int dev_sentences = 30;
  int dev_repetitions = 1;
  double replace_rate = 0.2;
  ModelConfig model = desk_model_config();
  TrainConfig train = desk_train_config();
};

ExperimentResult run_fig4(const Fig4Config& cfg, const std::filesystem::path& work_dir, const LogFn& log = {});

// Dialect-agnostic backbone vs per-dialect prefixes, each without and with
// LM shallow fusion, on a synthetic 3-dialect corpus.
struct Table4Config {
  std::uint64_t seed = 17;
  int n_dialects = 3;
  int n_speakers = 9;
  int n_unique_sentences = 60;
  int repetitions = 3;
  int dev_sentences = 30;
  int dev_repetitions = 3;
  double dialect_strength = 1.0;
  std::size_t prefix_length = 4;
  ModelConfig model = desk_model_config();
  TrainConfig train = desk_train_config();
  PrefixTrainConfig prefix_train;
  int lm_order = 3;
  BeamOptions beam;
};

Table4Config default_table4_config();

ExperimentResult run_table4(const Table4Config& cfg, const std::filesystem::path& work_dir, const LogFn& log = {});

}  // namespace asrkit
