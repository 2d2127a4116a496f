#pragma once

#include <string>
#include <vector>

namespace asrkit {

// One scored hypothesis.  Scores are natural-log; am_score is the CTC prefix
// probability and lm_score the unweighted LM log probability.
struct NBestHypothesis {
  std::vector<std::string> words;
  double am_score = 0.0;
  double lm_score = 0.0;
  std::size_t word_count = 0;
  bool operator==(const NBestHypothesis&) const = default;
};

struct NBestList {
  std::string utterance_id;
  std::vector<NBestHypothesis> hypotheses;
  // Free-form markers such as "dialect_fallback".
  std::vector<std::string> flags;

  bool has_flag(const std::string& f) const {
    for (const auto& x : flags)
      if (x == f) return true;
    return false;
  }
  bool operator==(const NBestList&) const = default;
};

}  // namespace asrkit
