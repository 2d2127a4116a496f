#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "asrkit/corpus.hpp"
#include "asrkit/matrix.hpp"
#include "asrkit/nbest.hpp"

namespace asrkit {

class NGramModel;
using Sentence = std::vector<std::string>;

// Output symbols of a character CTC model: blank at 0, word separator (space) at 1.
class CharVocab {
 public:
  static constexpr int kBlank = 0;
  static constexpr int kSeparator = 1;
  static constexpr const char* kBlankSymbol = "<blk>";
  static constexpr const char* kSeparatorSymbol = " ";

  CharVocab();
  // symbols[0] must be the blank and symbols[1] the separator.
  explicit CharVocab(const std::vector<std::string>& symbols);
  static CharVocab from_transcripts(const std::vector<Sentence>& transcripts);

  int add(const std::string& symbol);
  std::optional<int> find(const std::string& symbol) const;
  const std::string& symbol(int id) const { return symbols_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return symbols_.size(); }
  const std::vector<std::string>& symbols() const { return symbols_; }

  // Characters of the space-joined words.  Throws on symbols outside the vocabulary.
  std::vector<int> encode(const Sentence& words) const;
  // Splits a label sequence on separators; blanks are ignored, empty words dropped.
  Sentence decode(std::span<const int> labels) const;

 private:
  std::vector<std::string> symbols_;
  std::unordered_map<std::string, int> index_;
};

template <typename Real>
struct CtcLoss {
  Real loss = 0;  // -ln P(label | x); +inf when no path exists
  // d loss / d log_probs(t, k), treating every entry as a free variable.
  BasicMatrix<Real> grad;
};

// Forward-backward over the blank-interleaved label.  log_probs rows are
// per-frame log probabilities (T x V).
template <typename Real>
CtcLoss<Real> ctc_loss(const BasicMatrix<Real>& log_probs, std::span<const int> label, bool with_grad = true);

// Per-frame argmax, repeats collapsed, blanks removed.
std::vector<int> greedy_labels(const LogProbMatrix& log_probs);
Sentence greedy_decode(const LogProbMatrix& log_probs, const CharVocab& vocab);

struct BeamOptions {
  std::size_t beam_width = 8;
  double alpha = 0.5;  // LM weight
  double beta = 0.0;   // word insertion bonus
  std::size_t nbest = 0;  // hypotheses returned; 0 means beam_width
};

struct BeamHypothesis {
  std::vector<int> labels;
  double log_p_blank = 0.0;
  double log_p_nonblank = 0.0;
  double am_score = 0.0;
  double lm_score = 0.0;
  std::size_t word_count = 0;
  double score = 0.0;  // am + alpha * lm + beta * word_count
};

// Prefix beam search.  With an LM, every completed word (at a separator or at
// the end of the utterance) adds ln P(word | history), and </s> is scored at
// the end.  Hypotheses are ranked by score, ties by label sequence.
std::vector<BeamHypothesis> prefix_beam_search(const LogProbMatrix& log_probs, const CharVocab& vocab,
                                               const NGramModel* lm, const BeamOptions& opts);

NBestList beam_search(const LogProbMatrix& log_probs, const CharVocab& vocab, const NGramModel* lm,
                      const BeamOptions& opts);

struct AlignmentResult {
  // Frame span [start, end) of every label position (characters and separators).
  std::vector<std::pair<std::int64_t, std::int64_t>> char_spans;
  // One span per word; spans tile [0, T), trailing blanks and separators join the preceding word.
  std::vector<WordSpan> words;
  double log_prob = 0.0;  // Viterbi path score
  std::vector<int> state_path;  // expanded-label state per frame
};

// Viterbi forced alignment.  Throws NoPathError when the transcript cannot fit.
AlignmentResult force_align(const LogProbMatrix& log_probs, const CharVocab& vocab, const Sentence& transcript,
                            int sample_rate = kDefaultSampleRate);

// Score of one explicit frame-level path (symbol per frame).
double path_log_prob(const LogProbMatrix& log_probs, std::span<const int> path);

}  // namespace asrkit
