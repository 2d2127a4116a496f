#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace asrkit {

enum class EditOp { kMatch, kSubstitute, kDelete, kInsert };

struct EditStep {
  EditOp op;
  int ref_index;  // -1 for insertions
  int hyp_index;  // -1 for deletions
};

struct EditAlignment {
  std::vector<EditStep> steps;
  std::size_t matches = 0;
  std::size_t substitutions = 0;
  std::size_t deletions = 0;
  std::size_t insertions = 0;

  std::size_t errors() const { return substitutions + deletions + insertions; }
};

// Levenshtein alignment with unit costs.  `same(i, j)` decides whether
// reference item i and hypothesis item j match.  Among equal-cost paths the
// backtrace prefers match, then substitution, deletion, insertion.
EditAlignment align_generic(std::size_t n_ref, std::size_t n_hyp,
                            const std::function<bool(std::size_t, std::size_t)>& same);

EditAlignment align(const std::vector<std::string>& ref, const std::vector<std::string>& hyp);

std::size_t edit_distance(const std::vector<std::string>& ref, const std::vector<std::string>& hyp);

// Applies the alignment's operations to ref and returns the resulting sequence.
std::vector<std::string> replay(const EditAlignment& a, const std::vector<std::string>& ref,
                                const std::vector<std::string>& hyp);

struct ErrorCounts {
  std::size_t errors = 0;
  std::size_t ref_length = 0;
  double rate() const;
};

using Sentence = std::vector<std::string>;

// Corpus-level pooled error rates.  Throws on mismatched segment counts or
// zero total reference length.
ErrorCounts word_errors(const std::vector<Sentence>& refs, const std::vector<Sentence>& hyps);
ErrorCounts char_errors(const std::vector<Sentence>& refs, const std::vector<Sentence>& hyps);
double wer(const std::vector<Sentence>& refs, const std::vector<Sentence>& hyps);
double cer(const std::vector<Sentence>& refs, const std::vector<Sentence>& hyps);

// Character stream of the space-joined sentence, spaces included.
std::vector<std::string> char_stream(const Sentence& s);

// "utt_id<TAB>words" lines.  Duplicate ids are a ParseError.
using Transcript = std::pair<std::string, Sentence>;
std::vector<Transcript> read_transcripts(std::istream& is);
std::vector<Transcript> read_transcripts(const std::filesystem::path& path);
void write_transcripts(const std::vector<Transcript>& t, std::ostream& os);
void write_transcripts(const std::vector<Transcript>& t, const std::filesystem::path& path);

}  // namespace asrkit
