#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "asrkit/corpus.hpp"

namespace asrkit {

struct InventoryEntry {
  std::string word;
  std::string utterance_id;
  int word_index = 0;
  WordSpan span;
  // Audio segment [segment_begin, segment_end) in the source file.  Equal to
  // the span except for an utterance's last word, which also owns the
  // sub-frame tail so that an utterance's segments cover its whole file.
  std::int64_t segment_begin = 0;
  std::int64_t segment_end = 0;
};

// speaker id -> entries in corpus order, then word order.
using WordInventory = std::map<std::string, std::vector<InventoryEntry>>;

// Throws ValidationError naming the first utterance without an alignment.
WordInventory build_inventory(const Corpus& corpus);

struct Replacement {
  int word_index = 0;           // position in the target utterance
  std::string donor_utterance;  // never the target itself
  int donor_word_index = 0;
  std::string donor_word;
  bool operator==(const Replacement&) const = default;
};

struct UtterancePlan {
  std::string utterance_id;
  std::vector<Replacement> replacements;  // sorted by word_index
  bool no_donor = false;  // speaker has no other utterance; left unmodified
  bool operator==(const UtterancePlan&) const = default;
};

struct AugmentationPlan {
  double replace_rate = 0.2;
  std::uint64_t seed = 0;
  std::vector<UtterancePlan> utterances;  // corpus order
  bool operator==(const AugmentationPlan&) const = default;
};

// Number of words replaced in an n-word utterance.
std::size_t replacement_count(double rate, std::size_t n_words);

AugmentationPlan plan(const Corpus& corpus, const WordInventory& inventory, double replace_rate, std::uint64_t seed);

// One JSON object per line: a header with rate and seed, then one line per utterance.
void write_plan(const AugmentationPlan& p, std::ostream& os);
void write_plan(const AugmentationPlan& p, const std::filesystem::path& path);
AugmentationPlan read_plan(std::istream& is);
AugmentationPlan read_plan(const std::filesystem::path& path);

inline constexpr const char* kAugmentedSuffix = ".ada";
inline constexpr int kCrossfadeMs = 5;

// Writes one augmented copy of every planned utterance to out_dir/wav
// (ids suffixed ".ada") and returns the new corpus, based at out_dir.
// Unmodified utterances are copied.  Splices use a length-preserving linear
// crossfade centred on each junction, so alignments shift by whole frames.
Corpus apply(const Corpus& corpus, const AugmentationPlan& p, const std::filesystem::path& out_dir);

}  // namespace asrkit
