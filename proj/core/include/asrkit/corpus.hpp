#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace asrkit {

inline constexpr int kDefaultSampleRate = 16000;
inline constexpr int kWindowMs = 25;
inline constexpr int kHopMs = 10;

// Samples per 10 ms frame hop at the given rate.
inline std::int64_t hop_samples(int sample_rate) { return static_cast<std::int64_t>(sample_rate) * kHopMs / 1000; }
inline std::int64_t window_samples(int sample_rate) { return static_cast<std::int64_t>(sample_rate) * kWindowMs / 1000; }

struct WordSpan {
  int word_index = 0;
  std::int64_t start_frame = 0;
  std::int64_t end_frame = 0;  // exclusive
  std::int64_t start_sample = 0;
  std::int64_t end_sample = 0;  // exclusive

  static WordSpan from_frames(int word_index, std::int64_t start_frame, std::int64_t end_frame, int sample_rate);
  bool operator==(const WordSpan&) const = default;
};

struct Utterance {
  std::string id;
  std::string speaker_id;
  std::string dialect_id;
  std::vector<std::string> transcript;  // words
  std::string audio_path;               // as written in the manifest
  int sample_rate = kDefaultSampleRate;
  double duration = 0.0;  // seconds
  std::optional<std::vector<WordSpan>> alignment;

  std::string text() const;
  std::int64_t num_samples() const;
  bool operator==(const Utterance&) const = default;
};

// Throws ValidationError when the utterance breaks a transcript or alignment invariant.
void validate_utterance(const Utterance& u);

class Corpus {
 public:
  Corpus() = default;
  explicit Corpus(std::filesystem::path base_dir) : base_dir_(std::move(base_dir)) {}

  // Validates the utterance and the id-uniqueness constraint before appending.
  void add(Utterance u);

  const std::vector<Utterance>& utterances() const { return utterances_; }
  const std::set<std::string>& dialect_inventory() const { return dialects_; }
  const std::set<std::string>& speaker_inventory() const { return speakers_; }
  std::size_t size() const { return utterances_.size(); }
  bool empty() const { return utterances_.empty(); }
  const Utterance& operator[](std::size_t i) const { return utterances_[i]; }
  const Utterance* find(const std::string& id) const;

  // Directory that relative audio paths are resolved against.
  const std::filesystem::path& base_dir() const { return base_dir_; }
  void set_base_dir(std::filesystem::path p) { base_dir_ = std::move(p); }
  std::filesystem::path resolve_audio(const Utterance& u) const;

  // Replaces the alignment of utterance i (validated).
  void set_alignment(std::size_t i, std::vector<WordSpan> spans);

  // Subset of utterances with the given dialect, preserving order.
  Corpus filter_dialect(const std::string& dialect_id) const;

 private:
  std::vector<Utterance> utterances_;
  std::set<std::string> ids_;
  std::set<std::string> dialects_;
  std::set<std::string> speakers_;
  std::filesystem::path base_dir_;
};

// Concatenates two corpora; ids must stay unique.  Audio paths of the second
// are rebased so they still resolve from the first corpus' base directory.
Corpus concat(const Corpus& a, const Corpus& b);

// JSON-lines manifest.  Relative audio paths resolve against the manifest's directory.
Corpus read_manifest(const std::filesystem::path& path);
void write_manifest(const Corpus& corpus, const std::filesystem::path& path);

struct CorpusStats {
  double hours = 0.0;
  std::size_t n_speakers = 0;
  std::size_t n_utterances = 0;
  std::size_t n_unique_sentences = 0;
  std::size_t n_dialects = 0;
};

CorpusStats corpus_stats(const Corpus& c);

// Synthetic read-speech corpus: a pool of unique sentences, each recorded
// `repetitions` times by speakers spread uniformly over dialects.
struct SynthOptions {
  std::uint64_t seed = 0;
  int n_speakers = 4;
  int n_dialects = 2;
  int n_unique_sentences = 10;
  int repetitions_per_sentence = 3;
  std::string charset = "abcdefghijkl";
  // Word list is drawn from this seed; defaults to `seed`.  Sharing it lets
  // held-out sets reuse the training vocabulary with new sentences.
  std::optional<std::uint64_t> lexicon_seed;
  int lexicon_size = 40;
  int min_words = 3;
  int max_words = 6;
  // Scales per-dialect formant shift and tilt; 0 removes the dialect effect.
  double dialect_strength = 1.0;
  double noise_stddev = 0.01;
  // Speaker ids get this prefix so disjoint sets can be merged.
  std::string id_prefix = "";
};

// Writes WAVs under out_dir/wav and returns the corpus (manifest not written).
Corpus synth_corpus(const SynthOptions& opts, const std::filesystem::path& out_dir);

// Audio of one synthetic utterance; exposed for tests of the generator.
std::vector<float> synth_audio(const SynthOptions& opts, const std::vector<std::string>& words,
                               int dialect_index, double speaker_gain, double speaker_pitch,
                               std::uint64_t utt_seed, std::vector<WordSpan>* spans);

}  // namespace asrkit
