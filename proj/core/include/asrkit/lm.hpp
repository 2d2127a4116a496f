#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace asrkit {

using Sentence = std::vector<std::string>;

// Word inventory with the three reserved tokens at fixed indices.
class Vocabulary {
 public:
  static constexpr int kBos = 0;
  static constexpr int kEos = 1;
  static constexpr int kUnk = 2;
  static constexpr const char* kBosWord = "<s>";
  static constexpr const char* kEosWord = "</s>";
  static constexpr const char* kUnkWord = "<unk>";

  Vocabulary();

  int add(const std::string& word);
  std::optional<int> find(const std::string& word) const;
  // Unknown words map to kUnk.
  int id(const std::string& word) const;
  bool contains(const std::string& word) const { return find(word).has_value(); }
  const std::string& word(int id) const { return words_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return words_.size(); }
  const std::vector<std::string>& words() const { return words_; }
  static bool is_reserved(int id) { return id <= kUnk; }
  static bool is_reserved(const std::string& w) { return w == kBosWord || w == kEosWord || w == kUnkWord; }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> index_;
};

struct NGramEntry {
  double log10_prob = 0.0;
  double log10_backoff = 0.0;
};

struct NGramKeyHash {
  std::size_t operator()(const std::vector<int>& k) const noexcept;
};

using NGramTable = std::unordered_map<std::vector<int>, NGramEntry, NGramKeyHash>;

// ARPA-style back-off n-gram model.  Probabilities are log10, as in the file format.
class NGramModel {
 public:
  static constexpr double kLog10Zero = -99.0;

  NGramModel() = default;
  NGramModel(int order, Vocabulary vocab);

  int order() const { return order_; }
  const Vocabulary& vocab() const { return vocab_; }
  Vocabulary& mutable_vocab() { return vocab_; }

  // Table of n-grams of length n (1-based).
  const NGramTable& table(int n) const { return tables_.at(static_cast<std::size_t>(n - 1)); }
  NGramTable& mutable_table(int n) { return tables_.at(static_cast<std::size_t>(n - 1)); }
  const NGramEntry* find(std::span<const int> ngram) const;

  // log10 P(word | context) with back-off; context is oldest-first and may be
  // longer than order-1 (only the tail is used).
  double log10_prob(std::span<const int> context, int word) const;
  double ln_prob(std::span<const int> context, int word) const;

  // Sum of P(w | context) over every predictable word (all but <s>).
  double probability_mass(std::span<const int> context) const;

  std::size_t num_ngrams(int n) const { return table(n).size(); }

  const std::vector<std::string>& warnings() const { return warnings_; }
  void add_warning(std::string w) { warnings_.push_back(std::move(w)); }

  // Sorted n-gram keys of length n, by word strings.
  std::vector<std::vector<int>> sorted_keys(int n) const;

 private:
  int order_ = 0;
  Vocabulary vocab_;
  std::vector<NGramTable> tables_;
  std::vector<std::string> warnings_;
};

// Modified Kneser-Ney discounts for one order.
struct KnDiscounts {
  double d1 = 0.5, d2 = 0.5, d3 = 0.5;
  bool fallback = false;
  double operator()(std::int64_t count) const {
    return count <= 0 ? 0.0 : count == 1 ? d1 : count == 2 ? d2 : d3;
  }
};

// Count-of-counts n1..n4 -> discounts; falls back to 0.5 when the formulas degenerate.
KnDiscounts kn_discounts(std::int64_t n1, std::int64_t n2, std::int64_t n3, std::int64_t n4);

struct KnOptions {
  int order = 4;
  // Minimum (modified) count for an n-gram of order n+1 to be stored; entry 0
  // applies to unigrams and is ignored (every vocabulary word keeps a unigram).
  std::vector<int> min_count;
};

// Interpolated modified Kneser-Ney.  Throws if sentences is empty.
NGramModel train_kn(const std::vector<Sentence>& sentences, const KnOptions& opts);

struct PerplexityResult {
  double ppl = 0.0;                // OOVs scored as <unk>
  double ppl_excluding_oov = 0.0;  // OOV tokens left out of numerator and N
  double log10_prob = 0.0;
  double log10_prob_excluding_oov = 0.0;
  std::size_t token_count = 0;  // words + </s>, OOVs included
  std::size_t oov_count = 0;
  std::size_t sentence_count = 0;
};

PerplexityResult perplexity(const NGramModel& model, const std::vector<Sentence>& sentences);

// Fraction of test tokens outside the vocabulary; reserved tokens ignored.
double oov_rate(const Vocabulary& vocab, const std::vector<Sentence>& sentences);

struct MixtureWeights {
  std::vector<double> weights;
};

struct InterpolationResult {
  NGramModel merged;
  MixtureWeights weights;
  // Dev log-likelihood (natural log) after each EM iteration; entry 0 is the uniform start.
  std::vector<double> log_likelihood_trace;
  // Per-token natural-log probability under the dynamic mixture at the final weights.
  double mixture_log_likelihood = 0.0;
  std::size_t dev_tokens = 0;
};

struct EmOptions {
  double tolerance = 1e-6;
  int max_iterations = 200;
};

// Per-token probability of each component for every dev token (rows: tokens,
// cols: models), with vocabularies mapped onto their union.
std::vector<std::vector<double>> component_token_probs(const std::vector<const NGramModel*>& models,
                                                       const std::vector<Sentence>& dev);

// EM for linear mixture weights on a token x component probability table.
MixtureWeights em_mixture_weights(const std::vector<std::vector<double>>& probs, const EmOptions& opts,
                                  std::vector<double>* trace = nullptr);

// Static merge P_mix(w|h) = sum_s l_s P_s(w|h) over the union of n-grams with
// renormalized back-off weights.  Needs >= 2 models.
InterpolationResult interpolate(const std::vector<const NGramModel*>& models, const std::vector<Sentence>& dev,
                                const EmOptions& opts = {});

// Materializes a fixed-weight mixture (used by interpolate).
NGramModel merge_models(const std::vector<const NGramModel*>& models, const std::vector<double>& weights);

// Perplexity of the dynamic (unmerged) mixture on sentences.
double mixture_perplexity(const std::vector<const NGramModel*>& models, const std::vector<double>& weights,
                          const std::vector<Sentence>& sentences);

// Ancestral sampling from <s>; <unk> is never emitted.  Sentences reaching
// max_len words are closed with a forced </s>.
std::vector<Sentence> sample_sentences(const NGramModel& model, std::size_t n, std::size_t max_len,
                                       std::uint64_t seed);

void arpa_write(const NGramModel& model, std::ostream& os);
void arpa_write(const NGramModel& model, const std::filesystem::path& path);
NGramModel arpa_read(std::istream& is);
NGramModel arpa_read(const std::filesystem::path& path);

// One sentence per line, whitespace-tokenized; blank lines skipped.
std::vector<Sentence> read_text(const std::filesystem::path& path);
void write_text(const std::vector<Sentence>& sentences, const std::filesystem::path& path);

// Word-level LM state used during decoding: context word ids, oldest first.
struct LmContext {
  std::vector<int> words;
  bool operator==(const LmContext&) const = default;
};

}  // namespace asrkit
