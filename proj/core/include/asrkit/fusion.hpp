#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "asrkit/nbest.hpp"
#include "asrkit/nelder_mead.hpp"

namespace asrkit {

using Sentence = std::vector<std::string>;
using References = std::map<std::string, Sentence>;

inline constexpr std::size_t kDefaultNBest = 50;

struct SystemWeights {
  double lm_weight = 1.0;
  double length_weight = 0.0;
  double posterior_scale = 1.0;  // kappa
  bool operator==(const SystemWeights&) const = default;
};

// kappa = 1 / max(w_lm, 1)
double default_posterior_scale(double lm_weight);

// s = am + w_lm * lm + w_len * word_count
double combined_score(const NBestHypothesis& h, const SystemWeights& w);

// Stable sort by combined score, descending; ties by word sequence.
NBestList rescore(const NBestList& nbest, const SystemWeights& w);

// Softmax of kappa * s over the list, in list order.
std::vector<double> posteriors(const NBestList& nbest, const SystemWeights& w);

// Corpus WER of the rescored 1-best.  Throws on utterances without a reference.
double one_best_wer(const std::vector<NBestList>& nbests, const References& refs, const SystemWeights& w);

struct SystemOptimization {
  SystemWeights weights;
  double dev_wer = 0.0;
};

// Multi-start simplex search over (w_lm, w_len) from a 5x5 grid on
// {0,1,2,3,4} x {-2,-1,0,1,2}, starting with the default (1, 0).  Negative
// LM weights are infeasible.
SystemOptimization optimize_system_weights(const std::vector<NBestList>& dev, const References& refs,
                                           const NelderMeadOptions& nm = {});

inline constexpr const char* kEpsilon = "";

struct CnSlot {
  std::map<std::string, double> mass;  // kEpsilon for the empty word
  double total() const;
};

struct ConfusionNetwork {
  std::vector<CnSlot> slots;
};

struct PooledHypothesis {
  std::size_t system = 0;
  std::size_t rank = 0;
  double mass = 0.0;
  Sentence words;
  // Token this hypothesis contributes at every final slot (kEpsilon when none).
  std::vector<std::string> path;
};

struct CnBuild {
  ConfusionNetwork cn;
  std::vector<PooledHypothesis> pooled;  // mass-descending
};

// Pools the hypotheses of all systems for one utterance with mass
// cw_s * p_i, then aligns them one by one to a network seeded by the
// heaviest hypothesis.  Epsilon takes each slot's missing mass.
CnBuild build_cn_traced(const std::vector<const NBestList*>& systems, const std::vector<double>& combination,
                        const std::vector<SystemWeights>& weights);
ConfusionNetwork build_cn(const std::vector<const NBestList*>& systems, const std::vector<double>& combination,
                          const std::vector<SystemWeights>& weights);

// Heaviest token per slot; ties by word, epsilon last; epsilon emits nothing.
Sentence decode_cn(const ConfusionNetwork& cn);

// Sum over reference words of the mass their aligned slot gives them.
double reference_posterior(const ConfusionNetwork& cn, const Sentence& ref);

// dev[s][u]: system s, utterance u.  Systems must list the same utterances.
using SystemNBests = std::vector<std::vector<NBestList>>;

double combination_objective(const SystemNBests& dev, const References& refs, const std::vector<double>& combination,
                             const std::vector<SystemWeights>& weights);

struct CombinationOptimization {
  std::vector<double> weights;  // on the simplex
  double objective = 0.0;
};

// Maximizes combination_objective over softmax-parameterized weights,
// starting from uniform.
CombinationOptimization optimize_combination_weights(const SystemNBests& dev, const References& refs,
                                                     const std::vector<SystemWeights>& weights,
                                                     const NelderMeadOptions& nm = {});

std::vector<double> softmax_weights(const std::vector<double>& z);

// CN decoding of every utterance across systems.
std::vector<std::pair<std::string, Sentence>> fuse(const SystemNBests& systems, const std::vector<double>& combination,
                                                   const std::vector<SystemWeights>& weights);

// Reorders each system's lists to follow the first system's utterance order.
// Throws when an utterance is missing from some system.
SystemNBests align_systems(const std::vector<std::vector<NBestList>>& systems);

// N-best text format: "# <utt_id>" header, optional "#flags f1 f2", then one
// line per hypothesis "am<TAB>lm<TAB>word_count<TAB>words" (9 significant digits).
void write_nbest(const std::vector<NBestList>& lists, std::ostream& os);
void write_nbest(const std::vector<NBestList>& lists, const std::filesystem::path& path);
std::vector<NBestList> read_nbest(std::istream& is);
std::vector<NBestList> read_nbest(const std::filesystem::path& path);

}  // namespace asrkit
