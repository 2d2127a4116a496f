#include <algorithm>
#include <cmath>
#include <map>
#include <unordered_map>

#include "asrkit/ctc.hpp"
#include "asrkit/error.hpp"
#include "asrkit/lm.hpp"
#include "asrkit/logmath.hpp"

namespace asrkit {

namespace {

struct LabelsHash {
  std::size_t operator()(const std::vector<int>& v) const noexcept {
    std::size_t h = 1469598103934665603ull;
    for (int x : v) h = (h ^ static_cast<std::size_t>(x)) * 1099511628211ull;
    return h;
  }
};

// Everything about a prefix that does not depend on the frame position.
struct PrefixState {
  std::string partial;        // characters since the last separator
  std::vector<int> lm_context;  // LM word ids, oldest first
  double lm_score = 0.0;
  std::size_t word_count = 0;
};

struct Entry {
  double pb = kLogZero;
  double pnb = kLogZero;
  PrefixState state;
  double total() const { return log_add_exp(pb, pnb); }
};

class WordScorer {
 public:
  explicit WordScorer(const NGramModel* lm) : lm_(lm) {}

  void complete_word(PrefixState& st) const {
    if (st.partial.empty()) return;
    ++st.word_count;
    if (lm_) {
      int id = lm_->vocab().id(st.partial);
      st.lm_score += lm_->ln_prob(st.lm_context, id);
      push(st.lm_context, id);
    }
    st.partial.clear();
  }

  void finish(PrefixState& st) const {
    complete_word(st);
    if (lm_) st.lm_score += lm_->ln_prob(st.lm_context, Vocabulary::kEos);
  }

 private:
  void push(std::vector<int>& ctx, int id) const {
    ctx.push_back(id);
    std::size_t keep = static_cast<std::size_t>(std::max(lm_->order() - 1, 0));
    if (ctx.size() > keep) ctx.erase(ctx.begin(), ctx.end() - static_cast<std::ptrdiff_t>(keep));
  }
  const NGramModel* lm_;
};

}  // namespace

std::vector<BeamHypothesis> prefix_beam_search(const LogProbMatrix& log_probs, const CharVocab& vocab,
                                               const NGramModel* lm, const BeamOptions& opts) {
  if (log_probs.rows == 0 || log_probs.cols == 0) throw Error("beam_search: empty logits");
  if (opts.beam_width < 1) throw Error("beam_search: beam_width must be >= 1");
  if (!std::isfinite(opts.alpha) || !std::isfinite(opts.beta)) throw Error("beam_search: alpha/beta must be finite");
  if (log_probs.cols != vocab.size()) throw Error("beam_search: logits width differs from vocabulary size");
  const std::size_t T = log_probs.rows;
  const int V = static_cast<int>(log_probs.cols);
  const WordScorer scorer(lm);
  const double alpha = lm ? opts.alpha : 0.0;

  using Beam = std::unordered_map<std::vector<int>, Entry, LabelsHash>;
  Beam beam;
  {
    Entry root;
    root.pb = 0.0;
    if (lm) root.state.lm_context.push_back(Vocabulary::kBos);
    beam.emplace(std::vector<int>{}, std::move(root));
  }

  auto rank_score = [&](const Entry& e) {
    return e.total() + alpha * e.state.lm_score + opts.beta * static_cast<double>(e.state.word_count);
  };

  std::vector<int> key;
  for (std::size_t t = 0; t < T; ++t) {
    auto row = log_probs.row(t);
    Beam next;
    next.reserve(beam.size() * static_cast<std::size_t>(V));
    for (const auto& [labels, e] : beam) {
      const double total = e.total();
      {
        auto [it, fresh] = next.try_emplace(labels);
        if (fresh) it->second.state = e.state;
        it->second.pb = log_add_exp(it->second.pb, total + row[CharVocab::kBlank]);
        if (!labels.empty()) it->second.pnb = log_add_exp(it->second.pnb, e.pnb + row[labels.back()]);
      }
      for (int c = 1; c < V; ++c) {
        key = labels;
        key.push_back(c);
        auto [it, fresh] = next.try_emplace(key);
        if (fresh) {
          PrefixState st = e.state;
          if (c == CharVocab::kSeparator) scorer.complete_word(st);
          else st.partial += vocab.symbol(c);
          it->second.state = std::move(st);
        }
        double via = (!labels.empty() && labels.back() == c) ? e.pb : total;
        it->second.pnb = log_add_exp(it->second.pnb, via + row[c]);
      }
    }

    std::vector<std::pair<double, const std::vector<int>*>> order;
    order.reserve(next.size());
    for (const auto& [labels, e] : next) order.emplace_back(rank_score(e), &labels);
    auto better = [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return *a.second < *b.second;
    };
    if (order.size() > opts.beam_width) {
      std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(opts.beam_width), order.end(), better);
      order.resize(opts.beam_width);
    }
    Beam kept;
    kept.reserve(order.size());
    for (const auto& [s, labels] : order) kept.emplace(*labels, std::move(next.at(*labels)));
    beam = std::move(kept);
  }

  std::vector<BeamHypothesis> out;
  out.reserve(beam.size());
  for (auto& [labels, e] : beam) {
    PrefixState st = e.state;
    scorer.finish(st);
    BeamHypothesis h;
    h.labels = labels;
    h.log_p_blank = e.pb;
    h.log_p_nonblank = e.pnb;
    h.am_score = e.total();
    h.lm_score = lm ? st.lm_score : 0.0;
    h.word_count = st.word_count;
    h.score = h.am_score + alpha * h.lm_score + opts.beta * static_cast<double>(h.word_count);
    out.push_back(std::move(h));
  }
  std::sort(out.begin(), out.end(), [](const BeamHypothesis& a, const BeamHypothesis& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.labels < b.labels;
  });
  std::size_t n = opts.nbest ? opts.nbest : opts.beam_width;
  if (out.size() > n) out.resize(n);
  return out;
}

NBestList beam_search(const LogProbMatrix& log_probs, const CharVocab& vocab, const NGramModel* lm,
                      const BeamOptions& opts) {
  NBestList list;
  for (auto& h : prefix_beam_search(log_probs, vocab, lm, opts)) {
    NBestHypothesis n;
    n.words = vocab.decode(h.labels);
    n.am_score = h.am_score;
    n.lm_score = h.lm_score;
    n.word_count = n.words.size();
    list.hypotheses.push_back(std::move(n));
  }
  return list;
}

}  // namespace asrkit
