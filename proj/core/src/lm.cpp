#include "asrkit/lm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "asrkit/error.hpp"
#include "asrkit/rng.hpp"
#include "asrkit/text.hpp"

namespace asrkit {

Vocabulary::Vocabulary() {
  add(kBosWord);
  add(kEosWord);
  add(kUnkWord);
}

int Vocabulary::add(const std::string& word) {
  auto it = index_.find(word);
  if (it != index_.end()) return it->second;
  int id = static_cast<int>(words_.size());
  words_.push_back(word);
  index_.emplace(word, id);
  return id;
}

std::optional<int> Vocabulary::find(const std::string& word) const {
  auto it = index_.find(word);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

int Vocabulary::id(const std::string& word) const { return find(word).value_or(kUnk); }

std::size_t NGramKeyHash::operator()(const std::vector<int>& k) const noexcept {
  std::uint64_t h = 1469598103934665603ull;
  for (int v : k) {
    h ^= static_cast<std::uint32_t>(v);
    h *= 1099511628211ull;
    h ^= h >> 29;
  }
  return static_cast<std::size_t>(h);
}

NGramModel::NGramModel(int order, Vocabulary vocab) : order_(order), vocab_(std::move(vocab)), tables_(order) {
  if (order < 1) throw Error("n-gram order must be >= 1");
}

const NGramEntry* NGramModel::find(std::span<const int> ngram) const {
  if (ngram.empty() || static_cast<int>(ngram.size()) > order_) return nullptr;
  thread_local std::vector<int> key;
  key.assign(ngram.begin(), ngram.end());
  const auto& t = tables_[ngram.size() - 1];
  auto it = t.find(key);
  return it == t.end() ? nullptr : &it->second;
}

double NGramModel::log10_prob(std::span<const int> context, int word) const {
  if (word < 0 || word >= static_cast<int>(vocab_.size())) word = Vocabulary::kUnk;
  std::size_t n = std::min<std::size_t>(context.size(), static_cast<std::size_t>(order_ - 1));
  thread_local std::vector<int> key;
  double backoff = 0.0;
  for (std::size_t k = n;; --k) {
    auto hist = context.subspan(context.size() - k, k);
    key.assign(hist.begin(), hist.end());
    key.push_back(word);
    const auto& t = tables_[k];
    if (auto it = t.find(key); it != t.end()) return backoff + it->second.log10_prob;
    if (k == 0) return backoff + kLog10Zero;
    if (const NGramEntry* h = find(hist)) backoff += h->log10_backoff;
  }
}

double NGramModel::ln_prob(std::span<const int> context, int word) const {
  return log10_prob(context, word) * 2.302585092994045684;
}

double NGramModel::probability_mass(std::span<const int> context) const {
  double s = 0.0;
  for (int w = 0; w < static_cast<int>(vocab_.size()); ++w) {
    if (w == Vocabulary::kBos) continue;
    s += std::pow(10.0, log10_prob(context, w));
  }
  return s;
}

std::vector<std::vector<int>> NGramModel::sorted_keys(int n) const {
  std::vector<std::vector<int>> keys;
  keys.reserve(table(n).size());
  for (const auto& [k, e] : table(n)) keys.push_back(k);
  std::sort(keys.begin(), keys.end(), [&](const auto& a, const auto& b) {
    return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end(),
                                        [&](int x, int y) { return vocab_.word(x) < vocab_.word(y); });
  });
  return keys;
}

KnDiscounts kn_discounts(std::int64_t n1, std::int64_t n2, std::int64_t n3, std::int64_t n4) {
  KnDiscounts d;
  if (n1 <= 0 || n2 <= 0 || n3 <= 0 || n4 <= 0) {
    d.fallback = true;
    return d;
  }
  double y = static_cast<double>(n1) / (n1 + 2.0 * n2);
  d.d1 = 1.0 - 2.0 * y * n2 / n1;
  d.d2 = 2.0 - 3.0 * y * n3 / n2;
  d.d3 = 3.0 - 4.0 * y * n4 / n3;
  if (!(d.d1 > 0.0 && d.d1 < 1.0 && d.d2 > 0.0 && d.d2 < 2.0 && d.d3 > 0.0 && d.d3 < 3.0)) {
    d = KnDiscounts{};
    d.fallback = true;
  }
  return d;
}

namespace {

using CountTable = std::map<std::vector<int>, std::int64_t>;

double safe_log10(double p) { return p > 0.0 ? std::log10(p) : NGramModel::kLog10Zero; }

}  // namespace

NGramModel train_kn(const std::vector<Sentence>& sentences, const KnOptions& opts) {
  if (sentences.empty()) throw Error("train_kn: no training sentences");
  const int N = opts.order;
  if (N < 1) throw Error("train_kn: order must be >= 1");

  std::set<std::string> words;
  for (const auto& s : sentences)
    for (const auto& w : s)
      if (!Vocabulary::is_reserved(w)) words.insert(w);
  Vocabulary vocab;
  for (const auto& w : words) vocab.add(w);

  std::vector<CountTable> raw(N);
  for (const auto& s : sentences) {
    std::vector<int> ids{Vocabulary::kBos};
    for (const auto& w : s) {
      if (w == Vocabulary::kBosWord || w == Vocabulary::kEosWord) continue;
      ids.push_back(vocab.id(w));
    }
    ids.push_back(Vocabulary::kEos);
    for (std::size_t i = 1; i < ids.size(); ++i)
      for (int n = 1; n <= N && static_cast<std::size_t>(n) <= i + 1; ++n)
        ++raw[n - 1][std::vector<int>(ids.begin() + (i + 1 - n), ids.begin() + i + 1)];
  }

  // Lower orders use continuation counts, except n-grams anchored at <s>.
  std::vector<CountTable> mod(N);
  mod[N - 1] = raw[N - 1];
  for (int n = N - 1; n >= 1; --n) {
    CountTable cont;
    for (const auto& [k, c] : raw[n]) ++cont[std::vector<int>(k.begin() + 1, k.end())];
    for (const auto& [k, c] : raw[n - 1]) mod[n - 1][k] = k[0] == Vocabulary::kBos ? c : cont[k];
  }

  NGramModel model(N, vocab);
  std::vector<KnDiscounts> disc(N);
  for (int n = 1; n <= N; ++n) {
    std::int64_t cc[5] = {0, 0, 0, 0, 0};
    for (const auto& [k, c] : mod[n - 1])
      if (c >= 1 && c <= 4) ++cc[c];
    disc[n - 1] = kn_discounts(cc[1], cc[2], cc[3], cc[4]);
    if (disc[n - 1].fallback)
      model.add_warning("order " + std::to_string(n) + ": modified KN discounts degenerate (n1..n4 = " +
                        std::to_string(cc[1]) + "," + std::to_string(cc[2]) + "," + std::to_string(cc[3]) + "," +
                        std::to_string(cc[4]) + "); using absolute discount 0.5");
  }

  // Unigrams: discounted continuation counts interpolated with a uniform
  // distribution over every predictable word (<unk> included, <s> excluded).
  {
    const KnDiscounts& D = disc[0];
    double total = 0.0, discounted = 0.0;
    for (const auto& [k, c] : mod[0]) {
      total += static_cast<double>(c);
      discounted += D(c);
    }
    const double gamma = discounted / total;
    const double uniform = 1.0 / static_cast<double>(vocab.size() - 1);
    auto& t = model.mutable_table(1);
    for (int w = 0; w < static_cast<int>(vocab.size()); ++w) {
      if (w == Vocabulary::kBos) {
        t[{w}] = {NGramModel::kLog10Zero, 0.0};
        continue;
      }
      auto it = mod[0].find({w});
      double c = it == mod[0].end() ? 0.0 : static_cast<double>(it->second);
      double p = std::max(c - D(static_cast<std::int64_t>(c)), 0.0) / total + gamma * uniform;
      t[{w}] = {std::log10(p), 0.0};
    }
  }

  for (int n = 2; n <= N; ++n) {
    const KnDiscounts& D = disc[n - 1];
    const int min_count = static_cast<std::size_t>(n - 1) < opts.min_count.size() ? opts.min_count[n - 1] : 1;
    // Group children by context; std::map keeps contexts contiguous in key order.
    std::map<std::vector<int>, std::vector<std::pair<int, std::int64_t>>> children;
    for (const auto& [k, c] : mod[n - 1])
      children[std::vector<int>(k.begin(), k.end() - 1)].emplace_back(k.back(), c);

    auto& t = model.mutable_table(n);
    auto& parent = model.mutable_table(n - 1);
    for (const auto& [hist, kids] : children) {
      // history pruned at the lower order: the whole context backs off
      auto pit = parent.find(hist);
      if (pit == parent.end()) continue;
      double total = 0.0, discounted = 0.0;
      for (const auto& [w, c] : kids) {
        total += static_cast<double>(c);
        discounted += D(c);
      }
      const double gamma = discounted / total;
      std::span<const int> lower(hist.data() + 1, hist.size() - 1);
      bool pruned = false;
      double kept_mass = 0.0, kept_lower = 0.0;
      for (const auto& [w, c] : kids) {
        double p_lower = std::pow(10.0, model.log10_prob(lower, w));
        if (c < min_count) {
          pruned = true;
          continue;
        }
        double p = std::max(static_cast<double>(c) - D(c), 0.0) / total + gamma * p_lower;
        std::vector<int> key = hist;
        key.push_back(w);
        t[key] = {std::log10(p), 0.0};
        kept_mass += p;
        kept_lower += p_lower;
      }
      double bow = gamma;
      if (pruned) bow = (1.0 - kept_mass) / (1.0 - kept_lower);
      pit->second.log10_backoff = safe_log10(bow);
    }
  }
  return model;
}

PerplexityResult perplexity(const NGramModel& model, const std::vector<Sentence>& sentences) {
  PerplexityResult r;
  const auto& vocab = model.vocab();
  std::vector<int> ctx;
  for (const auto& s : sentences) {
    ++r.sentence_count;
    ctx.assign(1, Vocabulary::kBos);
    auto score = [&](int id, bool oov) {
      double lp = model.log10_prob(ctx, id);
      r.log10_prob += lp;
      ++r.token_count;
      if (oov) ++r.oov_count;
      else r.log10_prob_excluding_oov += lp;
      ctx.push_back(id);
    };
    for (const auto& w : s) {
      auto id = vocab.find(w);
      bool oov = !id || *id == Vocabulary::kUnk;
      score(id.value_or(Vocabulary::kUnk), oov);
    }
    score(Vocabulary::kEos, false);
  }
  auto ppl = [](double lp, std::size_t n) { return n == 0 ? 0.0 : std::pow(10.0, -lp / static_cast<double>(n)); };
  r.ppl = ppl(r.log10_prob, r.token_count);
  r.ppl_excluding_oov = ppl(r.log10_prob_excluding_oov, r.token_count - r.oov_count);
  return r;
}

double oov_rate(const Vocabulary& vocab, const std::vector<Sentence>& sentences) {
  std::size_t total = 0, oov = 0;
  for (const auto& s : sentences)
    for (const auto& w : s) {
      if (Vocabulary::is_reserved(w)) continue;
      ++total;
      if (!vocab.contains(w)) ++oov;
    }
  if (total == 0) throw Error("oov_rate: empty test set");
  return static_cast<double>(oov) / static_cast<double>(total);
}

namespace {

Vocabulary union_vocabulary(const std::vector<const NGramModel*>& models) {
  std::set<std::string> words;
  for (const auto* m : models)
    for (const auto& w : m->vocab().words())
      if (!Vocabulary::is_reserved(w)) words.insert(w);
  Vocabulary v;
  for (const auto& w : words) v.add(w);
  return v;
}

// Maps union ids into one component's vocabulary.  Words the component does
// not know get probability zero; context words fall back to its <unk>.
struct ComponentView {
  const NGramModel* model;
  std::vector<int> to_local;  // -1 when absent

  ComponentView(const NGramModel* m, const Vocabulary& uni) : model(m), to_local(uni.size(), -1) {
    for (int i = 0; i < static_cast<int>(uni.size()); ++i)
      if (auto id = m->vocab().find(uni.word(i))) to_local[i] = *id;
  }

  double prob(std::span<const int> ctx, int w, std::vector<int>& scratch) const {
    int lw = to_local[w];
    if (lw < 0) return 0.0;
    scratch.clear();
    for (int c : ctx) scratch.push_back(to_local[c] < 0 ? Vocabulary::kUnk : to_local[c]);
    double lp = model->log10_prob(scratch, lw);
    return lp <= NGramModel::kLog10Zero ? 0.0 : std::pow(10.0, lp);
  }
};

double log_likelihood(const std::vector<std::vector<double>>& probs, const std::vector<double>& w) {
  double ll = 0.0;
  for (const auto& row : probs) {
    double m = 0.0;
    for (std::size_t s = 0; s < w.size(); ++s) m += w[s] * row[s];
    ll += std::log(m);
  }
  return ll;
}

}  // namespace

std::vector<std::vector<double>> component_token_probs(const std::vector<const NGramModel*>& models,
                                                       const std::vector<Sentence>& dev) {
  Vocabulary uni = union_vocabulary(models);
  std::vector<ComponentView> views;
  for (const auto* m : models) views.emplace_back(m, uni);
  std::vector<std::vector<double>> out;
  std::vector<int> ctx, scratch;
  for (const auto& s : dev) {
    ctx.assign(1, Vocabulary::kBos);
    auto add = [&](int w) {
      std::vector<double> row(models.size());
      for (std::size_t k = 0; k < views.size(); ++k) row[k] = views[k].prob(ctx, w, scratch);
      out.push_back(std::move(row));
      ctx.push_back(w);
    };
    for (const auto& w : s) {
      int id = uni.id(w);
      // Words unknown to every component are scored as each component's <unk>.
      add(id);
    }
    add(Vocabulary::kEos);
  }
  return out;
}

MixtureWeights em_mixture_weights(const std::vector<std::vector<double>>& probs, const EmOptions& opts,
                                  std::vector<double>* trace) {
  if (probs.empty()) throw Error("em_mixture_weights: empty dev set");
  const std::size_t S = probs.front().size();
  std::vector<double> w(S, 1.0 / static_cast<double>(S));
  double ll = log_likelihood(probs, w);
  if (trace) trace->assign(1, ll);
  for (int it = 0; it < opts.max_iterations; ++it) {
    std::vector<double> acc(S, 0.0);
    for (const auto& row : probs) {
      double m = 0.0;
      for (std::size_t s = 0; s < S; ++s) m += w[s] * row[s];
      if (m <= 0.0) continue;
      for (std::size_t s = 0; s < S; ++s) acc[s] += w[s] * row[s] / m;
    }
    double z = 0.0;
    for (double a : acc) z += a;
    for (std::size_t s = 0; s < S; ++s) w[s] = acc[s] / z;
    double next = log_likelihood(probs, w);
    if (trace) trace->push_back(next);
    double gain = next - ll;
    ll = next;
    if (gain < opts.tolerance) break;
  }
  // Renormalize so the simplex constraint holds to rounding.
  double z = 0.0;
  for (double x : w) z += x;
  for (double& x : w) x /= z;
  return MixtureWeights{w};
}

NGramModel merge_models(const std::vector<const NGramModel*>& models, const std::vector<double>& weights) {
  if (models.empty() || models.size() != weights.size()) throw Error("merge_models: weights do not match models");
  Vocabulary uni = union_vocabulary(models);
  std::vector<ComponentView> views;
  int N = 0;
  for (const auto* m : models) {
    views.emplace_back(m, uni);
    N = std::max(N, m->order());
  }
  NGramModel merged(N, uni);
  std::vector<int> scratch;
  auto mix = [&](std::span<const int> ctx, int w) {
    double p = 0.0;
    for (std::size_t s = 0; s < views.size(); ++s)
      if (weights[s] > 0.0) p += weights[s] * views[s].prob(ctx, w, scratch);
    return p;
  };

  const int V = static_cast<int>(uni.size());
  {
    auto& t = merged.mutable_table(1);
    for (int w = 0; w < V; ++w)
      t[{w}] = {w == Vocabulary::kBos ? NGramModel::kLog10Zero : safe_log10(mix({}, w)), 0.0};
  }
  for (int n = 2; n <= N; ++n) {
    std::map<std::vector<int>, std::vector<int>> children;
    for (std::size_t s = 0; s < models.size(); ++s) {
      if (models[s]->order() < n) continue;
      for (const auto& [k, e] : models[s]->table(n)) {
        std::vector<int> key;
        for (int id : k) {
          auto u = uni.find(models[s]->vocab().word(id));
          key.push_back(*u);
        }
        children[std::vector<int>(key.begin(), key.end() - 1)].push_back(key.back());
      }
    }
    auto& t = merged.mutable_table(n);
    auto& parent = merged.mutable_table(n - 1);
    for (auto& [hist, kids] : children) {
      std::sort(kids.begin(), kids.end());
      kids.erase(std::unique(kids.begin(), kids.end()), kids.end());
      std::span<const int> lower(hist.data() + 1, hist.size() - 1);
      double kept = 0.0;
      for (int w : kids) {
        double p = mix(hist, w);
        std::vector<int> key = hist;
        key.push_back(w);
        t[key] = {safe_log10(p), 0.0};
        kept += p;
      }
      // Remaining lower-order mass; summed over the complement when the
      // children cover most of the vocabulary, to avoid cancellation.
      double rest_lower = 0.0;
      std::size_t predictable = static_cast<std::size_t>(V - 1);
      if (2 * kids.size() > predictable) {
        std::vector<char> is_kid(V, 0);
        for (int w : kids) is_kid[w] = 1;
        for (int w = 0; w < V; ++w)
          if (w != Vocabulary::kBos && !is_kid[w]) rest_lower += std::pow(10.0, merged.log10_prob(lower, w));
      } else {
        double kl = 0.0;
        for (int w : kids) kl += std::pow(10.0, merged.log10_prob(lower, w));
        rest_lower = 1.0 - kl;
      }
      double rest = 1.0 - kept;
      double bow_log = 0.0;
      if (rest_lower > 0.0) bow_log = rest > 0.0 ? std::log10(rest / rest_lower) : NGramModel::kLog10Zero;
      auto pit = parent.find(hist);
      if (pit == parent.end()) {
        // A component was not well formed; materialize the history from the mixture.
        pit = parent.emplace(hist, NGramEntry{safe_log10(mix(std::span<const int>(hist.data(), hist.size() - 1),
                                                             hist.back())), 0.0}).first;
      }
      pit->second.log10_backoff = bow_log;
    }
  }
  return merged;
}

InterpolationResult interpolate(const std::vector<const NGramModel*>& models, const std::vector<Sentence>& dev,
                                const EmOptions& opts) {
  if (models.size() < 2) throw Error("interpolate: need at least two models");
  auto probs = component_token_probs(models, dev);
  InterpolationResult r;
  r.weights = em_mixture_weights(probs, opts, &r.log_likelihood_trace);
  r.merged = merge_models(models, r.weights.weights);
  r.mixture_log_likelihood = log_likelihood(probs, r.weights.weights);
  r.dev_tokens = probs.size();
  return r;
}

double mixture_perplexity(const std::vector<const NGramModel*>& models, const std::vector<double>& weights,
                          const std::vector<Sentence>& sentences) {
  auto probs = component_token_probs(models, sentences);
  if (probs.empty()) throw Error("mixture_perplexity: empty test set");
  return std::exp(-log_likelihood(probs, weights) / static_cast<double>(probs.size()));
}

std::vector<Sentence> sample_sentences(const NGramModel& model, std::size_t n, std::size_t max_len,
                                       std::uint64_t seed) {
  const auto& vocab = model.vocab();
  std::vector<int> candidates;
  for (int w = 0; w < static_cast<int>(vocab.size()); ++w)
    if (w != Vocabulary::kBos && w != Vocabulary::kUnk) candidates.push_back(w);
  if (model.log10_prob({}, Vocabulary::kEos) <= NGramModel::kLog10Zero)
    throw Error("sample_sentences: </s> is unreachable");

  Rng rng = Rng::derive(seed, "lm-sample");
  std::vector<Sentence> out;
  std::vector<double> p(candidates.size());
  std::vector<int> ctx;
  for (std::size_t i = 0; i < n; ++i) {
    Sentence s;
    ctx.assign(1, Vocabulary::kBos);
    while (s.size() < max_len) {
      double z = 0.0;
      for (std::size_t k = 0; k < candidates.size(); ++k) {
        p[k] = std::pow(10.0, model.log10_prob(ctx, candidates[k]));
        z += p[k];
      }
      double u = rng.uniform() * z;
      std::size_t pick = candidates.size() - 1;
      for (std::size_t k = 0; k < candidates.size(); ++k) {
        u -= p[k];
        if (u < 0.0) {
          pick = k;
          break;
        }
      }
      int w = candidates[pick];
      if (w == Vocabulary::kEos) break;
      s.push_back(vocab.word(w));
      ctx.push_back(w);
      if (static_cast<int>(ctx.size()) > model.order()) ctx.erase(ctx.begin());
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<Sentence> read_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<Sentence> out;
  std::string line;
  while (std::getline(in, line)) {
    auto words = split_words(line);
    if (!words.empty()) out.push_back(std::move(words));
  }
  return out;
}

void write_text(const std::vector<Sentence>& sentences, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& s : sentences) out << join_words(s) << '\n';
}

}  // namespace asrkit
