#include "asrkit/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "asrkit/error.hpp"
#include "asrkit/score.hpp"

namespace asrkit {

double default_posterior_scale(double lm_weight) { return 1.0 / std::max(lm_weight, 1.0); }

double combined_score(const NBestHypothesis& h, const SystemWeights& w) {
  return h.am_score + w.lm_weight * h.lm_score + w.length_weight * static_cast<double>(h.word_count);
}

NBestList rescore(const NBestList& nbest, const SystemWeights& w) {
  NBestList out = nbest;
  std::vector<double> s;
  for (const auto& h : nbest.hypotheses) s.push_back(combined_score(h, w));
  std::vector<std::size_t> idx(s.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (s[a] != s[b]) return s[a] > s[b];
    return nbest.hypotheses[a].words < nbest.hypotheses[b].words;
  });
  for (std::size_t i = 0; i < idx.size(); ++i) out.hypotheses[i] = nbest.hypotheses[idx[i]];
  return out;
}

std::vector<double> posteriors(const NBestList& nbest, const SystemWeights& w) {
  std::vector<double> z;
  for (const auto& h : nbest.hypotheses) z.push_back(w.posterior_scale * combined_score(h, w));
  if (z.empty()) return z;
  const double mx = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double& v : z) sum += (v = std::exp(v - mx));
  for (double& v : z) v /= sum;
  return z;
}

double one_best_wer(const std::vector<NBestList>& nbests, const References& refs, const SystemWeights& w) {
  std::vector<Sentence> r, h;
  for (const auto& nb : nbests) {
    auto it = refs.find(nb.utterance_id);
    if (it == refs.end()) throw ValidationError("no reference for utterance '" + nb.utterance_id + "'");
    r.push_back(it->second);
    if (nb.hypotheses.empty()) {
      h.emplace_back();
      continue;
    }
    std::size_t best = 0;
    double bs = combined_score(nb.hypotheses[0], w);
    for (std::size_t i = 1; i < nb.hypotheses.size(); ++i) {
      const double s = combined_score(nb.hypotheses[i], w);
      if (s > bs || (s == bs && nb.hypotheses[i].words < nb.hypotheses[best].words)) {
        bs = s;
        best = i;
      }
    }
    h.push_back(nb.hypotheses[best].words);
  }
  return wer(r, h);
}

SystemOptimization optimize_system_weights(const std::vector<NBestList>& dev, const References& refs,
                                           const NelderMeadOptions& nm) {
  if (dev.empty()) throw ValidationError("optimize_system_weights: empty dev set");
  auto objective = [&](const std::vector<double>& x) {
    if (x[0] < 0.0) return std::numeric_limits<double>::infinity();
    return one_best_wer(dev, refs, SystemWeights{x[0], x[1], 1.0});
  };
  NelderMeadOptions o = nm;
  for (double lm : {0.0, 1.0, 2.0, 3.0, 4.0})
    for (double len : {-2.0, -1.0, 0.0, 1.0, 2.0})
      if (!(lm == 1.0 && len == 0.0)) o.starts.push_back({lm, len});
  NelderMeadResult r = nelder_mead(objective, {1.0, 0.0}, o);
  SystemOptimization out;
  out.weights = {r.x[0], r.x[1], default_posterior_scale(r.x[0])};
  out.dev_wer = r.value;
  return out;
}

double CnSlot::total() const {
  double s = 0.0;
  for (const auto& [w, m] : mass) s += m;
  return s;
}

CnBuild build_cn_traced(const std::vector<const NBestList*>& systems, const std::vector<double>& combination,
                        const std::vector<SystemWeights>& weights) {
  if (systems.empty()) throw ValidationError("build_cn: no systems");
  if (combination.size() != systems.size() || weights.size() != systems.size())
    throw ValidationError("build_cn: one combination weight and one system weight set per system required");
  CnBuild b;
  // Identical word sequences are pooled into one entry so that the network
  // is built from a distribution over distinct strings.
  std::map<Sentence, std::size_t> seen;
  for (std::size_t s = 0; s < systems.size(); ++s) {
    std::vector<double> p = posteriors(*systems[s], weights[s]);
    for (std::size_t i = 0; i < p.size(); ++i) {
      const Sentence& words = systems[s]->hypotheses[i].words;
      auto [it, fresh] = seen.try_emplace(words, b.pooled.size());
      if (fresh) b.pooled.push_back({s, i, combination[s] * p[i], words, {}});
      else b.pooled[it->second].mass += combination[s] * p[i];
    }
  }
  std::stable_sort(b.pooled.begin(), b.pooled.end(),
                   [](const PooledHypothesis& x, const PooledHypothesis& y) { return x.mass > y.mass; });

  // Slots carry stable ids so per-hypothesis paths survive insertions.
  struct Slot {
    std::size_t id;
    std::map<std::string, double> mass;
  };
  std::vector<Slot> slots;
  std::vector<std::map<std::size_t, std::string>> assigned(b.pooled.size());
  std::size_t next_id = 0;
  for (std::size_t h = 0; h < b.pooled.size(); ++h) {
    const PooledHypothesis& ph = b.pooled[h];
    if (ph.mass <= 0.0) continue;
    const Sentence& words = ph.words;
    EditAlignment a = align_generic(slots.size(), words.size(), [&](std::size_t i, std::size_t j) {
      return slots[i].mass.count(words[j]) > 0;
    });
    std::vector<Slot> merged;
    for (const auto& st : a.steps) {
      if (st.op == EditOp::kInsert) {
        Slot ns{next_id++, {}};
        ns.mass[words[static_cast<std::size_t>(st.hyp_index)]] += ph.mass;
        assigned[h][ns.id] = words[static_cast<std::size_t>(st.hyp_index)];
        merged.push_back(std::move(ns));
        continue;
      }
      Slot s = std::move(slots[static_cast<std::size_t>(st.ref_index)]);
      if (st.op != EditOp::kDelete) {
        s.mass[words[static_cast<std::size_t>(st.hyp_index)]] += ph.mass;
        assigned[h][s.id] = words[static_cast<std::size_t>(st.hyp_index)];
      }
      merged.push_back(std::move(s));
    }
    slots = std::move(merged);
  }

  double total_mass = 0.0;
  for (const auto& ph : b.pooled) total_mass += ph.mass;
  for (auto& s : slots) {
    CnSlot cs;
    double sum = 0.0;
    for (const auto& [w, m] : s.mass) {
      cs.mass[w] = m / total_mass;
      sum += m / total_mass;
    }
    const double eps = 1.0 - sum;
    if (eps > 1e-12) cs.mass[kEpsilon] += eps;
    b.cn.slots.push_back(std::move(cs));
  }
  for (std::size_t h = 0; h < b.pooled.size(); ++h) {
    b.pooled[h].path.assign(slots.size(), kEpsilon);
    for (std::size_t i = 0; i < slots.size(); ++i) {
      auto it = assigned[h].find(slots[i].id);
      if (it != assigned[h].end()) b.pooled[h].path[i] = it->second;
    }
  }
  return b;
}

ConfusionNetwork build_cn(const std::vector<const NBestList*>& systems, const std::vector<double>& combination,
                          const std::vector<SystemWeights>& weights) {
  return build_cn_traced(systems, combination, weights).cn;
}

Sentence decode_cn(const ConfusionNetwork& cn) {
  Sentence out;
  for (const auto& slot : cn.slots) {
    const std::string* best = nullptr;
    double bm = -1.0;
    // map iteration is lexicographic; epsilon ("") comes first, so it is
    // visited last to lose ties.
    for (const auto& [w, m] : slot.mass) {
      if (w == kEpsilon) continue;
      if (m > bm) {
        bm = m;
        best = &w;
      }
    }
    auto eps = slot.mass.find(kEpsilon);
    if (eps != slot.mass.end() && eps->second > bm) best = nullptr;
    if (best) out.push_back(*best);
  }
  return out;
}

double reference_posterior(const ConfusionNetwork& cn, const Sentence& ref) {
  EditAlignment a = align_generic(ref.size(), cn.slots.size(), [&](std::size_t i, std::size_t j) {
    return cn.slots[j].mass.count(ref[i]) > 0;
  });
  double sum = 0.0;
  for (const auto& st : a.steps)
    if (st.op == EditOp::kMatch)
      sum += cn.slots[static_cast<std::size_t>(st.hyp_index)].mass.at(ref[static_cast<std::size_t>(st.ref_index)]);
  return sum;
}

double combination_objective(const SystemNBests& dev, const References& refs, const std::vector<double>& combination,
                             const std::vector<SystemWeights>& weights) {
  if (dev.empty()) throw ValidationError("combination_objective: no systems");
  double total = 0.0;
  for (std::size_t u = 0; u < dev[0].size(); ++u) {
    std::vector<const NBestList*> lists;
    for (const auto& sys : dev) lists.push_back(&sys.at(u));
    auto it = refs.find(dev[0][u].utterance_id);
    if (it == refs.end()) throw ValidationError("no reference for utterance '" + dev[0][u].utterance_id + "'");
    total += reference_posterior(build_cn(lists, combination, weights), it->second);
  }
  return total;
}

std::vector<double> softmax_weights(const std::vector<double>& z) {
  std::vector<double> w(z.size());
  const double mx = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) sum += (w[i] = std::exp(z[i] - mx));
  for (double& v : w) v /= sum;
  return w;
}

CombinationOptimization optimize_combination_weights(const SystemNBests& dev, const References& refs,
                                                     const std::vector<SystemWeights>& weights,
                                                     const NelderMeadOptions& nm) {
  if (dev.size() < 2) throw ValidationError("optimize_combination_weights: need at least two systems");
  auto objective = [&](const std::vector<double>& z) {
    return -combination_objective(dev, refs, softmax_weights(z), weights);
  };
  NelderMeadResult r = nelder_mead(objective, std::vector<double>(dev.size(), 0.0), nm);
  return {softmax_weights(r.x), -r.value};
}

std::vector<std::pair<std::string, Sentence>> fuse(const SystemNBests& systems, const std::vector<double>& combination,
                                                   const std::vector<SystemWeights>& weights) {
  if (systems.empty()) throw ValidationError("fuse: no systems");
  std::vector<std::pair<std::string, Sentence>> out;
  for (std::size_t u = 0; u < systems[0].size(); ++u) {
    std::vector<const NBestList*> lists;
    for (const auto& sys : systems) lists.push_back(&sys.at(u));
    out.emplace_back(systems[0][u].utterance_id, decode_cn(build_cn(lists, combination, weights)));
  }
  return out;
}

SystemNBests align_systems(const std::vector<std::vector<NBestList>>& systems) {
  if (systems.empty()) return {};
  SystemNBests out(systems.size());
  out[0] = systems[0];
  for (std::size_t s = 1; s < systems.size(); ++s) {
    std::map<std::string, const NBestList*> by_id;
    for (const auto& nb : systems[s]) by_id[nb.utterance_id] = &nb;
    for (const auto& nb : systems[0]) {
      auto it = by_id.find(nb.utterance_id);
      if (it == by_id.end())
        throw ValidationError("system " + std::to_string(s) + " has no N-best list for '" + nb.utterance_id + "'");
      out[s].push_back(*it->second);
    }
  }
  return out;
}

}  // namespace asrkit
