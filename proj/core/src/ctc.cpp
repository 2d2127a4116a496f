#include "asrkit/ctc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "asrkit/error.hpp"
#include "asrkit/logmath.hpp"
#include "asrkit/text.hpp"

namespace asrkit {

CharVocab::CharVocab() {
  add(kBlankSymbol);
  add(kSeparatorSymbol);
}

CharVocab::CharVocab(const std::vector<std::string>& symbols) {
  if (symbols.size() < 2 || symbols[0] != kBlankSymbol || symbols[1] != kSeparatorSymbol)
    throw ValidationError("CharVocab: symbols must start with blank and separator");
  for (const auto& s : symbols)
    if (index_.count(s)) throw ValidationError("CharVocab: duplicate symbol '" + s + "'");
    else add(s);
}

CharVocab CharVocab::from_transcripts(const std::vector<Sentence>& transcripts) {
  std::set<std::string> chars;
  for (const auto& s : transcripts)
    for (const auto& w : s)
      for (auto& c : utf8_chars(w)) chars.insert(c);
  CharVocab v;
  for (const auto& c : chars) v.add(c);
  return v;
}

int CharVocab::add(const std::string& symbol) {
  auto it = index_.find(symbol);
  if (it != index_.end()) return it->second;
  int id = static_cast<int>(symbols_.size());
  symbols_.push_back(symbol);
  index_.emplace(symbol, id);
  return id;
}

std::optional<int> CharVocab::find(const std::string& symbol) const {
  auto it = index_.find(symbol);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::vector<int> CharVocab::encode(const Sentence& words) const {
  std::vector<int> out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out.push_back(kSeparator);
    for (const auto& c : utf8_chars(words[i])) {
      auto id = find(c);
      if (!id || *id == kBlank || *id == kSeparator)
        throw ValidationError("CharVocab: character '" + c + "' not in vocabulary");
      out.push_back(*id);
    }
  }
  return out;
}

Sentence CharVocab::decode(std::span<const int> labels) const {
  Sentence out;
  std::string cur;
  for (int l : labels) {
    if (l == kBlank) continue;
    if (l == kSeparator) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += symbol(l);
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

template <typename Real>
CtcLoss<Real> ctc_loss(const BasicMatrix<Real>& log_probs, std::span<const int> label, bool with_grad) {
  const std::size_t T = log_probs.rows, V = log_probs.cols;
  if (T == 0 || V == 0) throw Error("ctc_loss: empty input");
  for (int l : label) {
    if (l == CharVocab::kBlank) throw Error("ctc_loss: label contains the blank symbol");
    if (l < 0 || static_cast<std::size_t>(l) >= V) throw Error("ctc_loss: label symbol out of range");
  }
  const std::size_t L = label.size(), S = 2 * L + 1;
  std::vector<int> ext(S, CharVocab::kBlank);
  for (std::size_t i = 0; i < L; ++i) ext[2 * i + 1] = label[i];

  CtcLoss<Real> out;
  if (with_grad) out.grad = BasicMatrix<Real>(T, V, Real(0));

  std::size_t need = L;
  for (std::size_t i = 1; i < L; ++i)
    if (label[i] == label[i - 1]) ++need;
  if (need > T) {
    out.loss = std::numeric_limits<Real>::infinity();
    return out;
  }

  auto lp = [&](std::size_t t, std::size_t s) { return static_cast<double>(log_probs(t, ext[s])); };
  auto skip_ok = [&](std::size_t s) { return s >= 2 && ext[s] != CharVocab::kBlank && ext[s] != ext[s - 2]; };

  std::vector<double> alpha(T * S, kLogZero), beta(T * S, kLogZero);
  alpha[0] = lp(0, 0);
  if (S > 1) alpha[1] = lp(0, 1);
  for (std::size_t t = 1; t < T; ++t) {
    const double* prev = &alpha[(t - 1) * S];
    double* cur = &alpha[t * S];
    for (std::size_t s = 0; s < S; ++s) {
      double a = prev[s];
      if (s >= 1) a = log_add_exp(a, prev[s - 1]);
      if (skip_ok(s)) a = log_add_exp(a, prev[s - 2]);
      cur[s] = a == kLogZero ? kLogZero : a + lp(t, s);
    }
  }
  double log_p = alpha[(T - 1) * S + S - 1];
  if (S > 1) log_p = log_add_exp(log_p, alpha[(T - 1) * S + S - 2]);
  if (log_p == kLogZero) {
    out.loss = std::numeric_limits<Real>::infinity();
    return out;
  }
  out.loss = static_cast<Real>(-log_p);
  if (!with_grad) return out;

  beta[(T - 1) * S + S - 1] = lp(T - 1, S - 1);
  if (S > 1) beta[(T - 1) * S + S - 2] = lp(T - 1, S - 2);
  for (std::size_t t = T - 1; t-- > 0;) {
    const double* nxt = &beta[(t + 1) * S];
    double* cur = &beta[t * S];
    for (std::size_t s = 0; s < S; ++s) {
      double b = nxt[s];
      if (s + 1 < S) b = log_add_exp(b, nxt[s + 1]);
      if (s + 2 < S && skip_ok(s + 2)) b = log_add_exp(b, nxt[s + 2]);
      cur[s] = b == kLogZero ? kLogZero : b + lp(t, s);
    }
  }

  // alpha_t(s) and beta_t(s) both include the emission at t, so the
  // occupancy of symbol k divides it out once.
  std::vector<double> occ(V);
  for (std::size_t t = 0; t < T; ++t) {
    std::fill(occ.begin(), occ.end(), kLogZero);
    for (std::size_t s = 0; s < S; ++s) {
      double ab = alpha[t * S + s] + beta[t * S + s];
      if (ab != kLogZero) occ[ext[s]] = log_add_exp(occ[ext[s]], ab);
    }
    for (std::size_t k = 0; k < V; ++k) {
      double lpk = static_cast<double>(log_probs(t, k));
      if (occ[k] == kLogZero || !std::isfinite(lpk)) continue;
      out.grad(t, k) = static_cast<Real>(-std::exp(occ[k] - lpk - log_p));
    }
  }
  return out;
}

template CtcLoss<float> ctc_loss(const BasicMatrix<float>&, std::span<const int>, bool);
template CtcLoss<double> ctc_loss(const BasicMatrix<double>&, std::span<const int>, bool);

std::vector<int> greedy_labels(const LogProbMatrix& log_probs) {
  std::vector<int> out;
  int prev = -1;
  for (std::size_t t = 0; t < log_probs.rows; ++t) {
    auto row = log_probs.row(t);
    int best = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    if (best != prev && best != CharVocab::kBlank) out.push_back(best);
    prev = best;
  }
  return out;
}

Sentence greedy_decode(const LogProbMatrix& log_probs, const CharVocab& vocab) {
  return vocab.decode(greedy_labels(log_probs));
}

double path_log_prob(const LogProbMatrix& log_probs, std::span<const int> path) {
  if (path.size() != log_probs.rows) throw Error("path_log_prob: path length differs from frame count");
  double s = 0.0;
  for (std::size_t t = 0; t < path.size(); ++t) s += log_probs(t, path[t]);
  return s;
}

AlignmentResult force_align(const LogProbMatrix& log_probs, const CharVocab& vocab, const Sentence& transcript,
                            int sample_rate) {
  const std::vector<int> label = vocab.encode(transcript);
  if (label.empty()) throw NoPathError("force_align: empty transcript");
  const std::size_t T = log_probs.rows, L = label.size(), S = 2 * L + 1;
  std::size_t need = L;
  for (std::size_t i = 1; i < L; ++i)
    if (label[i] == label[i - 1]) ++need;
  if (need > T)
    throw NoPathError("force_align: " + std::to_string(T) + " frames cannot hold " + std::to_string(L) +
                      " symbols");

  std::vector<int> ext(S, CharVocab::kBlank);
  for (std::size_t i = 0; i < L; ++i) ext[2 * i + 1] = label[i];
  auto skip_ok = [&](std::size_t s) { return s >= 2 && ext[s] != CharVocab::kBlank && ext[s] != ext[s - 2]; };

  std::vector<double> score(T * S, kLogZero);
  std::vector<std::uint8_t> back(T * S, 0);
  score[0] = log_probs(0, ext[0]);
  score[1] = log_probs(0, ext[1]);
  for (std::size_t t = 1; t < T; ++t)
    for (std::size_t s = 0; s < S; ++s) {
      const double* prev = &score[(t - 1) * S];
      double best = prev[s];
      std::uint8_t from = 0;
      if (s >= 1 && prev[s - 1] > best) best = prev[s - 1], from = 1;
      if (skip_ok(s) && prev[s - 2] > best) best = prev[s - 2], from = 2;
      if (best == kLogZero) continue;
      score[t * S + s] = best + log_probs(t, ext[s]);
      back[t * S + s] = from;
    }
  std::size_t s = S - 1;
  if (score[(T - 1) * S + S - 2] > score[(T - 1) * S + S - 1]) s = S - 2;
  AlignmentResult r;
  r.log_prob = score[(T - 1) * S + s];
  if (r.log_prob == kLogZero) throw NoPathError("force_align: no path with non-zero probability");
  r.state_path.assign(T, 0);
  for (std::size_t t = T; t-- > 0;) {
    r.state_path[t] = static_cast<int>(s);
    s -= back[t * S + s];
  }

  r.char_spans.assign(L, {-1, -1});
  for (std::size_t t = 0; t < T; ++t) {
    int st = r.state_path[t];
    if (st % 2 == 0) continue;
    auto& span = r.char_spans[static_cast<std::size_t>(st / 2)];
    if (span.first < 0) span.first = static_cast<std::int64_t>(t);
    span.second = static_cast<std::int64_t>(t) + 1;
  }

  std::vector<std::size_t> first_char;
  bool at_start = true;
  for (std::size_t i = 0; i < L; ++i) {
    if (label[i] == CharVocab::kSeparator) {
      at_start = true;
      continue;
    }
    if (at_start) first_char.push_back(i);
    at_start = false;
  }
  for (std::size_t k = 0; k < first_char.size(); ++k) {
    std::int64_t start = k == 0 ? 0 : r.char_spans[first_char[k]].first;
    std::int64_t end = k + 1 < first_char.size() ? r.char_spans[first_char[k + 1]].first : static_cast<std::int64_t>(T);
    r.words.push_back(WordSpan::from_frames(static_cast<int>(k), start, end, sample_rate));
  }
  return r;
}

}  // namespace asrkit
