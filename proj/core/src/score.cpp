#include "asrkit/score.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "asrkit/error.hpp"
#include "asrkit/text.hpp"

namespace asrkit {

EditAlignment align_generic(std::size_t n_ref, std::size_t n_hyp,
                            const std::function<bool(std::size_t, std::size_t)>& same) {
  const std::size_t W = n_hyp + 1;
  std::vector<std::size_t> cost((n_ref + 1) * W);
  for (std::size_t i = 0; i <= n_ref; ++i) cost[i * W] = i;
  for (std::size_t j = 0; j <= n_hyp; ++j) cost[j] = j;
  for (std::size_t i = 1; i <= n_ref; ++i)
    for (std::size_t j = 1; j <= n_hyp; ++j) {
      std::size_t diag = cost[(i - 1) * W + j - 1] + (same(i - 1, j - 1) ? 0 : 1);
      cost[i * W + j] = std::min({diag, cost[(i - 1) * W + j] + 1, cost[i * W + j - 1] + 1});
    }

  EditAlignment a;
  std::size_t i = n_ref, j = n_hyp;
  while (i > 0 || j > 0) {
    std::size_t here = cost[i * W + j];
    if (i > 0 && j > 0) {
      bool eq = same(i - 1, j - 1);
      if (cost[(i - 1) * W + j - 1] + (eq ? 0 : 1) == here) {
        a.steps.push_back({eq ? EditOp::kMatch : EditOp::kSubstitute, int(i - 1), int(j - 1)});
        eq ? ++a.matches : ++a.substitutions;
        --i, --j;
        continue;
      }
    }
    if (i > 0 && cost[(i - 1) * W + j] + 1 == here) {
      a.steps.push_back({EditOp::kDelete, int(i - 1), -1});
      ++a.deletions;
      --i;
      continue;
    }
    a.steps.push_back({EditOp::kInsert, -1, int(j - 1)});
    ++a.insertions;
    --j;
  }
  std::reverse(a.steps.begin(), a.steps.end());
  return a;
}

EditAlignment align(const std::vector<std::string>& ref, const std::vector<std::string>& hyp) {
  return align_generic(ref.size(), hyp.size(), [&](std::size_t i, std::size_t j) { return ref[i] == hyp[j]; });
}

std::size_t edit_distance(const std::vector<std::string>& ref, const std::vector<std::string>& hyp) {
  return align(ref, hyp).errors();
}

std::vector<std::string> replay(const EditAlignment& a, const std::vector<std::string>& ref,
                                const std::vector<std::string>& hyp) {
  std::vector<std::string> out;
  for (const auto& s : a.steps) {
    switch (s.op) {
      case EditOp::kMatch: out.push_back(ref[s.ref_index]); break;
      case EditOp::kSubstitute:
      case EditOp::kInsert: out.push_back(hyp[s.hyp_index]); break;
      case EditOp::kDelete: break;
    }
  }
  return out;
}

double ErrorCounts::rate() const {
  if (ref_length == 0) throw Error("error rate undefined: zero total reference length");
  return static_cast<double>(errors) / static_cast<double>(ref_length);
}

std::vector<std::string> char_stream(const Sentence& s) { return utf8_chars(join_words(s)); }

namespace {

template <typename Tokenize>
ErrorCounts pooled(const std::vector<Sentence>& refs, const std::vector<Sentence>& hyps, Tokenize tok) {
  if (refs.size() != hyps.size())
    throw Error("scoring: " + std::to_string(refs.size()) + " references vs " + std::to_string(hyps.size()) +
                " hypotheses");
  ErrorCounts c;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    auto r = tok(refs[i]);
    auto h = tok(hyps[i]);
    c.errors += edit_distance(r, h);
    c.ref_length += r.size();
  }
  if (c.ref_length == 0) throw Error("scoring: zero total reference length");
  return c;
}

}  // namespace

ErrorCounts word_errors(const std::vector<Sentence>& refs, const std::vector<Sentence>& hyps) {
  return pooled(refs, hyps, [](const Sentence& s) { return s; });
}

ErrorCounts char_errors(const std::vector<Sentence>& refs, const std::vector<Sentence>& hyps) {
  return pooled(refs, hyps, [](const Sentence& s) { return char_stream(s); });
}

double wer(const std::vector<Sentence>& refs, const std::vector<Sentence>& hyps) {
  return word_errors(refs, hyps).rate();
}

double cer(const std::vector<Sentence>& refs, const std::vector<Sentence>& hyps) {
  return char_errors(refs, hyps).rate();
}

std::vector<Transcript> read_transcripts(std::istream& is) {
  std::vector<Transcript> out;
  std::set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::size_t tab = line.find('\t');
    std::string id = tab == std::string::npos ? line : line.substr(0, tab);
    if (id.empty() || has_whitespace(id))
      throw ParseError("transcript line " + std::to_string(lineno) + ": bad utterance id");
    if (!seen.insert(id).second)
      throw ParseError("transcript line " + std::to_string(lineno) + ": duplicate id '" + id + "'");
    out.emplace_back(std::move(id), tab == std::string::npos ? Sentence{} : split_words(line.substr(tab + 1)));
  }
  return out;
}

std::vector<Transcript> read_transcripts(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open " + path.string());
  return read_transcripts(is);
}

void write_transcripts(const std::vector<Transcript>& t, std::ostream& os) {
  for (const auto& [id, words] : t) os << id << '\t' << join_words(words) << '\n';
}

void write_transcripts(const std::vector<Transcript>& t, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path.string());
  write_transcripts(t, os);
}

}  // namespace asrkit
