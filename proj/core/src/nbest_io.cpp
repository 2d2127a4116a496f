#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "asrkit/error.hpp"
#include "asrkit/fusion.hpp"
#include "asrkit/text.hpp"

namespace asrkit {

namespace {

std::string fmt9(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

void write_nbest(const std::vector<NBestList>& lists, std::ostream& os) {
  for (const auto& nb : lists) {
    if (nb.utterance_id.empty() || has_whitespace(nb.utterance_id))
      throw ValidationError("write_nbest: utterance id must be non-empty without whitespace");
    os << "# " << nb.utterance_id << '\n';
    if (!nb.flags.empty()) {
      os << "#flags";
      for (const auto& f : nb.flags) os << ' ' << f;
      os << '\n';
    }
    for (const auto& h : nb.hypotheses)
      os << fmt9(h.am_score) << '\t' << fmt9(h.lm_score) << '\t' << h.word_count << '\t' << join_words(h.words)
         << '\n';
  }
}

void write_nbest(const std::vector<NBestList>& lists, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path.string());
  write_nbest(lists, os);
}

std::vector<NBestList> read_nbest(std::istream& is) {
  std::vector<NBestList> out;
  std::string line;
  std::size_t lineno = 0;
  auto fail = [&](const std::string& msg) { throw ParseError("nbest line " + std::to_string(lineno) + ": " + msg); };
  auto finish = [&] {
    if (!out.empty() && out.back().hypotheses.empty()) {
      lineno = 0;
      throw ParseError("nbest: utterance '" + out.back().utterance_id + "' has no hypotheses");
    }
  };
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.rfind("#flags", 0) == 0) {
      if (out.empty()) fail("flags before any utterance header");
      std::istringstream ss(line.substr(6));
      std::string f;
      while (ss >> f) out.back().flags.push_back(f);
      continue;
    }
    if (line.rfind("# ", 0) == 0) {
      finish();
      NBestList nb;
      nb.utterance_id = line.substr(2);
      if (nb.utterance_id.empty()) fail("empty utterance id");
      out.push_back(std::move(nb));
      continue;
    }
    if (out.empty()) fail("hypothesis before any utterance header");
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (int k = 0; k < 3; ++k) {
      const std::size_t tab = line.find('\t', start);
      if (tab == std::string::npos) fail("expected 4 tab-separated fields");
      fields.push_back(line.substr(start, tab - start));
      start = tab + 1;
    }
    fields.push_back(line.substr(start));
    NBestHypothesis h;
    try {
      std::size_t used = 0;
      h.am_score = std::stod(fields[0], &used);
      if (used != fields[0].size()) fail("bad am_score");
      h.lm_score = std::stod(fields[1], &used);
      if (used != fields[1].size()) fail("bad lm_score");
      const long wc = std::stol(fields[2], &used);
      if (used != fields[2].size() || wc < 0) fail("bad word_count");
      h.word_count = static_cast<std::size_t>(wc);
    } catch (const std::logic_error&) {
      fail("unparsable number");
    }
    if (!std::isfinite(h.am_score) || !std::isfinite(h.lm_score)) fail("non-finite score");
    h.words = split_words(fields[3]);
    if (h.words.size() != h.word_count) fail("word_count does not match the number of words");
    out.back().hypotheses.push_back(std::move(h));
  }
  finish();
  return out;
}

std::vector<NBestList> read_nbest(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open " + path.string());
  return read_nbest(is);
}

}  // namespace asrkit
