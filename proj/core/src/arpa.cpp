#include <cstdio>
#include <fstream>
#include <sstream>

#include "asrkit/error.hpp"
#include "asrkit/lm.hpp"
#include "asrkit/text.hpp"

namespace asrkit {

namespace {

std::string fmt7(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.7g", v);
  return buf;
}

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

void arpa_write(const NGramModel& model, std::ostream& os) {
  const auto& vocab = model.vocab();
  os << "\n\\data\\\n";
  for (int n = 1; n <= model.order(); ++n) os << "ngram " << n << "=" << model.num_ngrams(n) << "\n";
  for (int n = 1; n <= model.order(); ++n) {
    os << "\n\\" << n << "-grams:\n";
    for (const auto& key : model.sorted_keys(n)) {
      const NGramEntry& e = model.table(n).at(key);
      os << fmt7(e.log10_prob) << '\t';
      for (std::size_t i = 0; i < key.size(); ++i) os << (i ? " " : "") << vocab.word(key[i]);
      if (n < model.order()) os << '\t' << fmt7(e.log10_backoff);
      os << '\n';
    }
  }
  os << "\n\\end\\\n";
}

void arpa_write(const NGramModel& model, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  arpa_write(model, out);
  if (!out) throw Error("write failed: " + path.string());
}

NGramModel arpa_read(std::istream& is) {
  std::string line;
  std::size_t lineno = 0;
  auto fail = [&](const std::string& msg) -> ParseError {
    return ParseError("ARPA line " + std::to_string(lineno) + ": " + msg);
  };
  auto next = [&](std::string& out) {
    while (std::getline(is, line)) {
      ++lineno;
      out = trim(line);
      if (!out.empty()) return true;
    }
    return false;
  };

  std::string l;
  bool found = false;
  while (next(l))
    if (l == "\\data\\") {
      found = true;
      break;
    }
  if (!found) throw fail("missing \\data\\ header");

  std::vector<std::size_t> counts;
  bool have_line = next(l);
  while (have_line && l.rfind("ngram ", 0) == 0) {
    auto eq = l.find('=');
    if (eq == std::string::npos) throw fail("malformed ngram count line");
    int n = 0;
    std::size_t c = 0;
    try {
      n = std::stoi(l.substr(6, eq - 6));
      c = static_cast<std::size_t>(std::stoull(l.substr(eq + 1)));
    } catch (const std::exception&) {
      throw fail("malformed ngram count line");
    }
    if (n != static_cast<int>(counts.size()) + 1) throw fail("ngram counts out of order");
    counts.push_back(c);
    have_line = next(l);
  }
  if (counts.empty()) throw fail("no ngram counts");
  const int order = static_cast<int>(counts.size());

  struct Raw {
    std::vector<std::string> words;
    double prob, bow;
  };
  std::vector<std::vector<Raw>> sections(order);
  Vocabulary vocab;
  for (int n = 1; n <= order; ++n) {
    if (!have_line) throw fail("unexpected end of file");
    if (l != "\\" + std::to_string(n) + "-grams:") throw fail("expected \\" + std::to_string(n) + "-grams:");
    while ((have_line = next(l)) && l[0] != '\\') {
      std::istringstream ss(l);
      Raw r{{}, 0.0, 0.0};
      if (!(ss >> r.prob)) throw fail("bad probability");
      std::string w;
      for (int i = 0; i < n; ++i) {
        if (!(ss >> w)) throw fail("expected " + std::to_string(n) + " words");
        r.words.push_back(w);
      }
      if (ss >> r.bow) {
        if (n == order) throw fail("back-off weight on highest-order n-gram");
      } else {
        r.bow = 0.0;
      }
      if (ss >> w) throw fail("trailing fields");
      if (n == 1) vocab.add(r.words[0]);
      sections[n - 1].push_back(std::move(r));
    }
    if (sections[n - 1].size() != counts[n - 1])
      throw fail("header announces " + std::to_string(counts[n - 1]) + " " + std::to_string(n) + "-grams, found " +
                 std::to_string(sections[n - 1].size()));
  }
  if (!have_line || l != "\\end\\") throw fail("missing \\end\\");

  NGramModel model(order, vocab);
  for (int n = 1; n <= order; ++n) {
    auto& t = model.mutable_table(n);
    for (const auto& r : sections[n - 1]) {
      std::vector<int> key;
      for (const auto& w : r.words) {
        auto id = vocab.find(w);
        if (!id) throw ParseError("ARPA: word '" + w + "' missing from unigrams");
        key.push_back(*id);
      }
      if (!t.emplace(std::move(key), NGramEntry{r.prob, r.bow}).second)
        throw ParseError("ARPA: duplicate " + std::to_string(n) + "-gram");
    }
  }
  return model;
}

NGramModel arpa_read(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  return arpa_read(in);
}

}  // namespace asrkit
