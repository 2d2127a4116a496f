#include "asrkit/corpus.hpp"

#include <cmath>
#include <fstream>
#include <map>

#include "asrkit/error.hpp"
#include "asrkit/text.hpp"
#include "json.hpp"

namespace asrkit {

using nlohmann::json;
namespace fs = std::filesystem;

WordSpan WordSpan::from_frames(int word_index, std::int64_t start_frame, std::int64_t end_frame,
                               int sample_rate) {
  std::int64_t hop = hop_samples(sample_rate);
  return WordSpan{word_index, start_frame, end_frame, start_frame * hop, end_frame * hop};
}

std::string Utterance::text() const { return join_words(transcript); }

std::int64_t Utterance::num_samples() const { return std::llround(duration * sample_rate); }

void validate_utterance(const Utterance& u) {
  auto fail = [&](const std::string& msg) { throw ValidationError("utterance '" + u.id + "': " + msg); };
  if (u.id.empty()) fail("empty id");
  if (u.sample_rate <= 0) fail("sample_rate must be positive");
  if (u.transcript.empty()) fail("empty transcript");
  for (const auto& w : u.transcript) {
    if (w.empty()) fail("empty word");
    if (has_whitespace(w)) fail("word contains whitespace: '" + w + "'");
  }
  if (!u.alignment) return;
  const auto& spans = *u.alignment;
  if (spans.size() != u.transcript.size()) fail("alignment has " + std::to_string(spans.size()) +
                                                " spans for " + std::to_string(u.transcript.size()) + " words");
  std::int64_t hop = hop_samples(u.sample_rate);
  std::int64_t n = u.num_samples();
  std::int64_t prev_end = 0;
  for (std::size_t i = 0; i < spans.size(); ++i) {
    const auto& s = spans[i];
    if (s.word_index != static_cast<int>(i)) fail("span word_index out of order");
    if (s.start_frame >= s.end_frame || s.start_sample >= s.end_sample) fail("empty span");
    if (s.start_sample != s.start_frame * hop || s.end_sample != s.end_frame * hop)
      fail("span sample bounds disagree with frame bounds");
    if (s.start_frame < prev_end) fail("overlapping spans");
    if (s.start_sample < 0 || s.end_sample > n) fail("span outside audio");
    prev_end = s.end_frame;
  }
}

void Corpus::add(Utterance u) {
  validate_utterance(u);
  if (!ids_.insert(u.id).second) throw ValidationError("duplicate utterance id '" + u.id + "'");
  dialects_.insert(u.dialect_id);
  speakers_.insert(u.speaker_id);
  utterances_.push_back(std::move(u));
}

const Utterance* Corpus::find(const std::string& id) const {
  for (const auto& u : utterances_)
    if (u.id == id) return &u;
  return nullptr;
}

fs::path Corpus::resolve_audio(const Utterance& u) const {
  fs::path p(u.audio_path);
  if (p.is_absolute() || base_dir_.empty()) return p;
  return base_dir_ / p;
}

void Corpus::set_alignment(std::size_t i, std::vector<WordSpan> spans) {
  Utterance u = utterances_.at(i);
  u.alignment = std::move(spans);
  validate_utterance(u);
  utterances_[i] = std::move(u);
}

Corpus Corpus::filter_dialect(const std::string& dialect_id) const {
  Corpus out(base_dir_);
  for (const auto& u : utterances_)
    if (u.dialect_id == dialect_id) out.add(u);
  return out;
}

Corpus concat(const Corpus& a, const Corpus& b) {
  Corpus out(a.base_dir());
  for (const auto& u : a.utterances()) out.add(u);
  for (const auto& u : b.utterances()) {
    Utterance v = u;
    if (a.base_dir() != b.base_dir()) {
      fs::path resolved = fs::absolute(b.resolve_audio(u));
      fs::path base = fs::absolute(a.base_dir());
      v.audio_path = a.base_dir().empty() ? resolved.generic_string()
                                          : resolved.lexically_relative(base).generic_string();
    }
    out.add(std::move(v));
  }
  return out;
}

namespace {

Utterance parse_record(const json& j) {
  auto req = [&](const char* key) -> const json& {
    if (!j.contains(key)) throw ParseError(std::string("missing field \"") + key + "\"");
    return j.at(key);
  };
  Utterance u;
  u.id = req("id").get<std::string>();
  u.speaker_id = req("speaker_id").get<std::string>();
  u.dialect_id = req("dialect_id").get<std::string>();
  u.transcript = split_words(req("text").get<std::string>());
  u.audio_path = req("audio").get<std::string>();
  u.sample_rate = j.value("sample_rate", kDefaultSampleRate);
  u.duration = req("duration").get<double>();
  if (j.contains("alignment") && !j.at("alignment").is_null()) {
    std::vector<WordSpan> spans;
    int k = 0;
    for (const auto& pair : j.at("alignment")) {
      if (!pair.is_array() || pair.size() != 2) throw ParseError("alignment entries must be [start_frame,end_frame]");
      spans.push_back(WordSpan::from_frames(k++, pair[0].get<std::int64_t>(), pair[1].get<std::int64_t>(),
                                            u.sample_rate));
    }
    u.alignment = std::move(spans);
  }
  return u;
}

json to_record(const Utterance& u) {
  json j;
  j["id"] = u.id;
  j["speaker_id"] = u.speaker_id;
  j["dialect_id"] = u.dialect_id;
  j["text"] = u.text();
  j["audio"] = u.audio_path;
  j["sample_rate"] = u.sample_rate;
  j["duration"] = u.duration;
  if (u.alignment) {
    json a = json::array();
    for (const auto& s : *u.alignment) a.push_back({s.start_frame, s.end_frame});
    j["alignment"] = std::move(a);
  }
  return j;
}

}  // namespace

Corpus read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open manifest " + path.string());
  Corpus corpus(path.parent_path());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Utterance u;
    try {
      u = parse_record(json::parse(line));
    } catch (const json::exception& e) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const ParseError& e) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    try {
      corpus.add(std::move(u));
    } catch (const ValidationError& e) {
      throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return corpus;
}

void write_manifest(const Corpus& corpus, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write manifest " + path.string());
  for (const auto& u : corpus.utterances()) out << to_record(u).dump() << '\n';
  if (!out) throw Error("write failed: " + path.string());
}

CorpusStats corpus_stats(const Corpus& c) {
  CorpusStats s;
  std::set<std::string> sentences;
  double seconds = 0.0;
  for (const auto& u : c.utterances()) {
    seconds += u.duration;
    sentences.insert(u.text());
  }
  s.hours = seconds / 3600.0;
  s.n_utterances = c.size();
  s.n_unique_sentences = sentences.size();
  s.n_speakers = c.speaker_inventory().size();
  s.n_dialects = c.dialect_inventory().size();
  return s;
}

}  // namespace asrkit
