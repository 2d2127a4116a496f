#include "asrkit/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numbers>
#include <set>

#include "asrkit/error.hpp"
#include "asrkit/rng.hpp"
#include "asrkit/text.hpp"
#include "asrkit/wav.hpp"

namespace asrkit {

namespace fs = std::filesystem;

namespace {

constexpr int kLeadFrames = 2;
constexpr int kGapFrames = 2;

std::vector<std::string> checked_charset(const std::string& charset) {
  auto chars = utf8_chars(charset);
  std::set<std::string> seen;
  std::vector<std::string> out;
  for (auto& c : chars) {
    if (has_whitespace(c)) continue;
    if (seen.insert(c).second) out.push_back(c);
  }
  if (out.size() < 2) throw ValidationError("synth_corpus: charset needs at least 2 distinct symbols");
  return out;
}

std::vector<std::string> make_lexicon(const std::vector<std::string>& chars, std::uint64_t seed, int size) {
  Rng rng = Rng::derive(seed, "lexicon");
  std::set<std::string> seen;
  std::vector<std::string> words;
  int attempts = 0;
  while (static_cast<int>(words.size()) < size && attempts < size * 200) {
    ++attempts;
    int len = 2 + static_cast<int>(rng.uniform_int(3));
    std::string w;
    for (int i = 0; i < len; ++i) w += chars[rng.uniform_int(chars.size())];
    if (seen.insert(w).second) words.push_back(w);
  }
  return words;
}

struct Formants {
  double freq[3];
  double amp[3];
};

// Fixed acoustic template for character index ci, modified by dialect.
Formants char_formants(int ci, int n_chars, int dialect, int n_dialects, double strength) {
  double base = 250.0 + 1700.0 * ci / std::max(1, n_chars - 1);
  Formants f{{base, 2.3 * base + 300.0, 400.0 + ((ci * 37) % 11) * 250.0}, {0.5, 0.3, 0.2}};
  double mid = (n_dialects - 1) / 2.0;
  double rel = n_dialects > 1 ? (dialect - mid) / std::max(mid, 1.0) : 0.0;
  double shift = 1.0 + strength * 0.06 * rel;
  double tilt = strength * 0.35 * rel;
  for (int k = 0; k < 3; ++k) f.freq[k] = std::min(f.freq[k] * shift, 7600.0);
  f.amp[1] *= 1.0 + tilt;
  f.amp[2] *= 1.0 - tilt;
  return f;
}

}  // namespace

std::vector<float> synth_audio(const SynthOptions& opts, const std::vector<std::string>& words, int dialect_index,
                               double speaker_gain, double speaker_pitch, std::uint64_t utt_seed,
                               std::vector<WordSpan>* spans) {
  const auto chars = checked_charset(opts.charset);
  std::map<std::string, int> index;
  for (std::size_t i = 0; i < chars.size(); ++i) index[chars[i]] = static_cast<int>(i);
  const int sr = kDefaultSampleRate;
  const std::int64_t hop = hop_samples(sr);
  const std::int64_t overhang = window_samples(sr) - hop;
  Rng rng(utt_seed);

  // Lay out frames first so spans are exact.
  struct Segment {
    int char_index;  // -1 for silence
    std::int64_t frames;
  };
  std::vector<Segment> segs;
  std::vector<std::int64_t> word_start;
  std::int64_t frame = 0;
  segs.push_back({-1, kLeadFrames});
  frame += kLeadFrames;
  for (const auto& w : words) {
    word_start.push_back(frame);
    for (const auto& c : utf8_chars(w)) {
      auto it = index.find(c);
      if (it == index.end()) throw ValidationError("synth_audio: character '" + c + "' not in charset");
      std::int64_t len = 3 + it->second % 3 + static_cast<std::int64_t>(rng.uniform_int(2));
      segs.push_back({it->second, len});
      frame += len;
    }
    segs.push_back({-1, kGapFrames});
    frame += kGapFrames;
  }
  const std::int64_t total_frames = frame;
  if (spans) {
    spans->clear();
    for (std::size_t k = 0; k < word_start.size(); ++k) {
      std::int64_t s = k == 0 ? 0 : word_start[k];
      std::int64_t e = k + 1 < word_start.size() ? word_start[k + 1] : total_frames;
      spans->push_back(WordSpan::from_frames(static_cast<int>(k), s, e, sr));
    }
  }

  std::vector<float> audio(static_cast<std::size_t>(total_frames * hop + overhang), 0.0f);
  std::int64_t pos = 0;
  const std::int64_t ramp = sr / 500;  // 2 ms
  for (const auto& seg : segs) {
    std::int64_t n = seg.frames * hop;
    if (seg.char_index >= 0) {
      Formants f = char_formants(seg.char_index, static_cast<int>(chars.size()), dialect_index, opts.n_dialects,
                                 opts.dialect_strength);
      double phase[3];
      for (double& p : phase) p = rng.uniform(0.0, 2.0 * std::numbers::pi);
      for (std::int64_t i = 0; i < n; ++i) {
        double env = std::min({1.0, static_cast<double>(i) / ramp, static_cast<double>(n - 1 - i) / ramp});
        double v = 0.0;
        for (int k = 0; k < 3; ++k)
          v += f.amp[k] * std::sin(phase[k] + 2.0 * std::numbers::pi * f.freq[k] * speaker_pitch * i / sr);
        audio[pos + i] += static_cast<float>(0.5 * speaker_gain * env * v);
      }
    }
    pos += n;
  }
  for (auto& x : audio) x = std::clamp(x + static_cast<float>(rng.normal(0.0, opts.noise_stddev)), -1.0f, 0.99996f);
  return audio;
}

Corpus synth_corpus(const SynthOptions& opts, const fs::path& out_dir) {
  if (opts.n_speakers < 1 || opts.n_dialects < 1 || opts.n_unique_sentences < 1 || opts.repetitions_per_sentence < 1)
    throw ValidationError("synth_corpus: all counts must be >= 1");
  if (opts.min_words < 1 || opts.max_words < opts.min_words)
    throw ValidationError("synth_corpus: bad sentence length range");
  const auto chars = checked_charset(opts.charset);
  const auto lexicon = make_lexicon(chars, opts.lexicon_seed.value_or(opts.seed), opts.lexicon_size);
  if (lexicon.empty()) throw ValidationError("synth_corpus: empty lexicon");

  Rng sent_rng = Rng::derive(opts.seed, "sentences");
  std::set<std::string> seen;
  std::vector<std::vector<std::string>> sentences;
  int attempts = 0;
  while (static_cast<int>(sentences.size()) < opts.n_unique_sentences) {
    if (++attempts > opts.n_unique_sentences * 1000)
      throw ValidationError("synth_corpus: cannot draw enough distinct sentences from the lexicon");
    int n = opts.min_words + static_cast<int>(sent_rng.uniform_int(opts.max_words - opts.min_words + 1));
    std::vector<std::string> s;
    for (int i = 0; i < n; ++i) s.push_back(lexicon[sent_rng.uniform_int(lexicon.size())]);
    if (seen.insert(join_words(s)).second) sentences.push_back(std::move(s));
  }

  Rng spk_rng = Rng::derive(opts.seed, "speakers");
  std::vector<double> gain(opts.n_speakers), pitch(opts.n_speakers);
  for (int s = 0; s < opts.n_speakers; ++s) {
    gain[s] = spk_rng.uniform(0.5, 1.0);
    pitch[s] = spk_rng.uniform(0.98, 1.02);
  }
  std::vector<std::vector<int>> speakers_of(opts.n_dialects);
  for (int s = 0; s < opts.n_speakers; ++s) speakers_of[s % opts.n_dialects].push_back(s);

  Corpus corpus(out_dir);
  const int reps = opts.repetitions_per_sentence;
  char buf[64];
  for (int si = 0; si < opts.n_unique_sentences; ++si) {
    for (int r = 0; r < reps; ++r) {
      const int i = si * reps + r;
      const int d = i % opts.n_dialects;
      const auto& pool = speakers_of[d];
      const int spk = pool.empty() ? i % opts.n_speakers
                                   : pool[static_cast<std::size_t>((i / opts.n_dialects) % pool.size())];
      Utterance u;
      std::snprintf(buf, sizeof(buf), "utt%06d", i);
      u.id = opts.id_prefix + buf;
      std::snprintf(buf, sizeof(buf), "spk%03d", spk);
      u.speaker_id = opts.id_prefix + buf;
      u.dialect_id = "d" + std::to_string(d + 1);
      u.transcript = sentences[si];
      u.sample_rate = kDefaultSampleRate;
      std::vector<WordSpan> spans;
      auto audio = synth_audio(opts, u.transcript, d, gain[spk], pitch[spk],
                               Rng::derive(opts.seed, "utt" + std::to_string(i)).next_u64(), &spans);
      u.audio_path = "wav/" + u.id + ".wav";
      u.duration = static_cast<double>(audio.size()) / u.sample_rate;
      u.alignment = std::move(spans);
      write_wav(audio, u.sample_rate, out_dir / u.audio_path);
      corpus.add(std::move(u));
    }
  }
  return corpus;
}

}  // namespace asrkit
