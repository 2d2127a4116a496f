#include "asrkit/ada.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <unordered_map>

#include "asrkit/error.hpp"
#include "asrkit/rng.hpp"
#include "asrkit/wav.hpp"
#include "json.hpp"

namespace asrkit {

namespace fs = std::filesystem;
using nlohmann::json;

WordInventory build_inventory(const Corpus& corpus) {
  WordInventory inv;
  for (const auto& u : corpus.utterances()) {
    if (!u.alignment) throw ValidationError("build_inventory: utterance '" + u.id + "' has no alignment");
    const auto& spans = *u.alignment;
    auto& list = inv[u.speaker_id];
    for (std::size_t i = 0; i < spans.size(); ++i) {
      InventoryEntry e;
      e.word = u.transcript[i];
      e.utterance_id = u.id;
      e.word_index = static_cast<int>(i);
      e.span = spans[i];
      e.segment_begin = spans[i].start_sample;
      e.segment_end = i + 1 == spans.size() ? std::max(spans[i].end_sample, u.num_samples()) : spans[i].end_sample;
      list.push_back(std::move(e));
    }
  }
  return inv;
}

std::size_t replacement_count(double rate, std::size_t n_words) {
  if (rate <= 0.0 || n_words == 0) return 0;
  const auto k = static_cast<std::size_t>(std::max<long>(1, std::lround(rate * static_cast<double>(n_words))));
  return std::min(k, n_words);
}

AugmentationPlan plan(const Corpus& corpus, const WordInventory& inventory, double replace_rate, std::uint64_t seed) {
  if (!(replace_rate >= 0.0 && replace_rate <= 1.0)) throw ValidationError("plan: replace_rate must be in [0, 1]");
  AugmentationPlan p;
  p.replace_rate = replace_rate;
  p.seed = seed;
  Rng rng = Rng::derive(seed, "ada-plan");
  static const std::vector<InventoryEntry> kNone;
  for (const auto& u : corpus.utterances()) {
    UtterancePlan up;
    up.utterance_id = u.id;
    const std::size_t k = replacement_count(replace_rate, u.transcript.size());
    if (k > 0) {
      auto it = inventory.find(u.speaker_id);
      const auto& entries = it == inventory.end() ? kNone : it->second;
      std::vector<const InventoryEntry*> pool;
      for (const auto& e : entries)
        if (e.utterance_id != u.id) pool.push_back(&e);
      if (pool.empty()) {
        up.no_donor = true;
      } else {
        std::vector<int> idx(u.transcript.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
        for (std::size_t i = 0; i < k; ++i) {
          const std::size_t j = i + static_cast<std::size_t>(rng.uniform_int(idx.size() - i));
          std::swap(idx[i], idx[j]);
        }
        idx.resize(k);
        std::sort(idx.begin(), idx.end());
        for (int wi : idx) {
          const InventoryEntry& d = *pool[static_cast<std::size_t>(rng.uniform_int(pool.size()))];
          up.replacements.push_back({wi, d.utterance_id, d.word_index, d.word});
        }
      }
    }
    p.utterances.push_back(std::move(up));
  }
  return p;
}

void write_plan(const AugmentationPlan& p, std::ostream& os) {
  os << json{{"replace_rate", p.replace_rate}, {"seed", p.seed}}.dump() << '\n';
  for (const auto& u : p.utterances) {
    json reps = json::array();
    for (const auto& r : u.replacements)
      reps.push_back({{"word_index", r.word_index},
                      {"donor_utterance", r.donor_utterance},
                      {"donor_word_index", r.donor_word_index},
                      {"donor_word", r.donor_word}});
    os << json{{"utterance_id", u.utterance_id}, {"no_donor", u.no_donor}, {"replacements", reps}}.dump() << '\n';
  }
}

void write_plan(const AugmentationPlan& p, const fs::path& path) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write plan " + path.string());
  write_plan(p, os);
}

AugmentationPlan read_plan(std::istream& is) {
  AugmentationPlan p;
  std::string line;
  std::size_t lineno = 0;
  bool header = false;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      json j = json::parse(line);
      if (!header) {
        p.replace_rate = j.at("replace_rate").get<double>();
        p.seed = j.at("seed").get<std::uint64_t>();
        header = true;
        continue;
      }
      UtterancePlan u;
      u.utterance_id = j.at("utterance_id").get<std::string>();
      u.no_donor = j.value("no_donor", false);
      for (const auto& r : j.at("replacements"))
        u.replacements.push_back({r.at("word_index").get<int>(), r.at("donor_utterance").get<std::string>(),
                                  r.at("donor_word_index").get<int>(), r.at("donor_word").get<std::string>()});
      p.utterances.push_back(std::move(u));
    } catch (const json::exception& e) {
      throw ParseError("plan line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (!header) throw ParseError("plan: missing header line");
  return p;
}

AugmentationPlan read_plan(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open plan " + path.string());
  return read_plan(is);
}

namespace {

// A run of source samples placed in the output.
struct Piece {
  const std::vector<float>* src;
  std::int64_t begin, end;
};

float sample_at(const std::vector<float>& s, std::int64_t i) {
  return (i >= 0 && i < static_cast<std::int64_t>(s.size())) ? s[static_cast<std::size_t>(i)] : 0.0f;
}

}  // namespace

Corpus apply(const Corpus& corpus, const AugmentationPlan& p, const fs::path& out_dir) {
  fs::create_directories(out_dir / "wav");
  Corpus out(out_dir);
  std::unordered_map<std::string, std::vector<float>> audio_cache;
  auto audio_of = [&](const Utterance& u) -> const std::vector<float>& {
    auto it = audio_cache.find(u.id);
    if (it != audio_cache.end()) return it->second;
    fs::path path = corpus.resolve_audio(u);
    if (!fs::exists(path)) throw Error("apply: audio for utterance '" + u.id + "' is missing: " + path.string());
    Audio a = read_wav(path);
    return audio_cache.emplace(u.id, std::move(a.samples)).first->second;
  };

  for (const auto& up : p.utterances) {
    const Utterance* target = corpus.find(up.utterance_id);
    if (!target) throw ValidationError("apply: plan names unknown utterance '" + up.utterance_id + "'");
    if (!up.replacements.empty() && !target->alignment)
      throw ValidationError("apply: utterance '" + target->id + "' has no alignment");
    const std::vector<float>& own = audio_of(*target);
    const std::int64_t hop = hop_samples(target->sample_rate);

    std::map<int, const Replacement*> by_index;
    for (const auto& r : up.replacements) {
      if (r.donor_utterance == target->id) throw ValidationError("apply: donor equals target for " + target->id);
      if (r.word_index < 0 || static_cast<std::size_t>(r.word_index) >= target->transcript.size())
        throw ValidationError("apply: replacement index out of range for " + target->id);
      if (!by_index.emplace(r.word_index, &r).second)
        throw ValidationError("apply: duplicate replacement index for " + target->id);
    }

    Utterance nu = *target;
    nu.id = target->id + kAugmentedSuffix;
    nu.audio_path = "wav/" + nu.id + ".wav";
    std::vector<float> samples;

    if (by_index.empty()) {
      samples = own;
    } else {
      const auto& spans = *target->alignment;
      std::vector<Piece> pieces;
      std::vector<WordSpan> new_spans;
      std::int64_t cursor = 0, prev_end = 0;
      for (std::size_t i = 0; i < spans.size(); ++i) {
        if (spans[i].start_sample > prev_end) {
          pieces.push_back({&own, prev_end, spans[i].start_sample});
          cursor += spans[i].start_sample - prev_end;
        }
        Piece piece{&own, spans[i].start_sample, spans[i].end_sample};
        auto it = by_index.find(static_cast<int>(i));
        if (it != by_index.end()) {
          const Replacement& r = *it->second;
          const Utterance* donor = corpus.find(r.donor_utterance);
          if (!donor) throw Error("apply: donor utterance '" + r.donor_utterance + "' not in corpus");
          if (donor->speaker_id != target->speaker_id)
            throw ValidationError("apply: donor " + donor->id + " has a different speaker than " + target->id);
          if (!donor->alignment || r.donor_word_index < 0 ||
              static_cast<std::size_t>(r.donor_word_index) >= donor->alignment->size())
            throw Error("apply: donor segment missing for '" + r.donor_utterance + "'");
          const WordSpan& ds = (*donor->alignment)[static_cast<std::size_t>(r.donor_word_index)];
          const std::vector<float>& da = audio_of(*donor);
          if (ds.end_sample > static_cast<std::int64_t>(da.size()))
            throw Error("apply: donor audio shorter than its alignment for '" + donor->id + "'");
          piece = {&da, ds.start_sample, ds.end_sample};
          nu.transcript[i] = donor->transcript[static_cast<std::size_t>(r.donor_word_index)];
        }
        const std::int64_t len = piece.end - piece.begin;
        new_spans.push_back(WordSpan::from_frames(static_cast<int>(i), cursor / hop, (cursor + len) / hop,
                                                  target->sample_rate));
        pieces.push_back(piece);
        cursor += len;
        prev_end = spans[i].end_sample;
      }
      if (static_cast<std::int64_t>(own.size()) > prev_end) pieces.push_back({&own, prev_end, static_cast<std::int64_t>(own.size())});

      for (const auto& pc : pieces)
        for (std::int64_t s = pc.begin; s < pc.end; ++s) samples.push_back(sample_at(*pc.src, s));
      // crossfade at every junction between pieces that are not contiguous in one source
      const std::int64_t half = static_cast<std::int64_t>(target->sample_rate) * kCrossfadeMs / 1000 / 2;
      std::int64_t pos = 0;
      for (std::size_t k = 0; k + 1 < pieces.size(); ++k) {
        pos += pieces[k].end - pieces[k].begin;
        const Piece& a = pieces[k];
        const Piece& b = pieces[k + 1];
        if (a.src == b.src && a.end == b.begin) continue;
        for (std::int64_t o = -half; o < half; ++o) {
          const std::int64_t n = pos + o;
          if (n < 0 || n >= static_cast<std::int64_t>(samples.size())) continue;
          const float w = (static_cast<float>(o + half) + 0.5f) / static_cast<float>(2 * half);
          const float xa = sample_at(*a.src, a.end + o);
          const float xb = sample_at(*b.src, b.begin + o);
          samples[static_cast<std::size_t>(n)] = (1.0f - w) * xa + w * xb;
        }
      }
      nu.alignment = std::move(new_spans);
    }
    nu.duration = static_cast<double>(samples.size()) / target->sample_rate;
    write_wav(samples, target->sample_rate, out_dir / nu.audio_path);
    out.add(std::move(nu));
  }
  return out;
}

}  // namespace asrkit
