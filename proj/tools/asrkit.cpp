// asrkit: command-line front end for corpus synthesis, training, decoding,
// LM building, augmentation and system fusion.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "asrkit/ada.hpp"
#include "asrkit/checkpoint.hpp"
#include "asrkit/corpus.hpp"
#include "asrkit/ctc.hpp"
#include "asrkit/error.hpp"
#include "asrkit/experiments.hpp"
#include "asrkit/fusion.hpp"
#include "asrkit/lm.hpp"
#include "asrkit/model.hpp"
#include "asrkit/prefix.hpp"
#include "asrkit/score.hpp"
#include "asrkit/train.hpp"
#include "json.hpp"
#include "run_record.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace asrkit;
using asrkit::cli::RunRecord;

namespace {

struct Globals {
  std::optional<std::uint64_t> seed;
  unsigned jobs = 1;
  bool quiet = false;

  std::uint64_t seed_or(std::uint64_t fallback) const { return seed.value_or(fallback); }
};

Globals g;
std::string g_command;

void log(const std::string& msg) {
  if (!g.quiet) std::cerr << "asrkit " << g_command << ": " << msg << '\n';
}

std::string fmt(double v, int digits = 4) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(digits);
  os << v;
  return os.str();
}

void write_text_file(const std::string& text, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write " + path.string());
  os << text;
  if (!os) throw Error("write failed: " + path.string());
}

fs::path record_path_for(const fs::path& out) {
  if (fs::is_directory(out)) return out / "run.json";
  return fs::path(out.string() + ".run.json");
}

// Writes a manifest whose relative audio paths resolve from its own directory.
void write_manifest_at(const Corpus& c, const fs::path& path) {
  const fs::path dir = fs::absolute(path).parent_path();
  Corpus out(dir);
  for (Utterance u : c.utterances()) {
    const fs::path audio = fs::absolute(c.resolve_audio(u)).lexically_normal();
    u.audio_path = audio.lexically_relative(dir).generic_string();
    out.add(std::move(u));
  }
  write_manifest(out, path);
}

std::vector<Sentence> corpus_transcripts(const Corpus& c) {
  std::vector<Sentence> out;
  for (const auto& u : c.utterances()) out.push_back(u.transcript);
  return out;
}

// Manifests (.jsonl) contribute their transcripts; anything else is plain text.
std::vector<Sentence> read_sentences(const fs::path& p) {
  if (p.extension() == ".jsonl") return corpus_transcripts(read_manifest(p));
  return read_text(p);
}

// Reference transcripts from a manifest or a "utt_id<TAB>words" file.
std::vector<Transcript> read_references(const fs::path& p) {
  if (p.extension() != ".jsonl") return read_transcripts(p);
  const Corpus c = read_manifest(p);
  std::vector<Transcript> out;
  for (const auto& u : c.utterances()) out.emplace_back(u.id, u.transcript);
  return out;
}

References to_map(const std::vector<Transcript>& t) { return References(t.begin(), t.end()); }

std::vector<Example> feature_examples(const Corpus& c) {
  std::vector<Example> out;
  out.reserve(c.size());
  for (const auto& u : c.utterances()) {
    Example e;
    e.id = u.id;
    e.dialect_id = u.dialect_id;
    e.features = utterance_features(c, u);
    e.words = u.transcript;
    out.push_back(std::move(e));
  }
  return out;
}

std::optional<NGramModel> load_lm(const std::string& spec, RunRecord& rec) {
  if (spec.empty() || spec == "none") return std::nullopt;
  rec.input(spec);
  return arpa_read(fs::path(spec));
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string out;
  int speakers = 4, dialects = 2, sentences = 10, repetitions = 3;
  std::optional<std::uint64_t> lexicon_seed;
  int lexicon_size = 40, min_words = 3, max_words = 6;
  double dialect_strength = 1.0, noise = 0.01;
  std::string id_prefix;
};

void cmd_synth(const SynthArgs& a, RunRecord& rec) {
  SynthOptions so;
  so.seed = g.seed_or(0);
  so.n_speakers = a.speakers;
  so.n_dialects = a.dialects;
  so.n_unique_sentences = a.sentences;
  so.repetitions_per_sentence = a.repetitions;
  so.lexicon_seed = a.lexicon_seed;
  so.lexicon_size = a.lexicon_size;
  so.min_words = a.min_words;
  so.max_words = a.max_words;
  so.dialect_strength = a.dialect_strength;
  so.noise_stddev = a.noise;
  so.id_prefix = a.id_prefix;
  rec.output(a.out);
  Corpus c = synth_corpus(so, a.out);
  write_manifest(c, fs::path(a.out) / "manifest.jsonl");
  log("wrote " + std::to_string(c.size()) + " utterances to " + a.out);
  rec.param("speakers", a.speakers);
  rec.param("dialects", a.dialects);
  rec.param("sentences", a.sentences);
  rec.param("repetitions", a.repetitions);
  rec.commit(fs::path(a.out) / "run.json");
}

struct StatsArgs {
  std::string manifest, out;
};

void cmd_stats(const StatsArgs& a, RunRecord& rec) {
  rec.input(a.manifest);
  CorpusStats s = corpus_stats(read_manifest(a.manifest));
  json j{{"hours", s.hours},
         {"speakers", s.n_speakers},
         {"utterances", s.n_utterances},
         {"unique_sentences", s.n_unique_sentences},
         {"dialects", s.n_dialects}};
  const std::string text = j.dump(2) + "\n";
  std::cout << text;
  if (!a.out.empty()) {
    rec.output(a.out);
    write_text_file(text, a.out);
    rec.commit(record_path_for(a.out));
  }
}

struct TrainArgs {
  std::string train, dev, out;
  int epochs = 12;
  double lr = 2e-3;
  std::size_t batch = 8;
  int warmup_updates = 10;
  bool no_specaug = false;
  double time_mask = 0.05, channel_mask = 0.1;
  int channel_mask_len = 4;
  int d_model = 64, layers = 2, heads = 4, ffn = 256;
  double dropout = 0.1, layerdrop = 0.1;
};

void cmd_train(const TrainArgs& a, RunRecord& rec) {
  rec.input(a.train);
  Corpus train_c = read_manifest(a.train);
  Corpus dev_c;
  if (!a.dev.empty()) {
    rec.input(a.dev);
    dev_c = read_manifest(a.dev);
  }
  std::vector<Sentence> all = corpus_transcripts(train_c);
  for (const auto& s : corpus_transcripts(dev_c)) all.push_back(s);
  CharVocab vocab = CharVocab::from_transcripts(all);

  ModelConfig mc;
  mc.feature_dim = kDefaultMels;
  mc.d_model = a.d_model;
  mc.n_layers = a.layers;
  mc.n_heads = a.heads;
  mc.ffn_dim = a.ffn;
  mc.dropout_p = a.dropout;
  mc.layerdrop_p = a.layerdrop;
  mc.vocab_size = static_cast<int>(vocab.size());
  mc.seed = g.seed_or(0);
  TrainConfig tc;
  tc.learning_rate = a.lr;
  tc.batch_size = a.batch;
  tc.epochs = a.epochs;
  tc.warmup_classifier_updates = a.warmup_updates;
  tc.use_spec_augment = !a.no_specaug;
  tc.spec_augment = {a.time_mask, a.channel_mask, a.channel_mask_len};
  tc.seed = g.seed_or(0);

  std::vector<Example> train_x = prepare_examples(train_c, vocab);
  std::vector<Example> dev_x = dev_c.empty() ? std::vector<Example>{} : prepare_examples(dev_c, vocab);
  log(std::to_string(train_x.size()) + " training / " + std::to_string(dev_x.size()) + " dev utterances, " +
      std::to_string(vocab.size()) + " symbols");
  rec.output(a.out);
  TrainResult tr = train(train_x, dev_x, vocab, tc, mc, nullptr, [&](const EpochStats& st) {
    std::string line = "epoch " + std::to_string(st.epoch) + " loss " + fmt(st.train_loss);
    if (!dev_x.empty()) line += " dev WER " + fmt(st.dev_wer);
    log(line);
  });
  save_checkpoint(Checkpoint{mc, vocab, tr.params, {}, 0}, a.out);
  rec.param("epochs", a.epochs);
  rec.param("learning_rate", a.lr);
  rec.param("model", json::parse(mc.to_json()));
  rec.commit(record_path_for(a.out));
}

struct PrefixTrainArgs {
  std::string checkpoint, train, out;
  std::vector<std::string> dialects;
  std::size_t length = 4;
  int epochs = 2;
  double lr = 0.01, weight_decay = 0.001, init_stddev = 0.02;
  std::size_t batch = 8;
};

void cmd_prefix_train(const PrefixTrainArgs& a, RunRecord& rec) {
  rec.input(a.checkpoint);
  rec.input(a.train);
  Checkpoint ck = load_checkpoint(a.checkpoint);
  if (!ck.prefixes.empty() && ck.prefix_length != a.length)
    throw ValidationError("checkpoint already holds prefixes of length " + std::to_string(ck.prefix_length));
  Corpus c = read_manifest(a.train);
  std::vector<std::string> dialects = a.dialects;
  if (dialects.empty()) dialects.assign(c.dialect_inventory().begin(), c.dialect_inventory().end());
  PrefixTrainConfig pc;
  pc.learning_rate = a.lr;
  pc.weight_decay = a.weight_decay;
  pc.batch_size = a.batch;
  pc.epochs = a.epochs;
  pc.init_stddev = a.init_stddev;
  pc.seed = g.seed_or(0);
  std::vector<Example> x = prepare_examples(c, ck.vocab);
  std::vector<std::string> warnings;
  rec.output(a.out);
  PrefixBank bank =
      train_prefixes(ck.params, ck.config, x, dialects, PrefixConfig::for_model(ck.config, a.length), pc, &warnings);
  for (const auto& w : warnings) log("warning: " + w);
  for (auto& [d, p] : bank) {
    std::vector<Example> sub;
    for (const auto& e : x)
      if (e.dialect_id == d) sub.push_back(e);
    log("dialect " + d + ": loss " + fmt(mean_ctc_loss(ck.params, ck.config, sub)) + " -> " +
        fmt(mean_ctc_loss(ck.params, ck.config, sub, &p)));
    ck.prefixes[d] = std::move(p);
  }
  ck.prefix_length = a.length;
  save_checkpoint(ck, a.out);
  rec.param("prefix_length", a.length);
  rec.param("dialects", dialects);
  rec.param("epochs", a.epochs);
  rec.commit(record_path_for(a.out));
}

struct DecodeArgs {
  std::string checkpoint, manifest, out, nbest_out;
  std::size_t beam = 0;
  std::string lm = "none";
  double alpha = 0.5, beta = 0.0;
  std::size_t nbest = 0;
  std::string dialect;
  bool allow_fallback = false;
};

// Shared by decode (1-best transcripts, optional N-best) and nbest-dump.
void run_decode(const DecodeArgs& a, RunRecord& rec, bool nbest_only) {
  rec.input(a.checkpoint);
  rec.input(a.manifest);
  Checkpoint ck = load_checkpoint(a.checkpoint);
  std::optional<NGramModel> lm = load_lm(a.lm, rec);
  Corpus c = read_manifest(a.manifest);
  std::vector<Example> x = feature_examples(c);

  DecodeOptions opts;
  opts.beam = a.beam > 0;
  opts.beam_options.beam_width = a.beam;
  opts.beam_options.alpha = a.alpha;
  opts.beam_options.beta = a.beta;
  opts.beam_options.nbest = a.nbest;
  opts.lm = lm ? &*lm : nullptr;
  opts.allow_dialect_fallback = a.allow_fallback;
  if (!opts.beam && lm) throw ValidationError("--lm needs beam search (--beam N with N >= 1)");

  const PrefixBank* bank = nullptr;
  if (!a.dialect.empty()) {
    if (ck.prefixes.empty() && !a.allow_fallback) throw ValidationError("checkpoint has no dialect prefixes");
    bank = &ck.prefixes;
    if (a.dialect != "auto")
      for (auto& e : x) e.dialect_id = a.dialect;
  }
  log("decoding " + std::to_string(x.size()) + " utterances, " +
      (opts.beam ? "beam " + std::to_string(a.beam) : std::string("greedy")) + (lm ? " with LM" : "") +
      (bank ? ", dialect " + a.dialect : ""));
  std::vector<NBestList> lists = decode_examples(ck.params, ck.config, ck.vocab, x, bank, opts, g.jobs);
  std::size_t fallbacks = 0;
  for (const auto& l : lists) fallbacks += l.has_flag(kDialectFallbackFlag) ? 1 : 0;
  if (fallbacks) log(std::to_string(fallbacks) + " utterances fell back to the backbone");

  const std::string nbest_path = nbest_only ? a.out : a.nbest_out;
  if (!nbest_path.empty()) {
    rec.output(nbest_path);
    write_nbest(lists, fs::path(nbest_path));
  }
  if (!nbest_only) {
    std::vector<Transcript> hyps;
    for (const auto& l : lists) hyps.emplace_back(l.utterance_id, l.hypotheses.empty() ? Sentence{} : l.hypotheses.front().words);
    rec.output(a.out);
    write_transcripts(hyps, fs::path(a.out));
  }
  rec.param("beam", a.beam);
  rec.param("alpha", a.alpha);
  rec.param("beta", a.beta);
  rec.param("dialect", a.dialect);
  rec.commit(record_path_for(a.out));
}

struct AlignArgs {
  std::string checkpoint, manifest, out;
};

void cmd_ada_align(const AlignArgs& a, RunRecord& rec) {
  rec.input(a.checkpoint);
  rec.input(a.manifest);
  Checkpoint ck = load_checkpoint(a.checkpoint);
  Corpus c = read_manifest(a.manifest);
  double total = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    const Utterance& u = c[i];
    LogProbMatrix lp = infer(ck.params, ck.config, utterance_features(c, u));
    AlignmentResult al;
    try {
      al = force_align(lp, ck.vocab, u.transcript, u.sample_rate);
    } catch (const NoPathError& e) {
      throw NoPathError("utterance " + u.id + ": " + e.what());
    }
    total += al.log_prob;
    c.set_alignment(i, al.words);
  }
  log("aligned " + std::to_string(c.size()) + " utterances, mean path log prob " +
      fmt(c.empty() ? 0.0 : total / static_cast<double>(c.size())));
  rec.output(a.out);
  write_manifest_at(c, a.out);
  rec.commit(record_path_for(a.out));
}

struct AugmentArgs {
  std::string manifest, out;
  double rate = 0.2;
};

void cmd_ada_augment(const AugmentArgs& a, RunRecord& rec) {
  rec.input(a.manifest);
  Corpus c = read_manifest(a.manifest);
  const fs::path out = a.out;
  rec.output(out);
  fs::create_directories(out);
  AugmentationPlan p = plan(c, build_inventory(c), a.rate, g.seed_or(0));
  std::size_t replaced = 0, flagged = 0;
  for (const auto& u : p.utterances) {
    replaced += u.replacements.size();
    flagged += u.no_donor ? 1 : 0;
  }
  if (flagged) log(std::to_string(flagged) + " utterances have no same-speaker donor and stay unmodified");
  write_plan(p, out / "plan.jsonl");
  Corpus aug = apply(c, p, out);
  write_manifest(aug, out / "manifest.jsonl");
  write_manifest_at(concat(c, aug), out / "combined.jsonl");
  log(std::to_string(aug.size()) + " augmented utterances, " + std::to_string(replaced) + " words replaced");
  rec.param("rate", a.rate);
  rec.commit(out / "run.json");
}

struct LmTrainArgs {
  std::vector<std::string> text;
  std::string out;
  int order = 4;
  std::vector<int> min_count;
};

void cmd_lm_train(const LmTrainArgs& a, RunRecord& rec) {
  std::vector<Sentence> sentences;
  for (const auto& t : a.text) {
    rec.input(t);
    for (auto& s : read_sentences(t)) sentences.push_back(std::move(s));
  }
  KnOptions ko;
  ko.order = a.order;
  ko.min_count = a.min_count;
  NGramModel m = train_kn(sentences, ko);
  for (const auto& w : m.warnings()) log("warning: " + w);
  std::string counts;
  for (int n = 1; n <= m.order(); ++n) counts += (n > 1 ? "/" : "") + std::to_string(m.num_ngrams(n));
  log(std::to_string(sentences.size()) + " sentences, " + std::to_string(m.vocab().size()) + " words, n-grams " + counts);
  rec.output(a.out);
  arpa_write(m, fs::path(a.out));
  rec.param("order", a.order);
  rec.param("min_count", a.min_count);
  rec.commit(record_path_for(a.out));
}

struct LmPplArgs {
  std::string lm, text, out;
};

void cmd_lm_ppl(const LmPplArgs& a, RunRecord& rec) {
  rec.input(a.lm);
  rec.input(a.text);
  NGramModel m = arpa_read(fs::path(a.lm));
  std::vector<Sentence> s = read_sentences(a.text);
  PerplexityResult r = perplexity(m, s);
  json j{{"ppl", r.ppl},
         {"ppl_excluding_oov", r.ppl_excluding_oov},
         {"oov_rate", oov_rate(m.vocab(), s)},
         {"tokens", r.token_count},
         {"oov_tokens", r.oov_count},
         {"sentences", r.sentence_count}};
  const std::string text = j.dump(2) + "\n";
  std::cout << text;
  if (!a.out.empty()) {
    rec.output(a.out);
    write_text_file(text, a.out);
    rec.commit(record_path_for(a.out));
  }
}

struct LmInterpArgs {
  std::vector<std::string> lms;
  std::string dev, out;
};

void cmd_lm_interpolate(const LmInterpArgs& a, RunRecord& rec) {
  std::vector<NGramModel> models;
  for (const auto& p : a.lms) {
    rec.input(p);
    models.push_back(arpa_read(fs::path(p)));
  }
  rec.input(a.dev);
  std::vector<const NGramModel*> ptrs;
  for (const auto& m : models) ptrs.push_back(&m);
  InterpolationResult r = interpolate(ptrs, read_sentences(a.dev));
  json weights = json::array();
  for (std::size_t i = 0; i < a.lms.size(); ++i) {
    weights.push_back({{"lm", a.lms[i]}, {"weight", r.weights.weights[i]}});
    log(a.lms[i] + " weight " + fmt(r.weights.weights[i]));
  }
  log("EM iterations " + std::to_string(r.log_likelihood_trace.size() - 1) + ", dev tokens " +
      std::to_string(r.dev_tokens));
  rec.output(a.out);
  arpa_write(r.merged, fs::path(a.out));
  rec.param("weights", weights);
  rec.commit(record_path_for(a.out));
}

struct LmSampleArgs {
  std::string lm, out;
  std::size_t n = 100, max_len = 30;
};

void cmd_lm_sample(const LmSampleArgs& a, RunRecord& rec) {
  rec.input(a.lm);
  NGramModel m = arpa_read(fs::path(a.lm));
  std::vector<Sentence> s = sample_sentences(m, a.n, a.max_len, g.seed_or(0));
  rec.output(a.out);
  write_text(s, a.out);
  rec.param("n", a.n);
  rec.param("max_len", a.max_len);
  rec.commit(record_path_for(a.out));
}

struct FuseOptArgs {
  std::vector<std::string> nbest;
  std::string refs, out;
};

SystemNBests load_systems(const std::vector<std::string>& paths, RunRecord& rec) {
  std::vector<std::vector<NBestList>> raw;
  for (const auto& p : paths) {
    rec.input(p);
    raw.push_back(read_nbest(fs::path(p)));
  }
  return align_systems(raw);
}

void cmd_fuse_optimize(const FuseOptArgs& a, RunRecord& rec) {
  SystemNBests dev = load_systems(a.nbest, rec);
  rec.input(a.refs);
  const References refs = to_map(read_references(a.refs));
  std::vector<SystemWeights> weights;
  json systems = json::array();
  for (std::size_t s = 0; s < dev.size(); ++s) {
    SystemOptimization o = optimize_system_weights(dev[s], refs);
    weights.push_back(o.weights);
    log(a.nbest[s] + ": w_lm " + fmt(o.weights.lm_weight) + " w_len " + fmt(o.weights.length_weight) + " dev WER " +
        fmt(o.dev_wer));
    systems.push_back({{"nbest", a.nbest[s]},
                       {"lm_weight", o.weights.lm_weight},
                       {"length_weight", o.weights.length_weight},
                       {"posterior_scale", o.weights.posterior_scale},
                       {"dev_wer", o.dev_wer}});
  }
  CombinationOptimization c = optimize_combination_weights(dev, refs, weights);
  json j{{"systems", systems}, {"combination", c.weights}, {"objective", c.objective}};
  rec.output(a.out);
  write_text_file(j.dump(2) + "\n", a.out);
  rec.commit(record_path_for(a.out));
}

struct FuseArgs {
  std::vector<std::string> nbest;
  std::string weights, out;
};

void cmd_fuse(const FuseArgs& a, RunRecord& rec) {
  SystemNBests sys = load_systems(a.nbest, rec);
  rec.input(a.weights);
  std::ifstream is(a.weights);
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    throw ParseError(a.weights + ": " + e.what());
  }
  if (j.at("systems").size() != sys.size())
    throw ValidationError("weights file describes " + std::to_string(j.at("systems").size()) + " systems, got " +
                          std::to_string(sys.size()) + " N-best files");
  std::vector<SystemWeights> w;
  for (const auto& s : j.at("systems"))
    w.push_back({s.at("lm_weight").get<double>(), s.at("length_weight").get<double>(),
                 s.at("posterior_scale").get<double>()});
  const auto combination = j.at("combination").get<std::vector<double>>();
  std::vector<Transcript> out;
  for (auto& [id, words] : fuse(sys, combination, w)) out.emplace_back(id, words);
  rec.output(a.out);
  write_transcripts(out, fs::path(a.out));
  log("fused " + std::to_string(sys.size()) + " systems over " + std::to_string(out.size()) + " utterances");
  rec.commit(record_path_for(a.out));
}

struct ScoreArgs {
  std::string refs, out, experiment = "score";
  std::vector<std::string> hyps, conditions;
};

void cmd_score(const ScoreArgs& a, RunRecord& rec) {
  if (!a.conditions.empty() && a.conditions.size() != a.hyps.size())
    throw ValidationError("--condition must be given once per --hyp");
  rec.input(a.refs);
  const std::vector<Transcript> refs = read_references(a.refs);
  ExperimentResult res;
  res.experiment = a.experiment;
  res.seed = g.seed_or(0);
  for (std::size_t i = 0; i < a.hyps.size(); ++i) {
    rec.input(a.hyps[i]);
    References hyp = to_map(read_transcripts(fs::path(a.hyps[i])));
    std::vector<Sentence> r, h;
    std::size_t missing = 0;
    for (const auto& [id, words] : refs) {
      r.push_back(words);
      auto it = hyp.find(id);
      if (it == hyp.end()) {
        ++missing;
        h.emplace_back();
      } else {
        h.push_back(it->second);
        hyp.erase(it);
      }
    }
    if (!hyp.empty()) throw ValidationError(a.hyps[i] + ": hypothesis '" + hyp.begin()->first + "' has no reference");
    if (missing) log("warning: " + a.hyps[i] + " lacks " + std::to_string(missing) + " utterances, scored as empty");
    const std::string cond = a.conditions.empty() ? fs::path(a.hyps[i]).stem().string() : a.conditions[i];
    res.rows.push_back({cond, wer(r, h), cer(r, h)});
    log(cond + " WER " + fmt(res.rows.back().wer) + " CER " + fmt(res.rows.back().cer));
  }
  rec.output(a.out);
  write_text_file(res.to_json(), a.out);
  rec.commit(record_path_for(a.out));
}

struct Fig4Args {
  std::string work, out;
  Fig4Config cfg;
};

struct Table4Args {
  std::string work, out;
  Table4Config cfg = default_table4_config();
};

void finish_experiment(const ExperimentResult& res, const std::string& out, RunRecord& rec) {
  write_text_file(res.to_json(), out);
  rec.commit(record_path_for(out));
}

void cmd_fig4(Fig4Args a, RunRecord& rec) {
  a.cfg.seed = g.seed_or(a.cfg.seed);
  rec.output(a.work);
  rec.output(a.out);
  ExperimentResult res = run_fig4(a.cfg, a.work, log);
  const double normal = res.row("normal").wer, ada = res.row("ada").wer;
  if (normal > 0) log("relative WER change with ADA " + fmt(100.0 * (ada - normal) / normal, 1) + "%");
  rec.param("epochs", a.cfg.train.epochs);
  rec.param("replace_rate", a.cfg.replace_rate);
  finish_experiment(res, a.out, rec);
}

void cmd_table4(Table4Args a, RunRecord& rec) {
  a.cfg.seed = g.seed_or(a.cfg.seed);
  rec.output(a.work);
  rec.output(a.out);
  ExperimentResult res = run_table4(a.cfg, a.work, log);
  rec.param("epochs", a.cfg.train.epochs);
  rec.param("prefix_epochs", a.cfg.prefix_train.epochs);
  rec.param("beam", {{"width", a.cfg.beam.beam_width}, {"alpha", a.cfg.beam.alpha}, {"beta", a.cfg.beam.beta}});
  finish_experiment(res, a.out, rec);
}

CLI::Option* path_in(CLI::App* app, const std::string& name, std::string& target, const std::string& desc) {
  return app->add_option(name, target, desc)->required()->check(CLI::ExistingPath);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"asrkit: low-resource speech recognition toolkit"};
  app.set_config("--config", "", "TOML/INI file with option defaults; command-line flags win");
  app.add_option("--seed", g.seed, "Seed for every random stream of this run");
  app.add_option("--jobs", g.jobs, "Parallel workers for per-utterance work")->check(CLI::PositiveNumber);
  app.add_flag("--quiet", g.quiet, "Suppress log lines on stderr");
  app.require_subcommand(1);

  std::function<void(RunRecord&)> action;

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate a synthetic read-speech corpus");
  s->add_option("--out", synth.out, "Output directory (wav/ and manifest.jsonl)")->required();
  s->add_option("--speakers", synth.speakers)->capture_default_str();
  s->add_option("--dialects", synth.dialects)->capture_default_str();
  s->add_option("--sentences", synth.sentences, "Unique sentences")->capture_default_str();
  s->add_option("--repetitions", synth.repetitions, "Recordings per sentence")->capture_default_str();
  s->add_option("--lexicon-seed", synth.lexicon_seed, "Word-list seed (defaults to --seed)");
  s->add_option("--lexicon-size", synth.lexicon_size)->capture_default_str();
  s->add_option("--min-words", synth.min_words)->capture_default_str();
  s->add_option("--max-words", synth.max_words)->capture_default_str();
  s->add_option("--dialect-strength", synth.dialect_strength)->capture_default_str();
  s->add_option("--noise", synth.noise)->capture_default_str();
  s->add_option("--id-prefix", synth.id_prefix, "Prefix for utterance and speaker ids");
  s->callback([&] { action = [&](RunRecord& r) { cmd_synth(synth, r); }; });

  StatsArgs stats;
  s = app.add_subcommand("stats", "Print corpus statistics as JSON");
  path_in(s, "--manifest", stats.manifest, "Corpus manifest");
  s->add_option("--out", stats.out, "Also write the JSON here");
  s->callback([&] { action = [&](RunRecord& r) { cmd_stats(stats, r); }; });

  TrainArgs tr;
  s = app.add_subcommand("train", "Train a CTC backbone");
  path_in(s, "--train", tr.train, "Training manifest");
  s->add_option("--dev", tr.dev, "Dev manifest for per-epoch WER")->check(CLI::ExistingFile);
  s->add_option("--out", tr.out, "Checkpoint path")->required();
  s->add_option("--epochs", tr.epochs)->capture_default_str();
  s->add_option("--lr", tr.lr, "Peak learning rate")->capture_default_str();
  s->add_option("--batch", tr.batch)->capture_default_str();
  s->add_option("--warmup-updates", tr.warmup_updates, "Classifier-only updates at the start")->capture_default_str();
  s->add_flag("--no-specaug", tr.no_specaug);
  s->add_option("--time-mask", tr.time_mask)->capture_default_str();
  s->add_option("--channel-mask", tr.channel_mask)->capture_default_str();
  s->add_option("--channel-mask-len", tr.channel_mask_len)->capture_default_str();
  s->add_option("--d-model", tr.d_model)->capture_default_str();
  s->add_option("--layers", tr.layers)->capture_default_str();
  s->add_option("--heads", tr.heads)->capture_default_str();
  s->add_option("--ffn", tr.ffn)->capture_default_str();
  s->add_option("--dropout", tr.dropout)->capture_default_str();
  s->add_option("--layerdrop", tr.layerdrop)->capture_default_str();
  s->callback([&] { action = [&](RunRecord& r) { cmd_train(tr, r); }; });

  AlignArgs al;
  s = app.add_subcommand("ada-align", "Force-align transcripts and store word spans in a manifest");
  path_in(s, "--checkpoint", al.checkpoint, "Model checkpoint");
  path_in(s, "--manifest", al.manifest, "Corpus manifest");
  s->add_option("--out", al.out, "Aligned manifest")->required();
  s->callback([&] { action = [&](RunRecord& r) { cmd_ada_align(al, r); }; });

  AugmentArgs aug;
  s = app.add_subcommand("ada-augment", "Aligned data augmentation by same-speaker word substitution");
  path_in(s, "--manifest", aug.manifest, "Aligned manifest");
  s->add_option("--out", aug.out, "Output directory (manifest.jsonl, combined.jsonl, plan.jsonl, wav/)")->required();
  s->add_option("--rate", aug.rate, "Fraction of words replaced")->capture_default_str()->check(CLI::Range(0.0, 1.0));
  s->callback([&] { action = [&](RunRecord& r) { cmd_ada_augment(aug, r); }; });

  LmTrainArgs lmt;
  s = app.add_subcommand("lm-train", "Train a modified Kneser-Ney n-gram LM");
  s->add_option("--text", lmt.text, "Text file (one sentence per line) or manifest; repeatable")
      ->required()
      ->check(CLI::ExistingFile);
  s->add_option("--out", lmt.out, "ARPA output")->required();
  s->add_option("--order", lmt.order)->capture_default_str();
  s->add_option("--min-count", lmt.min_count, "Per-order minimum counts")->delimiter(',');
  s->callback([&] { action = [&](RunRecord& r) { cmd_lm_train(lmt, r); }; });

  LmPplArgs ppl;
  s = app.add_subcommand("lm-ppl", "Perplexity and OOV rate of an ARPA LM");
  path_in(s, "--lm", ppl.lm, "ARPA model");
  path_in(s, "--text", ppl.text, "Text file or manifest");
  s->add_option("--out", ppl.out, "Also write the JSON here");
  s->callback([&] { action = [&](RunRecord& r) { cmd_lm_ppl(ppl, r); }; });

  LmInterpArgs lmi;
  s = app.add_subcommand("lm-interpolate", "EM-weighted static interpolation of LMs");
  s->add_option("--lm", lmi.lms, "ARPA model; give at least two")->required()->check(CLI::ExistingFile);
  path_in(s, "--dev", lmi.dev, "Dev text or manifest for the mixture weights");
  s->add_option("--out", lmi.out, "Merged ARPA output")->required();
  s->callback([&] { action = [&](RunRecord& r) { cmd_lm_interpolate(lmi, r); }; });

  LmSampleArgs lms;
  s = app.add_subcommand("lm-sample", "Sample sentences from an ARPA LM");
  path_in(s, "--lm", lms.lm, "ARPA model");
  s->add_option("--out", lms.out, "Text output")->required();
  s->add_option("-n,--count", lms.n)->capture_default_str();
  s->add_option("--max-len", lms.max_len)->capture_default_str();
  s->callback([&] { action = [&](RunRecord& r) { cmd_lm_sample(lms, r); }; });

  auto decode_flags = [&](CLI::App* c, DecodeArgs& d) {
    path_in(c, "--checkpoint", d.checkpoint, "Model checkpoint");
    path_in(c, "--manifest", d.manifest, "Corpus manifest");
    c->add_option("--lm", d.lm, "ARPA model for shallow fusion, or none")->capture_default_str();
    c->add_option("--alpha", d.alpha, "LM weight")->capture_default_str();
    c->add_option("--beta", d.beta, "Word insertion bonus")->capture_default_str();
    c->add_option("--dialect", d.dialect, "Prefix to use: a dialect id, or auto for each utterance's own");
    c->add_flag("--allow-fallback", d.allow_fallback, "Decode unknown dialects with the plain backbone");
  };
  DecodeArgs dec;
  s = app.add_subcommand("decode", "Transcribe a corpus");
  decode_flags(s, dec);
  s->add_option("--out", dec.out, "Transcripts (utt_id<TAB>words)")->required();
  s->add_option("--nbest-out", dec.nbest_out, "Also write N-best lists");
  s->add_option("--beam", dec.beam, "Beam width; 0 decodes greedily")->capture_default_str();
  s->add_option("--nbest", dec.nbest, "Hypotheses kept per utterance (0: beam width)")->capture_default_str();
  s->callback([&] { action = [&](RunRecord& r) { run_decode(dec, r, false); }; });

  DecodeArgs nb;
  nb.beam = kDefaultNBest;
  nb.nbest = kDefaultNBest;
  s = app.add_subcommand("nbest-dump", "Write N-best lists with AM and LM scores");
  decode_flags(s, nb);
  s->add_option("--out", nb.out, "N-best output")->required();
  s->add_option("--beam", nb.beam, "Beam width")->capture_default_str()->check(CLI::PositiveNumber);
  s->add_option("--nbest", nb.nbest, "Hypotheses kept per utterance")->capture_default_str();
  s->callback([&] { action = [&](RunRecord& r) { run_decode(nb, r, true); }; });

  PrefixTrainArgs pt;
  s = app.add_subcommand("prefix-train", "Train per-dialect prefixes on a frozen backbone");
  path_in(s, "--checkpoint", pt.checkpoint, "Backbone checkpoint");
  path_in(s, "--train", pt.train, "Training manifest");
  s->add_option("--out", pt.out, "Checkpoint with prefixes")->required();
  s->add_option("--dialect", pt.dialects, "Dialects to train (default: all in the manifest)");
  s->add_option("--length", pt.length, "Prefix length")->capture_default_str();
  s->add_option("--epochs", pt.epochs)->capture_default_str();
  s->add_option("--lr", pt.lr)->capture_default_str();
  s->add_option("--weight-decay", pt.weight_decay)->capture_default_str();
  s->add_option("--init-stddev", pt.init_stddev)->capture_default_str();
  s->add_option("--batch", pt.batch)->capture_default_str();
  s->callback([&] { action = [&](RunRecord& r) { cmd_prefix_train(pt, r); }; });

  FuseOptArgs fo;
  s = app.add_subcommand("fuse-optimize", "Tune per-system score weights and combination weights on dev");
  s->add_option("--nbest", fo.nbest, "N-best file of one system; repeat per system")
      ->required()
      ->check(CLI::ExistingFile);
  path_in(s, "--refs", fo.refs, "References (transcripts or manifest)");
  s->add_option("--out", fo.out, "Weights JSON")->required();
  s->callback([&] { action = [&](RunRecord& r) { cmd_fuse_optimize(fo, r); }; });

  FuseArgs fu;
  s = app.add_subcommand("fuse", "Confusion-network combination of N-best lists");
  s->add_option("--nbest", fu.nbest, "N-best file of one system, in the order used by fuse-optimize")
      ->required()
      ->check(CLI::ExistingFile);
  path_in(s, "--weights", fu.weights, "Weights JSON from fuse-optimize");
  s->add_option("--out", fu.out, "Fused transcripts")->required();
  s->callback([&] { action = [&](RunRecord& r) { cmd_fuse(fu, r); }; });

  ScoreArgs sc;
  s = app.add_subcommand("score", "WER/CER of transcripts as a result table");
  path_in(s, "--refs", sc.refs, "References (transcripts or manifest)");
  s->add_option("--hyp", sc.hyps, "Hypothesis transcripts; repeatable")->required()->check(CLI::ExistingFile);
  s->add_option("--condition", sc.conditions, "Row name per --hyp (default: file stem)");
  s->add_option("--experiment", sc.experiment)->capture_default_str();
  s->add_option("--out", sc.out, "Result JSON")->required();
  s->callback([&] { action = [&](RunRecord& r) { cmd_score(sc, r); }; });

  Fig4Args f4;
  s = app.add_subcommand("exp-fig4", "Normal training vs training with aligned data augmentation");
  s->add_option("--work", f4.work, "Working directory for corpora and WAVs")->required();
  s->add_option("--out", f4.out, "Result JSON")->required();
  s->add_option("--epochs", f4.cfg.train.epochs)->capture_default_str();
  s->add_option("--sentences", f4.cfg.n_unique_sentences)->capture_default_str();
  s->add_option("--repetitions", f4.cfg.repetitions)->capture_default_str();
  s->add_option("--speakers", f4.cfg.n_speakers)->capture_default_str();
  s->add_option("--dev-sentences", f4.cfg.dev_sentences)->capture_default_str();
  s->add_option("--rate", f4.cfg.replace_rate)->capture_default_str();
  s->add_option("--lr", f4.cfg.train.learning_rate)->capture_default_str();
  s->callback([&] { action = [&](RunRecord& r) { cmd_fig4(f4, r); }; });

  Table4Args t4;
  s = app.add_subcommand("exp-table4", "Dialect-agnostic backbone vs per-dialect prefixes, with and without LM");
  s->add_option("--work", t4.work, "Working directory for corpora and WAVs")->required();
  s->add_option("--out", t4.out, "Result JSON")->required();
  s->add_option("--epochs", t4.cfg.train.epochs)->capture_default_str();
  s->add_option("--prefix-epochs", t4.cfg.prefix_train.epochs)->capture_default_str();
  s->add_option("--prefix-length", t4.cfg.prefix_length)->capture_default_str();
  s->add_option("--sentences", t4.cfg.n_unique_sentences)->capture_default_str();
  s->add_option("--repetitions", t4.cfg.repetitions)->capture_default_str();
  s->add_option("--speakers", t4.cfg.n_speakers)->capture_default_str();
  s->add_option("--dialect-strength", t4.cfg.dialect_strength)->capture_default_str();
  s->add_option("--beam", t4.cfg.beam.beam_width)->capture_default_str();
  s->add_option("--alpha", t4.cfg.beam.alpha)->capture_default_str();
  s->add_option("--beta", t4.cfg.beam.beta)->capture_default_str();
  s->add_option("--lm-order", t4.cfg.lm_order)->capture_default_str();
  s->callback([&] { action = [&](RunRecord& r) { cmd_table4(t4, r); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  g_command = app.get_subcommands().front()->get_name();
  const bool experiment = g_command.rfind("exp-", 0) == 0;
  RunRecord rec(g_command, g.seed_or(experiment ? 17 : 0));
  try {
    action(rec);
  } catch (const std::exception& e) {
    std::cerr << "asrkit " << g_command << ": error: " << e.what() << '\n';
    rec.rollback();
    return 1;
  }
  return 0;
}
