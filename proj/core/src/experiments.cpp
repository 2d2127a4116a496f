#include "asrkit/experiments.hpp"

#include <cstdio>

#include "asrkit/ada.hpp"
#include "asrkit/error.hpp"
#include "asrkit/lm.hpp"
#include "asrkit/score.hpp"
#include "json.hpp"

namespace asrkit {

namespace fs = std::filesystem;
using nlohmann::json;

const ResultRow& ExperimentResult::row(const std::string& condition) const {
  for (const auto& r : rows)
    if (r.condition == condition) return r;
  throw Error("experiment " + experiment + " has no row '" + condition + "'");
}

std::string ExperimentResult::to_json() const {
  json j;
  j["experiment"] = experiment;
  j["seed"] = seed;
  j["rows"] = json::array();
  for (const auto& r : rows) j["rows"].push_back({{"condition", r.condition}, {"wer", r.wer}, {"cer", r.cer}});
  j["traces"] = json::object();
  for (const auto& [k, v] : traces) j["traces"][k] = v;
  return j.dump(2) + "\n";
}

ModelConfig desk_model_config() {
  ModelConfig m;
  m.feature_dim = kDefaultMels;
  m.d_model = 64;
  m.n_layers = 2;
  m.n_heads = 4;
  m.ffn_dim = 256;
  m.dropout_p = 0.1;
  m.layerdrop_p = 0.1;
  return m;
}

TrainConfig desk_train_config() {
  TrainConfig t;
  t.learning_rate = 2e-3;
  t.batch_size = 8;
  t.epochs = 12;
  t.warmup_classifier_updates = 10;
  t.use_spec_augment = true;
  t.spec_augment = {0.05, 0.1, 4};
  return t;
}

namespace {

void say(const LogFn& log, const std::string& s) {
  if (log) log(s);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::vector<Sentence> transcripts(const Corpus& c) {
  std::vector<Sentence> out;
  for (const auto& u : c.utterances()) out.push_back(u.transcript);
  return out;
}

ErrorRates rates(const std::vector<Example>& examples, const std::vector<NBestList>& decoded) {
  std::vector<Sentence> refs, hyps;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    refs.push_back(examples[i].words);
    hyps.push_back(decoded[i].hypotheses.empty() ? Sentence{} : decoded[i].hypotheses.front().words);
  }
  return {wer(refs, hyps), cer(refs, hyps)};
}

}  // namespace

ExperimentResult run_fig4(const Fig4Config& cfg, const fs::path& work_dir, const LogFn& log) {
  fs::create_directories(work_dir);
  SynthOptions so;
  so.seed = cfg.seed;
  so.n_speakers = cfg.n_speakers;
  so.n_dialects = 1;
  so.n_unique_sentences = cfg.n_unique_sentences;
  so.repetitions_per_sentence = cfg.repetitions;
  Corpus train_c = synth_corpus(so, work_dir / "train");
  SynthOptions dev_o = so;
  dev_o.seed = cfg.seed + 1000;
  dev_o.lexicon_seed = cfg.seed;
  dev_o.n_unique_sentences = cfg.dev_sentences;
  dev_o.repetitions_per_sentence = cfg.dev_repetitions;
  dev_o.id_prefix = "dev";
  Corpus dev_c = synth_corpus(dev_o, work_dir / "dev");
  say(log, "fig4: " + std::to_string(train_c.size()) + " train / " + std::to_string(dev_c.size()) + " dev utterances");

  WordInventory inv = build_inventory(train_c);
  AugmentationPlan p = plan(train_c, inv, cfg.replace_rate, cfg.seed);
  write_plan(p, work_dir / "ada_plan.jsonl");
  Corpus aug_c = apply(train_c, p, work_dir / "ada");
  Corpus both = concat(train_c, aug_c);

  std::vector<Sentence> all = transcripts(both);
  for (const auto& s : transcripts(dev_c)) all.push_back(s);
  CharVocab vocab = CharVocab::from_transcripts(all);
  ModelConfig mc = cfg.model;
  mc.feature_dim = kDefaultMels;
  mc.vocab_size = static_cast<int>(vocab.size());
  mc.seed = cfg.seed;
  TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;

  std::vector<Example> train_x = prepare_examples(train_c, vocab);
  std::vector<Example> both_x = prepare_examples(both, vocab);
  std::vector<Example> dev_x = prepare_examples(dev_c, vocab);

  ExperimentResult res;
  res.experiment = "fig4";
  res.seed = cfg.seed;
  auto run = [&](const std::string& name, const std::vector<Example>& data) {
    TrainConfig t = tc;
    auto& trace = res.traces[name + "/dev_wer"];
    TrainResult tr = train(data, dev_x, vocab, t, mc, nullptr, [&](const EpochStats& st) {
      trace.push_back(st.dev_wer);
      say(log, "fig4 " + name + " epoch " + std::to_string(st.epoch) + " loss " + fmt(st.train_loss) + " dev WER " +
                   fmt(st.dev_wer));
    });
    ErrorRates er = evaluate_greedy(tr.params, mc, vocab, dev_x);
    res.rows.push_back({name, er.wer, er.cer});
  };
  run("normal", train_x);
  run("ada", both_x);
  return res;
}

Table4Config default_table4_config() {
  Table4Config c;
  c.train.epochs = 30;
  c.beam.beam_width = 8;
  c.beam.alpha = 0.5;
  c.beam.beta = 4.0;
  c.prefix_train.batch_size = 8;
  c.prefix_train.epochs = 2;
  return c;
}

ExperimentResult run_table4(const Table4Config& cfg, const fs::path& work_dir, const LogFn& log) {
  fs::create_directories(work_dir);
  SynthOptions so;
  so.seed = cfg.seed;
  so.n_speakers = cfg.n_speakers;
  so.n_dialects = cfg.n_dialects;
  so.n_unique_sentences = cfg.n_unique_sentences;
  so.repetitions_per_sentence = cfg.repetitions;
  so.dialect_strength = cfg.dialect_strength;
  Corpus train_c = synth_corpus(so, work_dir / "train");
  SynthOptions dev_o = so;
  dev_o.seed = cfg.seed + 1000;
  dev_o.lexicon_seed = cfg.seed;
  dev_o.n_unique_sentences = cfg.dev_sentences;
  dev_o.repetitions_per_sentence = cfg.dev_repetitions;
  dev_o.id_prefix = "dev";
  Corpus dev_c = synth_corpus(dev_o, work_dir / "dev");
  say(log, "table4: " + std::to_string(train_c.size()) + " train / " + std::to_string(dev_c.size()) +
               " dev utterances, " + std::to_string(train_c.dialect_inventory().size()) + " dialects");

  std::vector<Sentence> all = transcripts(train_c);
  for (const auto& s : transcripts(dev_c)) all.push_back(s);
  CharVocab vocab = CharVocab::from_transcripts(all);
  ModelConfig mc = cfg.model;
  mc.feature_dim = kDefaultMels;
  mc.vocab_size = static_cast<int>(vocab.size());
  mc.seed = cfg.seed;
  TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;

  std::vector<Example> train_x = prepare_examples(train_c, vocab);
  std::vector<Example> dev_x = prepare_examples(dev_c, vocab);
  TrainResult backbone = train(train_x, dev_x, vocab, tc, mc, nullptr, [&](const EpochStats& st) {
    say(log, "table4 backbone epoch " + std::to_string(st.epoch) + " loss " + fmt(st.train_loss) + " dev WER " +
                 fmt(st.dev_wer));
  });

  PrefixTrainConfig pc = cfg.prefix_train;
  pc.seed = cfg.seed;
  std::vector<std::string> dialects(train_c.dialect_inventory().begin(), train_c.dialect_inventory().end());
  std::vector<std::string> warnings;
  PrefixBank bank = train_prefixes(backbone.params, mc, train_x, dialects, PrefixConfig::for_model(mc, cfg.prefix_length),
                                   pc, &warnings);
  for (const auto& w : warnings) say(log, "table4 warning: " + w);

  KnOptions ko;
  ko.order = cfg.lm_order;
  NGramModel lm = train_kn(transcripts(train_c), ko);

  ExperimentResult res;
  res.experiment = "table4";
  res.seed = cfg.seed;
  DecodeOptions greedy;
  DecodeOptions beam;
  beam.beam = true;
  beam.beam_options = cfg.beam;
  beam.lm = &lm;
  auto add = [&](const std::string& name, const PrefixBank* b, const DecodeOptions& o) {
    ErrorRates er = rates(dev_x, decode_examples(backbone.params, mc, vocab, dev_x, b, o));
    res.rows.push_back({name, er.wer, er.cer});
    say(log, "table4 " + name + " WER " + fmt(er.wer) + " CER " + fmt(er.cer));
    for (const auto& d : dialects) {
      std::vector<Example> sub;
      for (const auto& e : dev_x)
        if (e.dialect_id == d) sub.push_back(e);
      if (sub.empty()) continue;
      ErrorRates ed = rates(sub, decode_examples(backbone.params, mc, vocab, sub, b, o));
      res.traces[name + "/" + d].push_back(ed.wer);
    }
  };
  add("backbone", nullptr, greedy);
  add("prefix", &bank, greedy);
  add("backbone+lm", nullptr, beam);
  add("prefix+lm", &bank, beam);
  return res;
}

}  // namespace asrkit
