#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>

#include "asrkit/corpus.hpp"
#include "asrkit/score.hpp"
#include "doctest.h"
#include "json.hpp"

#ifdef ASRKIT_CLI_PATH

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kWork = fs::temp_directory_path() / "asrkit_cli_test";

int run(const std::string& args, const fs::path& stdout_to = {}) {
  std::string cmd = std::string(ASRKIT_CLI_PATH) + " --quiet " + args;
  cmd += stdout_to.empty() ? " > /dev/null" : " > '" + stdout_to.string() + "'";
  cmd += " 2> /dev/null";
  return std::system(cmd.c_str());
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

// One small single-dialect corpus and a model that fits it well, shared by the cases below.
struct Fixture {
  fs::path corpus = kWork / "corpus";
  fs::path manifest = corpus / "manifest.jsonl";
  fs::path model = kWork / "model.ckpt";

  Fixture() {
    static bool built = false;
    if (built) return;
    built = true;
    fs::remove_all(kWork);
    fs::create_directories(kWork);
    REQUIRE(run("--seed 5 synth --out " + q(corpus) + " --speakers 2 --dialects 1 --sentences 6 --repetitions 2") == 0);
    REQUIRE(run("--seed 5 train --train " + q(manifest) + " --out " + q(model) +
                " --epochs 60 --lr 3e-3 --no-specaug --dropout 0 --layerdrop 0 --d-model 32 --ffn 64 --batch 4") == 0);
  }
};

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("synth then stats reports the generator arguments") {
    const fs::path dir = kWork / "stats";
    fs::remove_all(dir);
    REQUIRE(run("--seed 9 synth --out " + q(dir / "c") + " --speakers 6 --dialects 3 --sentences 7 --repetitions 4") == 0);
    REQUIRE(run("stats --manifest " + q(dir / "c" / "manifest.jsonl"), dir / "stats.json") == 0);
    json j = json::parse(slurp(dir / "stats.json"));
    CHECK(j["speakers"] == 6);
    CHECK(j["dialects"] == 3);
    CHECK(j["unique_sentences"] == 7);
    CHECK(j["utterances"] == 28);
    CHECK(j["hours"].get<double>() > 0.0);
    CHECK(fs::exists(dir / "c" / "run.json"));
  }

  TEST_CASE("config file supplies defaults and flags override it") {
    const fs::path dir = kWork / "config";
    fs::remove_all(dir);
    fs::create_directories(dir);
    std::ofstream(dir / "cfg.ini") << "seed = 4\n[synth]\nspeakers = 2\ndialects = 1\nsentences = 5\nrepetitions = 2\n";
    REQUIRE(run("--config " + q(dir / "cfg.ini") + " synth --out " + q(dir / "c") + " --sentences 3") == 0);
    asrkit::Corpus c = asrkit::read_manifest(dir / "c" / "manifest.jsonl");
    CHECK(c.size() == 6);
    CHECK(c.speaker_inventory().size() == 2);
    json rec = json::parse(slurp(dir / "c" / "run.json"));
    CHECK(rec["seed"] == 4);
  }

  TEST_CASE("decode with --beam 1 --lm none equals greedy output on a confident model") {
    Fixture f;
    const fs::path g = kWork / "greedy.txt", b = kWork / "beam1.txt";
    REQUIRE(run("decode --checkpoint " + q(f.model) + " --manifest " + q(f.manifest) + " --out " + q(g)) == 0);
    REQUIRE(run("decode --checkpoint " + q(f.model) + " --manifest " + q(f.manifest) + " --out " + q(b) +
                " --beam 1 --lm none") == 0);
    CHECK(slurp(g) == slurp(b));
    CHECK(asrkit::read_transcripts(g).size() == 12);
  }

  TEST_CASE("decode output does not depend on --jobs") {
    Fixture f;
    const fs::path one = kWork / "jobs1.nbest", three = kWork / "jobs3.nbest";
    const std::string common = "--checkpoint " + q(f.model) + " --manifest " + q(f.manifest) + " --beam 4 --nbest 4";
    REQUIRE(run("--jobs 1 nbest-dump " + common + " --out " + q(one)) == 0);
    REQUIRE(run("--jobs 3 nbest-dump " + common + " --out " + q(three)) == 0);
    CHECK(slurp(one) == slurp(three));
  }

  TEST_CASE("reruns with the same seed are byte-identical") {
    Fixture f;
    const fs::path dir = kWork / "rerun";
    fs::remove_all(dir);
    for (const char* tag : {"a", "b"}) {
      REQUIRE(run("--seed 2 synth --out " + q(dir / tag / "c") + " --speakers 2 --dialects 2 --sentences 3") == 0);
      REQUIRE(run("--seed 2 train --train " + q(dir / tag / "c" / "manifest.jsonl") + " --out " + q(dir / tag / "m.ckpt") +
                  " --epochs 2 --d-model 16 --ffn 32") == 0);
    }
    CHECK(slurp(dir / "a" / "m.ckpt") == slurp(dir / "b" / "m.ckpt"));
    CHECK(slurp(dir / "a" / "c" / "manifest.jsonl") == slurp(dir / "b" / "c" / "manifest.jsonl"));
    json ra = json::parse(slurp(dir / "a" / "m.ckpt.run.json"));
    json rb = json::parse(slurp(dir / "b" / "m.ckpt.run.json"));
    CHECK(ra["outputs"].begin().value() == rb["outputs"].begin().value());
    CHECK(ra["inputs"].begin().value() == rb["inputs"].begin().value());
  }

  TEST_CASE("ada-align then ada-augment produces an augmented corpus") {
    Fixture f;
    const fs::path dir = kWork / "ada";
    fs::remove_all(dir);
    REQUIRE(run("ada-align --checkpoint " + q(f.model) + " --manifest " + q(f.manifest) + " --out " +
                q(dir / "aligned.jsonl")) == 0);
    REQUIRE(run("--seed 3 ada-augment --manifest " + q(dir / "aligned.jsonl") + " --out " + q(dir / "aug")) == 0);
    asrkit::Corpus aug = asrkit::read_manifest(dir / "aug" / "manifest.jsonl");
    asrkit::Corpus both = asrkit::read_manifest(dir / "aug" / "combined.jsonl");
    CHECK(aug.size() == 12);
    CHECK(both.size() == 24);
    for (const auto& u : both.utterances()) CHECK(fs::exists(both.resolve_audio(u)));
  }

  TEST_CASE("errors give a non-zero exit and leave no partial outputs") {
    Fixture f;
    const fs::path dir = kWork / "errors";
    fs::remove_all(dir);
    fs::create_directories(dir);
    CHECK(run("decode --no-such-flag") != 0);
    CHECK(run("decode --checkpoint " + q(dir / "missing.ckpt") + " --manifest " + q(f.manifest) + " --out " +
              q(dir / "x.txt")) != 0);
    CHECK(run("decode --checkpoint " + q(f.model) + " --manifest " + q(f.manifest) + " --dialect d9 --out " +
              q(dir / "y.txt")) != 0);
    CHECK_FALSE(fs::exists(dir / "y.txt"));

    // Augmentation fails part-way when a donor's audio is gone.
    fs::copy(f.corpus, dir / "c", fs::copy_options::recursive);
    asrkit::Corpus c = asrkit::read_manifest(dir / "c" / "manifest.jsonl");
    fs::remove(c.resolve_audio(c[c.size() - 1]));
    CHECK(run("ada-augment --rate 0.5 --manifest " + q(dir / "c" / "manifest.jsonl") + " --out " + q(dir / "aug")) != 0);
    CHECK_FALSE(fs::exists(dir / "aug"));
  }
}

#endif
