#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "ktts/audio.hpp"
#include "ktts/corpus.hpp"
#include "testutil.hpp"

using namespace ktts;

namespace {

struct RunResult {
  int exit_code = -1;
  std::string output;  // stdout + stderr
};

RunResult run(const std::string& args) {
  std::string cmd = std::string(KTTS_BIN) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  RunResult r;
  std::array<char, 4096> buf;
  while (size_t n = fread(buf.data(), 1, buf.size(), pipe)) r.output.append(buf.data(), n);
  int status = pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Toy training setup shared by the heavier cases: 4 tone utterances, a tiny
// model config, and a 2-step pair of checkpoints.
struct Workspace {
  test::TempDir tmp{"cli"};
  std::string manifest, wav_dir, config, vae_ckpt, align_ckpt;

  Workspace() {
    wav_dir = tmp.dir();
    std::vector<corpus::Utterance> rows;
    for (int i = 0; i < 4; ++i) {
      std::string id = "utt" + std::to_string(i);
      audio::write_wav(tmp.file(id + ".wav"),
                       test::tone(2200 + 320 * 4, 150.0 + 40.0 * i));
      rows.push_back({id, "با بوو", "News", "", 0});
    }
    manifest = tmp.file("manifest.csv");
    corpus::write_manifest(manifest, rows);

    config = tmp.file("config.txt");
    std::ofstream(config) << "model.dim = 8\n"
                             "model.n_heads = 2\n"
                             "model.n_blocks = 1\n"
                             "model.ffn_dim = 16\n"
                             "model.pos_filters = 4\n"
                             "model.pos_groups = 1\n"
                             "model.dec_channels = 6\n"
                             "model.dec_blocks = 2\n"
                             "model.dec_dilation_cycle = 3\n"
                             "model.disc_layers = 3\n"
                             "model.disc_channels = 4\n"
                             "vae.batch_size = 2\n"
                             "vae.slice_window = 2\n"
                             "vae.adv_weight = 0\n"
                             "align.batch_size = 2\n";
    vae_ckpt = tmp.file("vae.ktts");
    align_ckpt = tmp.file("align.ktts");

    RunResult pre = run("pretrain-vae --manifest " + manifest + " --wav-dir " + wav_dir +
                        " --out " + vae_ckpt + " --config " + config +
                        " --seed 3 --steps 2 --log-every 1");
    REQUIRE(pre.exit_code == 0);
    RunResult tr = run("train --manifest " + manifest + " --wav-dir " + wav_dir + " --vae " +
                       vae_ckpt + " --out " + align_ckpt + " --config " + config +
                       " --seed 4 --steps 2 --log-every 1");
    REQUIRE(tr.exit_code == 0);
  }
};

Workspace& ws() {
  static Workspace w;
  return w;
}

}  // namespace

TEST_CASE("every subcommand offers --help") {
  for (const char* sub :
       {"", "corpus", "corpus stats", "corpus split", "phonemize", "pretrain-vae", "train",
        "synth", "bench", "mos"}) {
    RunResult r = run(std::string(sub) + (*sub ? " --help" : "--help"));
    CHECK(r.exit_code == 0);
    CHECK(r.output.find("Usage") != std::string::npos);
  }
}

TEST_CASE("unknown flags and missing arguments are usage errors") {
  CHECK(run("phonemize --text با --no-such-flag").exit_code == 2);
  CHECK(run("synth").exit_code == 2);
  CHECK(run("no-such-command").exit_code == 2);
  CHECK(run("").exit_code == 2);
}

TEST_CASE("phonemize prints symbols or ids and rejects bad text") {
  RunResult sym = run("phonemize --text بوو");
  CHECK(sym.exit_code == 0);
  CHECK(sym.output == "b u\n");
  RunResult ids = run("phonemize --ids --text بوو");
  CHECK(ids.exit_code == 0);
  // Digits are a data error with the offending index.
  RunResult bad = run("phonemize --text ب7");
  CHECK(bad.exit_code == 3);
  CHECK(bad.output.find("index 1") != std::string::npos);
}

TEST_CASE("corpus split reproduces the published counts without audio") {
  test::TempDir tmp("split6078");
  std::vector<corpus::Utterance> rows(6078);
  for (size_t i = 0; i < rows.size(); ++i) rows[i] = {"u" + std::to_string(i), "x", "News", "", 0};
  std::string manifest = tmp.file("m.csv");
  corpus::write_manifest(manifest, rows);

  RunResult r = run("corpus split --manifest " + manifest + " --seed 42 --out-dir " +
                    tmp.dir());
  CHECK(r.exit_code == 0);
  CHECK(r.output.find("train = 4255") != std::string::npos);
  CHECK(r.output.find("val = 608") != std::string::npos);
  CHECK(r.output.find("test = 1215") != std::string::npos);
  auto train_rows = corpus::load_manifest_rows(tmp.file("train.csv"));
  CHECK(train_rows.size() == 4255);
  auto val_rows = corpus::load_manifest_rows(tmp.file("val.csv"));
  CHECK(val_rows.size() == 608);
  auto test_rows = corpus::load_manifest_rows(tmp.file("test.csv"));
  CHECK(test_rows.size() == 1215);
}

TEST_CASE("corpus stats emits both report styles and validation errors exit 3") {
  RunResult r = run("corpus stats --manifest " + ws().manifest + " --wav-dir " + ws().wav_dir);
  CHECK(r.exit_code == 0);
  CHECK(r.output.find("utterances:") != std::string::npos);
  CHECK(r.output.find("mean_s = ") != std::string::npos);

  RunResult missing = run("corpus stats --manifest /no/such/file.csv --wav-dir /tmp");
  CHECK(missing.exit_code == 3);
}

TEST_CASE("training commands produce checkpoints synth can consume") {
  // Fixed seed and temperature 0: byte-identical synthesis across runs.
  std::string out1 = ws().tmp.file("a.wav"), out2 = ws().tmp.file("b.wav");
  std::string base = "synth --ckpt " + ws().align_ckpt + " --vae " + ws().vae_ckpt +
                     " --text با --seed 1 --temperature 0 --out ";
  RunResult r1 = run(base + out1);
  REQUIRE(r1.exit_code == 0);
  RunResult r2 = run(base + out2);
  REQUIRE(r2.exit_code == 0);
  CHECK(slurp(out1) == slurp(out2));

  audio::Waveform w = audio::read_wav(out1);
  CHECK(w.samples.size() % 320 == 0);
}

TEST_CASE("synth argument and checkpoint failures map to the exit contract") {
  // Empty text: usage error.
  CHECK(run("synth --ckpt " + ws().align_ckpt + " --vae " + ws().vae_ckpt +
            " --text \"\" --out /tmp/x.wav")
            .exit_code == 2);
  // Corrupt checkpoint: checkpoint error.
  std::string junk = ws().tmp.file("junk.ktts");
  std::ofstream(junk) << "not a checkpoint";
  CHECK(run("synth --ckpt " + junk + " --vae " + ws().vae_ckpt +
            " --text با --out /tmp/x.wav")
            .exit_code == 4);
  // Missing checkpoint file: checkpoint error.
  CHECK(run("synth --ckpt /no/such.ktts --vae " + ws().vae_ckpt +
            " --text با --out /tmp/x.wav")
            .exit_code == 4);
  // Unwritable output path: data error.
  CHECK(run("synth --ckpt " + ws().align_ckpt + " --vae " + ws().vae_ckpt +
            " --text با --out /no_dir_here/x.wav")
            .exit_code == 3);
}

TEST_CASE("bench reports latency and rtf for a trained pair") {
  std::string texts = ws().tmp.file("texts.txt");
  std::ofstream(texts) << "با\nبوو\n";
  RunResult r = run("bench --ckpt " + ws().align_ckpt + " --vae " + ws().vae_ckpt +
                    " --texts " + texts + " --repeats 2 --seed 5");
  CHECK(r.exit_code == 0);
  CHECK(r.output.find("latency.mean = ") != std::string::npos);
  CHECK(r.output.find("rtf.mean = ") != std::string::npos);
  CHECK(r.output.find("rtf.unit = ratio") != std::string::npos);
}

TEST_CASE("mos subcommand aggregates a ratings file") {
  test::TempDir tmp("mos");
  std::string ratings = tmp.file("r.csv");
  std::ofstream(ratings) << "sample_id,score\na,1\nb,4\nc,4\n";
  RunResult r = run("mos --ratings " + ratings);
  CHECK(r.exit_code == 0);
  CHECK(r.output.find("mos = 4") != std::string::npos);
  CHECK(r.output.find("n_excluded = 1") != std::string::npos);

  std::ofstream(ratings) << "sample_id,score\na,1\n";
  CHECK(run("mos --ratings " + ratings).exit_code == 3);
}
