// ktts: corpus tooling, VAE pre-training, alignment training, synthesis and
// benchmarking for the Central Kurdish text-to-speech pipeline.
//
// Exit codes: 0 success, 2 usage error, 3 data/validation error,
// 4 checkpoint error.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "ktts/corpus.hpp"
#include "ktts/evalbench.hpp"
#include "ktts/inference.hpp"
#include "ktts/phonemizer.hpp"
#include "ktts/training.hpp"

namespace fs = std::filesystem;
using namespace ktts;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitCheckpoint = 4;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

g2p::PhonemeTable load_table(const std::string& path) {
  if (path.empty()) return g2p::PhonemeTable::builtin();
  return g2p::PhonemeTable::load_file(path);
}

cfg::KvMap load_config(const std::string& path) {
  if (path.empty()) return {};
  return cfg::parse_kv_file(path);
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError(path + ": cannot open");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

train::ModelSpec model_spec_from(const cfg::KvMap& kv, int vocab) {
  cfg::KvMap merged = kv;
  merged["model.vocab"] = std::to_string(vocab);
  return train::ModelSpec::from_kv(merged);
}

std::vector<int> phonemize_checked(const std::string& text, const g2p::PhonemeTable& table) {
  return g2p::phonemize(g2p::normalize_text(text), table).ids;
}

// ---------------------------------------------------------------------------

struct CorpusStatsArgs {
  std::string manifest, wav_dir;
  int bins = 20;
};

int run_corpus_stats(const CorpusStatsArgs& a) {
  std::vector<std::string> warnings;
  auto utts = corpus::load_manifest(a.manifest, a.wav_dir, &warnings);
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
  corpus::CorpusStats s = corpus::corpus_stats(utts, a.bins);
  std::cout << corpus::stats_human(s) << "\n" << corpus::stats_kv(s);
  return kExitOk;
}

struct CorpusSplitArgs {
  std::string manifest, wav_dir, out_dir;
  corpus::SplitSpec spec;
};

int run_corpus_split(const CorpusSplitArgs& a) {
  std::vector<corpus::Utterance> utts;
  if (a.wav_dir.empty()) {
    utts = corpus::load_manifest_rows(a.manifest);
  } else {
    std::vector<std::string> warnings;
    utts = corpus::load_manifest(a.manifest, a.wav_dir, &warnings);
    for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
  }
  corpus::Split split = corpus::split_corpus(utts, a.spec);
  fs::path dir = a.out_dir.empty() ? fs::path(a.manifest).parent_path() : fs::path(a.out_dir);
  if (!dir.empty()) fs::create_directories(dir);
  corpus::write_manifest((dir / "train.csv").string(), split.train);
  corpus::write_manifest((dir / "val.csv").string(), split.val);
  corpus::write_manifest((dir / "test.csv").string(), split.test);
  std::cout << "train = " << split.train.size() << "\nval = " << split.val.size()
            << "\ntest = " << split.test.size() << "\n";
  return kExitOk;
}

struct PhonemizeArgs {
  std::string text, table_path;
  bool ids = false;
};

int run_phonemize(const PhonemizeArgs& a) {
  g2p::PhonemeTable table = load_table(a.table_path);
  g2p::PhonemeSeq seq = g2p::phonemize(g2p::normalize_text(a.text), table);
  if (a.ids) {
    for (size_t i = 0; i < seq.ids.size(); ++i)
      std::cout << (i ? " " : "") << seq.ids[i];
    std::cout << "\n";
  } else {
    std::cout << g2p::to_symbols(seq, table) << "\n";
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct TrainCommonArgs {
  std::string manifest, wav_dir, out, config_path, table_path;
  uint64_t seed = 0;
  int64_t steps = -1;       // -1: use config max_steps
  int64_t log_every = 50;
  int64_t save_every = 0;   // 0: final save only
};

// Epoch-driven batching over a seeded shuffle of the corpus indices.
template <typename StepFn>
void drive_epochs(size_t n_items, int batch_size, int64_t max_steps, uint64_t seed,
                  const std::function<void(int64_t)>& set_epoch, const StepFn& step_batch) {
  Rng order_rng(seed ^ 0x9e3779b97f4a7c15ull);
  std::vector<size_t> order(n_items);
  for (size_t i = 0; i < n_items; ++i) order[i] = i;
  int64_t step = 0, epoch = 0;
  while (step < max_steps) {
    set_epoch(epoch);
    order_rng.shuffle(order);
    for (size_t at = 0; at < n_items && step < max_steps; at += batch_size) {
      std::vector<size_t> batch(order.begin() + at,
                                order.begin() + std::min(n_items, at + batch_size));
      step_batch(step, batch);
      ++step;
    }
    ++epoch;
  }
}

int run_pretrain_vae(const TrainCommonArgs& a) {
  cfg::KvMap kv = load_config(a.config_path);
  train::VaeTrainConfig cfg = train::VaeTrainConfig::from_kv(kv);
  g2p::PhonemeTable table = load_table(a.table_path);
  train::ModelSpec spec = model_spec_from(kv, table.vocab_size());

  std::vector<std::string> warnings;
  auto utts = corpus::load_manifest(a.manifest, a.wav_dir, &warnings);
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
  std::vector<audio::Waveform> waves;
  waves.reserve(utts.size());
  for (const auto& u : utts) waves.push_back(audio::read_wav(u.audio_path));

  train::VaeTrainer trainer(nets::WaveEncoder(spec.feature, spec.encoder),
                            nets::WaveDecoder(spec.decoder),
                            nets::Discriminator(spec.discriminator), cfg, a.seed);
  Rng rng(a.seed + 1);
  int64_t max_steps = a.steps >= 0 ? a.steps : cfg.max_steps;
  std::string snapshot = spec.to_kv() + cfg::dump_kv(kv);

  drive_epochs(
      waves.size(), cfg.batch_size, max_steps, a.seed,
      [&](int64_t epoch) { trainer.set_epoch(epoch); },
      [&](int64_t step, const std::vector<size_t>& idx) {
        std::vector<audio::Waveform> batch;
        for (size_t i : idx) batch.push_back(waves[i]);
        train::VaeLossReport rep = trainer.step(batch, rng);
        if (step % a.log_every == 0)
          std::cout << "step " << step << "  gen " << rep.gen_total << "  mse " << rep.mse
                    << "  kl " << rep.kl << "  disc " << rep.disc_total << "\n"
                    << std::flush;
        if (a.save_every > 0 && (step + 1) % a.save_every == 0)
          train::save_checkpoint(trainer.make_checkpoint(snapshot), a.out);
      });
  train::save_checkpoint(trainer.make_checkpoint(snapshot), a.out);
  std::cout << "saved " << a.out << " at step " << trainer.global_step() << "\n";
  return kExitOk;
}

struct AlignArgs : TrainCommonArgs {
  std::string vae_path;
};

int run_train_align(const AlignArgs& a) {
  cfg::KvMap kv = load_config(a.config_path);
  train::AlignTrainConfig cfg = train::AlignTrainConfig::from_kv(kv);
  g2p::PhonemeTable table = load_table(a.table_path);

  train::Checkpoint vae_ckpt = train::load_checkpoint(a.vae_path);
  train::ModelSpec vae_spec = train::ModelSpec::from_kv(cfg::parse_kv(vae_ckpt.config_text));
  train::ModelSpec spec = vae_spec;
  spec.vocab = table.vocab_size();
  spec.validate();

  std::vector<std::string> warnings;
  auto utts = corpus::load_manifest(a.manifest, a.wav_dir, &warnings);
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";

  std::vector<train::AlignTrainer::Pair> pairs;
  for (const auto& u : utts) {
    train::AlignTrainer::Pair p;
    try {
      p.phoneme_ids = phonemize_checked(u.transcript, table);
    } catch (const DataError& e) {
      throw DataError("utterance '" + u.id + "': " + e.what());
    }
    p.wave = audio::read_wav(u.audio_path);
    pairs.push_back(std::move(p));
  }

  train::AlignTrainer trainer(nets::TextEncoder(spec.encoder, spec.vocab),
                              nets::DurationPredictor(spec.duration),
                              nets::WaveEncoder(spec.feature, spec.encoder),
                              vae_ckpt.section(train::kSectionWaveEncoder), cfg, a.seed);
  Rng rng(a.seed + 1);
  int64_t max_steps = a.steps >= 0 ? a.steps : cfg.max_steps;
  std::string snapshot = spec.to_kv() + cfg::dump_kv(kv);

  drive_epochs(
      pairs.size(), cfg.batch_size, max_steps, a.seed,
      [&](int64_t epoch) { trainer.set_epoch(epoch); },
      [&](int64_t step, const std::vector<size_t>& idx) {
        std::vector<train::AlignTrainer::Pair> batch;
        for (size_t i : idx) batch.push_back(pairs[i]);
        train::AlignLossReport rep = trainer.step(batch, rng);
        if (step % a.log_every == 0)
          std::cout << "step " << step << "  total " << rep.total << "  nll/frame "
                    << rep.nll_per_frame << "  dur_mse " << rep.duration_mse << "\n"
                    << std::flush;
        if (a.save_every > 0 && (step + 1) % a.save_every == 0)
          train::save_checkpoint(trainer.make_checkpoint(snapshot), a.out);
      });
  train::save_checkpoint(trainer.make_checkpoint(snapshot), a.out);
  std::cout << "saved " << a.out << " at step " << trainer.global_step() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string ckpt, vae, text, out, table_path;
  infer::SynthesisOptions opts;
};

infer::Synthesizer load_synth(const std::string& align_path, const std::string& vae_path,
                              const g2p::PhonemeTable& table) {
  train::Checkpoint align_ckpt = train::load_checkpoint(align_path);
  train::Checkpoint vae_ckpt = train::load_checkpoint(vae_path);
  infer::Synthesizer synth = infer::Synthesizer::from_checkpoints(align_ckpt, vae_ckpt);
  if (synth.spec().vocab != table.vocab_size())
    throw DataError("phoneme table has " + std::to_string(table.vocab_size()) +
                    " symbols but the checkpoint was trained with " +
                    std::to_string(synth.spec().vocab));
  return synth;
}

int run_synth(const SynthArgs& a) {
  if (a.text.empty()) throw UsageError("synth: --text must not be empty");
  g2p::PhonemeTable table = load_table(a.table_path);
  std::vector<int> ids = phonemize_checked(a.text, table);
  if (ids.empty()) throw UsageError("synth: text contains no synthesizable content");
  infer::Synthesizer synth = load_synth(a.ckpt, a.vae, table);
  audio::Waveform w = synth.synthesize(ids, a.opts);
  audio::write_wav(a.out, w);
  std::cout << "wrote " << a.out << " (" << w.samples.size() << " samples, "
            << static_cast<double>(w.samples.size()) / audio::kSampleRate << " s)\n";
  return kExitOk;
}

struct BenchArgs {
  std::string ckpt, vae, texts_path, table_path;
  int repeats = 5;
  infer::SynthesisOptions opts;
};

int run_bench(const BenchArgs& a) {
  g2p::PhonemeTable table = load_table(a.table_path);
  infer::Synthesizer synth = load_synth(a.ckpt, a.vae, table);
  std::vector<std::string> texts = read_lines(a.texts_path);
  if (texts.empty()) throw DataError(a.texts_path + ": no texts");

  bench::SynthFn fn = [&](const std::string& text) {
    return synth.synthesize(phonemize_checked(text, table), a.opts);
  };
  bench::BenchResult lat = bench::bench_latency(fn, texts, a.repeats);
  bench::BenchResult rtf = bench::bench_rtf(fn, texts, a.repeats);
  std::cout << bench::bench_human(lat, "latency") << "\n"
            << bench::bench_human(rtf, "rtf") << "\n"
            << bench::bench_kv(lat, "latency") << bench::bench_kv(rtf, "rtf");
  return kExitOk;
}

int run_mos(const std::string& ratings_path) {
  bench::MosReport r = bench::aggregate_mos(bench::load_ratings_csv(ratings_path));
  std::cout << bench::mos_human(r) << "\n" << bench::mos_kv(r);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Central Kurdish end-to-end text-to-speech"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);

  // corpus
  CLI::App* corpus_cmd = app.add_subcommand("corpus", "Corpus tooling");
  corpus_cmd->require_subcommand(1);

  CorpusStatsArgs stats_args;
  CLI::App* stats_cmd = corpus_cmd->add_subcommand("stats", "Corpus statistics report");
  stats_cmd->add_option("--manifest", stats_args.manifest, "Manifest CSV (id,transcript,category)")
      ->required();
  stats_cmd->add_option("--wav-dir", stats_args.wav_dir, "Directory holding <id>.wav files")
      ->required();
  stats_cmd->add_option("--bins", stats_args.bins, "Histogram bin count")->default_val(20);

  CorpusSplitArgs split_args;
  CLI::App* split_cmd =
      corpus_cmd->add_subcommand("split", "Deterministic train/val/test split");
  split_cmd->add_option("--manifest", split_args.manifest, "Manifest CSV")->required();
  split_cmd->add_option("--wav-dir", split_args.wav_dir,
                        "Validate audio while splitting (optional)");
  split_cmd->add_option("--out-dir", split_args.out_dir,
                        "Output directory (default: next to the manifest)");
  split_cmd->add_option("--seed", split_args.spec.seed, "Shuffle seed")->default_val(0);
  split_cmd->add_option("--train", split_args.spec.train_ratio, "Train ratio")
      ->default_val(0.70);
  split_cmd->add_option("--val", split_args.spec.val_ratio, "Validation ratio")
      ->default_val(0.10);
  split_cmd->add_option("--test", split_args.spec.test_ratio, "Test ratio")->default_val(0.20);

  // phonemize
  PhonemizeArgs ph_args;
  CLI::App* ph_cmd = app.add_subcommand("phonemize", "Text to phoneme symbols or ids");
  ph_cmd->add_option("--text", ph_args.text, "Input text")->required();
  ph_cmd->add_option("--table", ph_args.table_path,
                     "Phoneme table TSV (default: built-in inventory)");
  ph_cmd->add_flag("--ids", ph_args.ids, "Print integer ids instead of symbols");

  // pretrain-vae
  TrainCommonArgs vae_args;
  CLI::App* vae_cmd = app.add_subcommand("pretrain-vae", "Waveform VAE pre-training");
  vae_cmd->add_option("--manifest", vae_args.manifest, "Manifest CSV")->required();
  vae_cmd->add_option("--wav-dir", vae_args.wav_dir, "WAV directory")->required();
  vae_cmd->add_option("--out", vae_args.out, "Output checkpoint path")->required();
  vae_cmd->add_option("--config", vae_args.config_path,
                      "Key-value config (model.* and vae.* keys)");
  vae_cmd->add_option("--table", vae_args.table_path, "Phoneme table (records vocab size)");
  vae_cmd->add_option("--seed", vae_args.seed, "Init and data-order seed")->default_val(0);
  vae_cmd->add_option("--steps", vae_args.steps, "Step budget (default: config max_steps)");
  vae_cmd->add_option("--log-every", vae_args.log_every, "Steps between loss lines")
      ->default_val(50);
  vae_cmd->add_option("--save-every", vae_args.save_every,
                      "Checkpoint every N steps (0: final only)");

  // train (alignment phase)
  AlignArgs align_args;
  CLI::App* train_cmd =
      app.add_subcommand("train", "Alignment training of text encoder + duration predictor");
  train_cmd->add_option("--manifest", align_args.manifest, "Manifest CSV")->required();
  train_cmd->add_option("--wav-dir", align_args.wav_dir, "WAV directory")->required();
  train_cmd->add_option("--vae", align_args.vae_path, "Pre-trained VAE checkpoint")
      ->required();
  train_cmd->add_option("--out", align_args.out, "Output checkpoint path")->required();
  train_cmd->add_option("--config", align_args.config_path, "Key-value config (align.* keys)");
  train_cmd->add_option("--table", align_args.table_path, "Phoneme table TSV");
  train_cmd->add_option("--seed", align_args.seed, "Init and data-order seed")->default_val(0);
  train_cmd->add_option("--steps", align_args.steps, "Step budget (default: config max_steps)");
  train_cmd->add_option("--log-every", align_args.log_every, "Steps between loss lines")
      ->default_val(50);
  train_cmd->add_option("--save-every", align_args.save_every,
                        "Checkpoint every N steps (0: final only)");

  // synth
  SynthArgs synth_args;
  CLI::App* synth_cmd = app.add_subcommand("synth", "Synthesize speech from text");
  synth_cmd->add_option("--ckpt", synth_args.ckpt, "Alignment checkpoint")->required();
  synth_cmd->add_option("--vae", synth_args.vae, "VAE checkpoint (wave decoder)")->required();
  synth_cmd->add_option("--text", synth_args.text, "Input text")->required();
  synth_cmd->add_option("--out", synth_args.out, "Output WAV path")->required();
  synth_cmd->add_option("--table", synth_args.table_path, "Phoneme table TSV");
  synth_cmd->add_option("--seed", synth_args.opts.seed, "Sampling seed")->default_val(0);
  synth_cmd->add_option("--temperature", synth_args.opts.temperature, "Sampling temperature")
      ->default_val(0.667);
  synth_cmd->add_option("--duration-scale", synth_args.opts.duration_scale,
                        "Speaking-rate scale")
      ->default_val(1.0);
  synth_cmd->add_option("--slice-size", synth_args.opts.slice_size,
                        "Latent frames per decoded clip")
      ->default_val(32);

  // bench
  BenchArgs bench_args;
  CLI::App* bench_cmd = app.add_subcommand("bench", "Latency and real-time-factor benchmark");
  bench_cmd->add_option("--ckpt", bench_args.ckpt, "Alignment checkpoint")->required();
  bench_cmd->add_option("--vae", bench_args.vae, "VAE checkpoint")->required();
  bench_cmd->add_option("--texts", bench_args.texts_path, "File with one text per line")
      ->required();
  bench_cmd->add_option("--table", bench_args.table_path, "Phoneme table TSV");
  bench_cmd->add_option("--repeats", bench_args.repeats, "Timing repeats per text")
      ->default_val(5);
  bench_cmd->add_option("--seed", bench_args.opts.seed, "Sampling seed")->default_val(0);
  bench_cmd->add_option("--temperature", bench_args.opts.temperature, "Sampling temperature")
      ->default_val(0.667);

  // mos
  std::string ratings_path;
  CLI::App* mos_cmd = app.add_subcommand("mos", "Aggregate listener ratings");
  mos_cmd->add_option("--ratings", ratings_path, "CSV with header sample_id,score")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (stats_cmd->parsed()) return run_corpus_stats(stats_args);
    if (split_cmd->parsed()) return run_corpus_split(split_args);
    if (ph_cmd->parsed()) return run_phonemize(ph_args);
    if (vae_cmd->parsed()) return run_pretrain_vae(vae_args);
    if (train_cmd->parsed()) return run_train_align(align_args);
    if (synth_cmd->parsed()) return run_synth(synth_args);
    if (bench_cmd->parsed()) return run_bench(bench_args);
    if (mos_cmd->parsed()) return run_mos(ratings_path);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return kExitCheckpoint;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
