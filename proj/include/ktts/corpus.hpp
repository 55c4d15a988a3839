#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ktts/types.hpp"

namespace ktts::corpus {

struct Utterance {
  std::string id;
  std::string transcript;
  std::string category;
  std::string audio_path;  // empty when loaded without audio validation
  Scalar duration_s = 0.0;
};

struct SplitSpec {
  Scalar train_ratio = 0.70;
  Scalar val_ratio = 0.10;
  Scalar test_ratio = 0.20;
  uint64_t seed = 0;

  void validate() const;
};

// Manifest CSV schema: header `id,transcript,category`, WAV files under
// `<wav_dir>/<id>.wav`. Every row is validated against the audio, durations
// come from the WAV headers, and duplicate ids or bad files are reported
// with their row numbers. Category names outside the default list produce
// warnings, not errors.
std::vector<Utterance> load_manifest(const std::string& csv_path, const std::string& wav_dir,
                                     std::vector<std::string>* warnings = nullptr);

// Schema-only load: no audio lookup, durations stay zero. Used where only
// row identity matters (splitting).
std::vector<Utterance> load_manifest_rows(const std::string& csv_path);

void write_manifest(const std::string& csv_path, const std::vector<Utterance>& utts);

struct SplitCounts {
  Index train = 0, val = 0, test = 0;
};

// round(train_ratio * n) / round(val_ratio * n) / remainder.
SplitCounts split_counts(Index n, const SplitSpec& spec);

struct Split {
  std::vector<Utterance> train, val, test;
};

// Deterministic seeded shuffle, then the exact split_counts partition.
Split split_corpus(const std::vector<Utterance>& utts, const SplitSpec& spec);

struct CorpusStats {
  Index count = 0;
  Scalar total_hours = 0;
  Scalar min_s = 0, max_s = 0, mean_s = 0;
  std::map<std::string, Index> per_category;
  Scalar hist_lo = 0, hist_hi = 0;
  std::vector<Index> hist;
};

CorpusStats corpus_stats(const std::vector<Utterance>& utts, int hist_bins);

std::string stats_human(const CorpusStats& s);
std::string stats_kv(const CorpusStats& s);

// The twelve default topic categories.
const std::vector<std::string>& default_categories();

}  // namespace ktts::corpus
