#include "ktts/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "ktts/audio.hpp"
#include "ktts/csv.hpp"
#include "ktts/rng.hpp"

namespace ktts::corpus {

namespace {

std::vector<Utterance> parse_rows(const std::string& csv_path, bool with_audio,
                                  const std::string& wav_dir,
                                  std::vector<std::string>* warnings) {
  auto rows = csv::parse_file(csv_path);
  if (rows.empty()) throw DataError(csv_path + ": empty manifest");
  const auto& header = rows[0];
  if (header.size() != 3 || header[0] != "id" || header[1] != "transcript" ||
      header[2] != "category")
    throw DataError(csv_path + ": expected header id,transcript,category");

  const auto& known = default_categories();
  std::vector<Utterance> utts;
  std::set<std::string> seen;
  for (size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    std::string where = csv_path + " row " + std::to_string(r + 1);
    if (row.size() != 3)
      throw DataError(where + ": expected 3 fields, got " + std::to_string(row.size()));
    Utterance u;
    u.id = row[0];
    u.transcript = row[1];
    u.category = row[2];
    if (u.id.empty()) throw DataError(where + ": empty id");
    if (!seen.insert(u.id).second) throw DataError(where + ": duplicate id '" + u.id + "'");
    if (warnings && !u.category.empty() &&
        std::find(known.begin(), known.end(), u.category) == known.end())
      warnings->push_back(where + ": unknown category '" + u.category + "'");
    if (with_audio) {
      u.audio_path = wav_dir + "/" + u.id + ".wav";
      audio::WavInfo info;
      try {
        info = audio::wav_info(u.audio_path);
      } catch (const DataError& e) {
        throw DataError(where + ": " + e.what());
      }
      u.duration_s = info.duration_s();
      if (u.duration_s <= 0.0) throw DataError(where + ": zero-length audio");
    }
    utts.push_back(std::move(u));
  }
  return utts;
}

}  // namespace

void SplitSpec::validate() const {
  if (train_ratio <= 0 || val_ratio <= 0 || test_ratio <= 0)
    throw DataError("SplitSpec: ratios must be positive");
  if (std::abs(train_ratio + val_ratio + test_ratio - 1.0) > 1e-9)
    throw DataError("SplitSpec: ratios must sum to 1");
}

std::vector<Utterance> load_manifest(const std::string& csv_path, const std::string& wav_dir,
                                     std::vector<std::string>* warnings) {
  return parse_rows(csv_path, true, wav_dir, warnings);
}

std::vector<Utterance> load_manifest_rows(const std::string& csv_path) {
  return parse_rows(csv_path, false, "", nullptr);
}

void write_manifest(const std::string& csv_path, const std::vector<Utterance>& utts) {
  std::ofstream out(csv_path, std::ios::binary);
  if (!out) throw DataError(csv_path + ": cannot open for writing");
  out << "id,transcript,category\n";
  for (const Utterance& u : utts)
    out << csv::escape_field(u.id) << "," << csv::escape_field(u.transcript) << ","
        << csv::escape_field(u.category) << "\n";
  if (!out) throw DataError(csv_path + ": write failed");
}

SplitCounts split_counts(Index n, const SplitSpec& spec) {
  spec.validate();
  if (n < 3) throw DataError("split_counts: need at least 3 utterances, got " +
                             std::to_string(n));
  SplitCounts c;
  c.train = static_cast<Index>(std::llround(spec.train_ratio * static_cast<Scalar>(n)));
  c.val = static_cast<Index>(std::llround(spec.val_ratio * static_cast<Scalar>(n)));
  c.test = n - c.train - c.val;
  if (c.test < 0) throw DataError("split_counts: rounding left no test items");
  return c;
}

Split split_corpus(const std::vector<Utterance>& utts, const SplitSpec& spec) {
  SplitCounts counts = split_counts(static_cast<Index>(utts.size()), spec);
  std::vector<size_t> order(utts.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(spec.seed);
  rng.shuffle(order);
  Split out;
  for (size_t i = 0; i < order.size(); ++i) {
    const Utterance& u = utts[order[i]];
    if (static_cast<Index>(i) < counts.train)
      out.train.push_back(u);
    else if (static_cast<Index>(i) < counts.train + counts.val)
      out.val.push_back(u);
    else
      out.test.push_back(u);
  }
  return out;
}

CorpusStats corpus_stats(const std::vector<Utterance>& utts, int hist_bins) {
  if (utts.empty()) throw DataError("corpus_stats: empty corpus");
  if (hist_bins < 1) throw DataError("corpus_stats: need at least one histogram bin");
  CorpusStats s;
  s.count = static_cast<Index>(utts.size());
  Scalar total = 0;
  s.min_s = utts[0].duration_s;
  s.max_s = utts[0].duration_s;
  for (const Utterance& u : utts) {
    total += u.duration_s;
    s.min_s = std::min(s.min_s, u.duration_s);
    s.max_s = std::max(s.max_s, u.duration_s);
    s.per_category[u.category] += 1;
  }
  s.mean_s = total / static_cast<Scalar>(s.count);
  s.total_hours = total / 3600.0;
  s.hist_lo = s.min_s;
  s.hist_hi = s.max_s;
  s.hist.assign(static_cast<size_t>(hist_bins), 0);
  const Scalar width = (s.hist_hi - s.hist_lo) / hist_bins;
  for (const Utterance& u : utts) {
    size_t bin = 0;
    if (width > 0) {
      bin = static_cast<size_t>((u.duration_s - s.hist_lo) / width);
      bin = std::min(bin, static_cast<size_t>(hist_bins - 1));  // top edge inclusive
    }
    s.hist[bin] += 1;
  }
  return s;
}

std::string stats_human(const CorpusStats& s) {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(3);
  out << "utterances:   " << s.count << "\n";
  out << "total hours:  " << s.total_hours << "\n";
  out << "duration s:   min " << s.min_s << "  max " << s.max_s << "  mean " << s.mean_s
      << "\n";
  out << "categories:\n";
  for (const auto& [name, n] : s.per_category)
    out << "  " << (name.empty() ? "(none)" : name) << ": " << n << "\n";
  out << "histogram (" << s.hist.size() << " bins over [" << s.hist_lo << ", " << s.hist_hi
      << "] s):\n";
  for (size_t i = 0; i < s.hist.size(); ++i) out << "  bin " << i << ": " << s.hist[i] << "\n";
  return out.str();
}

std::string stats_kv(const CorpusStats& s) {
  std::ostringstream out;
  out.precision(12);
  out << "count = " << s.count << "\n";
  out << "total_hours = " << s.total_hours << "\n";
  out << "min_s = " << s.min_s << "\n";
  out << "max_s = " << s.max_s << "\n";
  out << "mean_s = " << s.mean_s << "\n";
  for (const auto& [name, n] : s.per_category)
    out << "category." << (name.empty() ? "(none)" : name) << " = " << n << "\n";
  out << "hist_lo = " << s.hist_lo << "\n";
  out << "hist_hi = " << s.hist_hi << "\n";
  for (size_t i = 0; i < s.hist.size(); ++i) out << "hist." << i << " = " << s.hist[i] << "\n";
  return out.str();
}

const std::vector<std::string>& default_categories() {
  static const std::vector<std::string> cats = {
      "News",     "Sport",    "Health",              "Interview",
      "Science",  "Religion", "Economic",            "General information",
      "Politics", "Education and literature", "Article", "Social"};
  return cats;
}

}  // namespace ktts::corpus
