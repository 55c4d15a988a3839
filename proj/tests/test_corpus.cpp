#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <set>

#include "ktts/audio.hpp"
#include "ktts/corpus.hpp"
#include "ktts/csv.hpp"
#include "ktts/rng.hpp"
#include "testutil.hpp"

using namespace ktts;
using namespace ktts::corpus;

namespace {

void write_tone_wav(const std::string& path, Index n) {
  audio::write_wav(path, test::tone(n, 220.0));
}

std::string make_manifest(const test::TempDir& tmp, const std::vector<Utterance>& rows) {
  std::string path = tmp.file("manifest.csv");
  write_manifest(path, rows);
  return path;
}

}  // namespace

TEST_CASE("csv parser handles quoting and reports bad rows") {
  auto rows = csv::parse("a,b\n\"x,y\",\"he said \"\"hi\"\"\"\n", "<t>");
  REQUIRE(rows.size() == 2);
  CHECK(rows[1][0] == "x,y");
  CHECK(rows[1][1] == "he said \"hi\"");
  CHECK_THROWS_AS(csv::parse("a,\"unterminated\n", "<t>"), DataError);
  CHECK(csv::escape_field("plain") == "plain");
  CHECK(csv::escape_field("a,b") == "\"a,b\"");
}

TEST_CASE("load_manifest validates audio and measures durations") {
  test::TempDir tmp("manifest");
  write_tone_wav(tmp.file("utt1.wav"), 22050);
  write_tone_wav(tmp.file("utt2.wav"), 44100);
  std::vector<Utterance> rows = {{"utt1", "با", "News", "", 0},
                                 {"utt2", "دوو وشە", "Sport", "", 0}};
  std::string manifest = make_manifest(tmp, rows);

  auto utts = load_manifest(manifest, tmp.dir());
  REQUIRE(utts.size() == 2);
  CHECK(utts[0].duration_s == doctest::Approx(1.0));
  CHECK(utts[1].duration_s == doctest::Approx(2.0));
  CHECK(utts[0].audio_path == tmp.dir() + "/utt1.wav");
}

TEST_CASE("load_manifest reports duplicates, missing audio and bad wavs by row") {
  test::TempDir tmp("manifest_bad");
  write_tone_wav(tmp.file("a.wav"), 1000);

  std::ofstream(tmp.file("dup.csv")) << "id,transcript,category\na,x,News\na,y,News\n";
  CHECK_THROWS_WITH_AS(load_manifest(tmp.file("dup.csv"), tmp.dir()),
                       doctest::Contains("duplicate id 'a'"), DataError);

  std::ofstream(tmp.file("missing.csv")) << "id,transcript,category\nnope,x,News\n";
  CHECK_THROWS_WITH_AS(load_manifest(tmp.file("missing.csv"), tmp.dir()),
                       doctest::Contains("row 2"), DataError);

  // Stereo file: rejection propagates from the wav validator.
  {
    std::ofstream out(tmp.file("st.wav"), std::ios::binary);
    // Hand-written stereo header with an empty data chunk.
    auto u32 = [&](uint32_t v) { for (int i = 0; i < 4; ++i) out.put(char(v >> (8 * i))); };
    auto u16 = [&](uint16_t v) { for (int i = 0; i < 2; ++i) out.put(char(v >> (8 * i))); };
    out.write("RIFF", 4); u32(36 + 4); out.write("WAVE", 4);
    out.write("fmt ", 4); u32(16); u16(1); u16(2); u32(22050); u32(22050 * 4); u16(4); u16(16);
    out.write("data", 4); u32(4); u32(0);
  }
  std::ofstream(tmp.file("stereo.csv")) << "id,transcript,category\nst,x,News\n";
  CHECK_THROWS_WITH_AS(load_manifest(tmp.file("stereo.csv"), tmp.dir()),
                       doctest::Contains("channels: expected 1"), DataError);

  std::ofstream(tmp.file("header.csv")) << "wrong,header,here\n";
  CHECK_THROWS_AS(load_manifest(tmp.file("header.csv"), tmp.dir()), DataError);

  // Unknown categories warn instead of failing.
  std::ofstream(tmp.file("cat.csv")) << "id,transcript,category\na,x,NotATopic\n";
  std::vector<std::string> warnings;
  auto utts = load_manifest(tmp.file("cat.csv"), tmp.dir(), &warnings);
  (void)utts;
  REQUIRE(warnings.size() == 1);
  CHECK(warnings[0].find("NotATopic") != std::string::npos);
}

TEST_CASE("split counts reproduce the published sizes") {
  SplitSpec spec;
  SplitCounts c = split_counts(6078, spec);
  CHECK(c.train == 4255);
  CHECK(c.val == 608);
  CHECK(c.test == 1215);

  SplitCounts ten = split_counts(10, spec);
  CHECK(ten.train == 7);
  CHECK(ten.val == 1);
  CHECK(ten.test == 2);

  CHECK_THROWS_AS(split_counts(2, spec), DataError);
}

TEST_CASE("split partitions exactly and deterministically") {
  SplitSpec spec;
  spec.seed = 42;
  Rng rng(3);
  for (int trial = 0; trial < 40; ++trial) {
    Index n = 3 + static_cast<Index>(rng.integer(9998));
    std::vector<Utterance> utts(static_cast<size_t>(n));
    for (Index i = 0; i < n; ++i) utts[static_cast<size_t>(i)].id = std::to_string(i);

    Split s = split_corpus(utts, spec);
    SplitCounts c = split_counts(n, spec);
    CHECK(static_cast<Index>(s.train.size()) == c.train);
    CHECK(static_cast<Index>(s.val.size()) == c.val);
    CHECK(static_cast<Index>(s.test.size()) == c.test);

    std::set<std::string> seen;
    for (const auto* part : {&s.train, &s.val, &s.test})
      for (const Utterance& u : *part) CHECK(seen.insert(u.id).second);
    CHECK(static_cast<Index>(seen.size()) == n);
  }

  // Same seed, same membership.
  std::vector<Utterance> utts(100);
  for (size_t i = 0; i < 100; ++i) utts[i].id = std::to_string(i);
  Split a = split_corpus(utts, spec);
  Split b = split_corpus(utts, spec);
  for (size_t i = 0; i < a.train.size(); ++i) CHECK(a.train[i].id == b.train[i].id);
  SplitSpec other = spec;
  other.seed = 43;
  Split c2 = split_corpus(utts, other);
  bool same = a.train.size() == c2.train.size();
  if (same)
    for (size_t i = 0; i < a.train.size(); ++i) same = same && a.train[i].id == c2.train[i].id;
  CHECK(!same);
}

TEST_CASE("corpus_stats aggregates durations and categories") {
  std::vector<Utterance> utts = {{"a", "", "News", "", 1.0}, {"b", "", "Sport", "", 3.0}};
  CorpusStats s = corpus_stats(utts, 4);
  CHECK(s.count == 2);
  CHECK(s.mean_s == doctest::Approx(2.0));
  CHECK(s.total_hours == doctest::Approx(4.0 / 3600.0));
  CHECK(s.min_s == 1.0);
  CHECK(s.max_s == 3.0);
  CHECK(s.per_category.at("News") == 1);
  CHECK(s.hist.size() == 4);
  CHECK(s.hist.front() == 1);
  CHECK(s.hist.back() == 1);

  std::vector<Utterance> one = {{"a", "", "News", "", 2.5}};
  CorpusStats s1 = corpus_stats(one, 3);
  CHECK(s1.min_s == s1.max_s);
  CHECK(s1.max_s == s1.mean_s);

  CHECK_THROWS_AS(corpus_stats({}, 4), DataError);
}

TEST_CASE("stats echo the published corpus aggregates on a shaped fixture") {
  // 6078 rows: one at the published minimum, one at the maximum, the rest
  // pinned so the mean lands on 8.076 s (and the total on ~13.63 h).
  const Index n = 6078;
  const Scalar mean = 8.076, lo = 0.502, hi = 16.781;
  const Scalar rest = (mean * n - lo - hi) / static_cast<Scalar>(n - 2);
  std::vector<Utterance> utts(static_cast<size_t>(n));
  for (Index i = 0; i < n; ++i) {
    utts[static_cast<size_t>(i)].id = std::to_string(i);
    utts[static_cast<size_t>(i)].duration_s = rest;
  }
  utts[0].duration_s = lo;
  utts[1].duration_s = hi;

  CorpusStats s = corpus_stats(utts, 20);
  CHECK(s.count == 6078);
  CHECK(s.min_s == doctest::Approx(0.502).epsilon(1e-12));
  CHECK(s.max_s == doctest::Approx(16.781).epsilon(1e-12));
  CHECK(s.mean_s == doctest::Approx(8.076).epsilon(1e-9));
  CHECK(s.total_hours == doctest::Approx(13.63).epsilon(1e-3));
}

TEST_CASE("stats are invariant to permutations of the utterance list") {
  Rng rng(9);
  std::vector<Utterance> utts;
  for (int i = 0; i < 50; ++i)
    utts.push_back({std::to_string(i), "", i % 2 ? "News" : "Sport", "",
                    0.5 + 0.1 * static_cast<Scalar>(rng.integer(100))});
  CorpusStats a = corpus_stats(utts, 7);
  rng.shuffle(utts);
  CorpusStats b = corpus_stats(utts, 7);
  CHECK(a.mean_s == b.mean_s);
  CHECK(a.min_s == b.min_s);
  CHECK(a.max_s == b.max_s);
  CHECK(a.hist == b.hist);
  CHECK(a.per_category == b.per_category);
}

TEST_CASE("kv stats output round-trips through the config parser") {
  std::vector<Utterance> utts = {{"a", "", "News", "", 1.0}, {"b", "", "Sport", "", 3.0}};
  std::string kv = stats_kv(corpus_stats(utts, 2));
  auto map = cfg::parse_kv(kv);
  CHECK(cfg::get_int(map, "count", 0) == 2);
  CHECK(cfg::get_scalar(map, "mean_s", 0) == doctest::Approx(2.0));
}
