#include "ktts/phonemizer.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <sstream>

namespace ktts::g2p {

namespace {

const std::array<std::string, 9> kClasses = {
    "voiced-stop", "voiced-fricative", "unvoiced-stop", "unvoiced-fricative",
    "vibrant",     "lateral",          "nasal",         "approximant",
    "vowel"};

constexpr const char* kWordBoundary = "<wb>";
constexpr const char* kPause = "<pause>";
constexpr const char* kSentenceEnd = "<sent>";

// Canonical marker characters produced by normalize_text.
constexpr char32_t kPauseMark = U'،';     // Arabic comma
constexpr char32_t kSentenceMark = U'.';

bool is_space(char32_t c) {
  return c == U' ' || c == U'\t' || c == U'\n' || c == U'\r' || c == U'\v' || c == U'\f' ||
         c == U' ';
}

bool is_digit(char32_t c) {
  return (c >= U'0' && c <= U'9') || (c >= U'٠' && c <= U'٩') ||
         (c >= U'۰' && c <= U'۹');
}

bool is_arabic_letter(char32_t c) {
  return (c >= U'ؠ' && c <= U'غ') || (c >= U'ف' && c <= U'ي') ||
         (c >= U'ٮ' && c <= U'ۓ') || c == U'ە';
}

bool is_pause_punct(char32_t c) {
  return c == U',' || c == U'،' || c == U';' || c == U'؛';
}

bool is_sentence_punct(char32_t c) {
  return c == U'.' || c == U'!' || c == U'?' || c == U'؟' || c == U'۔';
}

// Folded silently during normalization.
bool is_ignorable(char32_t c) {
  return c == U'ـ' /* tatweel */ || c == U'‌' || c == U'‍' ||
         c == U'‎' || c == U'‏' || c == U'﻿';
}

char32_t fold_letter(char32_t c) {
  switch (c) {
    case U'ك': return U'ک';  // Arabic kaf -> Kurdish kaf
    case U'ي': return U'ی';  // Arabic yeh -> Farsi/Kurdish yeh
    case U'ى': return U'ی';  // alef maksura -> yeh
    case U'آ': return U'ا';  // alef with madda -> alef
    default: return c;
  }
}

}  // namespace

// ---------------------------------------------------------------------------

std::u32string utf8_decode(const std::string& s) {
  std::u32string out;
  size_t i = 0;
  while (i < s.size()) {
    unsigned char b0 = static_cast<unsigned char>(s[i]);
    char32_t cp = 0;
    size_t len = 0;
    if (b0 < 0x80) {
      cp = b0;
      len = 1;
    } else if ((b0 & 0xE0) == 0xC0) {
      cp = b0 & 0x1F;
      len = 2;
    } else if ((b0 & 0xF0) == 0xE0) {
      cp = b0 & 0x0F;
      len = 3;
    } else if ((b0 & 0xF8) == 0xF0) {
      cp = b0 & 0x07;
      len = 4;
    } else {
      throw DataError("invalid UTF-8 at byte " + std::to_string(i));
    }
    if (i + len > s.size()) throw DataError("truncated UTF-8 at byte " + std::to_string(i));
    for (size_t k = 1; k < len; ++k) {
      unsigned char b = static_cast<unsigned char>(s[i + k]);
      if ((b & 0xC0) != 0x80)
        throw DataError("invalid UTF-8 continuation at byte " + std::to_string(i + k));
      cp = cp << 6 | (b & 0x3F);
    }
    out.push_back(cp);
    i += len;
  }
  return out;
}

std::string utf8_encode(char32_t cp) {
  std::string out;
  if (cp < 0x80) {
    out += static_cast<char>(cp);
  } else if (cp < 0x800) {
    out += static_cast<char>(0xC0 | cp >> 6);
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else if (cp < 0x10000) {
    out += static_cast<char>(0xE0 | cp >> 12);
    out += static_cast<char>(0x80 | (cp >> 6 & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else {
    out += static_cast<char>(0xF0 | cp >> 18);
    out += static_cast<char>(0x80 | (cp >> 12 & 0x3F));
    out += static_cast<char>(0x80 | (cp >> 6 & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  }
  return out;
}

std::string utf8_encode(const std::u32string& s) {
  std::string out;
  for (char32_t cp : s) out += utf8_encode(cp);
  return out;
}

std::string uplus(char32_t cp) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "U+%04X", static_cast<unsigned>(cp));
  return buf;
}

// ---------------------------------------------------------------------------

int PhonemeTable::intern(const std::string& symbol) {
  auto it = id_by_symbol_.find(symbol);
  if (it != id_by_symbol_.end()) return it->second;
  int id = static_cast<int>(symbols_.size());
  symbols_.push_back(symbol);
  id_by_symbol_.emplace(symbol, id);
  return id;
}

PhonemeTable PhonemeTable::from_text(const std::string& tsv, const std::string& source_name) {
  PhonemeTable t;
  t.intern(kWordBoundary);
  t.intern(kPause);
  t.intern(kSentenceEnd);

  std::istringstream in(tsv);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    bool blank = line.find_first_not_of(" \t") == std::string::npos;
    if (blank) continue;
    std::string where = source_name + " line " + std::to_string(lineno);
    size_t tab1 = line.find('\t');
    size_t tab2 = tab1 == std::string::npos ? std::string::npos : line.find('\t', tab1 + 1);
    if (tab2 == std::string::npos)
      throw DataError(where + ": expected grapheme<TAB>phoneme<TAB>class");
    PhonemeEntry e;
    std::string grapheme_utf8 = line.substr(0, tab1);
    e.phoneme = line.substr(tab1 + 1, tab2 - tab1 - 1);
    e.cls = line.substr(tab2 + 1);
    e.grapheme = utf8_decode(grapheme_utf8);
    if (e.grapheme.empty() || e.grapheme.size() > 2)
      throw DataError(where + ": grapheme must be 1-2 code points");
    if (e.phoneme.empty()) throw DataError(where + ": empty phoneme");
    if (std::find(kClasses.begin(), kClasses.end(), e.cls) == kClasses.end())
      throw DataError(where + ": unknown class '" + e.cls + "'");
    if (t.entry_by_grapheme_.count(grapheme_utf8))
      throw DataError(where + ": duplicate grapheme '" + grapheme_utf8 + "'");
    t.intern(e.phoneme);
    t.entry_by_grapheme_.emplace(grapheme_utf8, t.entries_.size());
    t.max_grapheme_len_ = std::max<Index>(t.max_grapheme_len_,
                                          static_cast<Index>(e.grapheme.size()));
    t.entries_.push_back(std::move(e));
  }
  if (t.entries_.empty()) throw DataError(source_name + ": no phoneme entries");
  if (!t.find_grapheme(U"وو"))
    throw DataError(source_name + ": the long-vowel digraph entry is missing");

  // Context-dependent vowel readings used by phonemize().
  if (t.find_grapheme(U"و")) t.intern("ʊ");  // "و" as a vowel
  if (t.find_grapheme(U"ی")) t.intern("i");        // "ی" as a vowel
  return t;
}

PhonemeTable PhonemeTable::load_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path + ": cannot open phoneme table");
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_text(buf.str(), path);
}

const PhonemeTable& PhonemeTable::builtin() {
  static const PhonemeTable table = from_text(default_tsv(), "<builtin>");
  return table;
}

int PhonemeTable::id_of(const std::string& symbol) const {
  auto it = id_by_symbol_.find(symbol);
  if (it == id_by_symbol_.end()) throw DataError("unknown phoneme symbol '" + symbol + "'");
  return it->second;
}

const std::string& PhonemeTable::symbol_of(int id) const {
  if (id < 0 || id >= vocab_size())
    throw DataError("phoneme id " + std::to_string(id) + " out of range");
  return symbols_[static_cast<size_t>(id)];
}

const PhonemeEntry* PhonemeTable::find_grapheme(const std::u32string& g) const {
  auto it = entry_by_grapheme_.find(utf8_encode(g));
  if (it == entry_by_grapheme_.end()) return nullptr;
  return &entries_[it->second];
}

void validate(const PhonemeSeq& seq, const PhonemeTable& table) {
  int prev = -1;
  for (int id : seq.ids) {
    if (id < 0 || id >= table.vocab_size())
      throw DataError("PhonemeSeq: id " + std::to_string(id) + " out of range");
    if (id == table.word_boundary_id() && prev == table.word_boundary_id())
      throw DataError("PhonemeSeq: adjacent word boundaries");
    prev = id;
  }
}

// ---------------------------------------------------------------------------

std::string normalize_text(const std::string& text) {
  std::u32string in = utf8_decode(text);
  std::u32string out;
  for (size_t i = 0; i < in.size(); ++i) {
    char32_t c = fold_letter(in[i]);
    if (is_ignorable(c)) continue;
    if (is_space(c)) {
      out.push_back(U' ');
      continue;
    }
    if (is_pause_punct(c)) {
      out.push_back(kPauseMark);
      continue;
    }
    if (is_sentence_punct(c)) {
      out.push_back(kSentenceMark);
      continue;
    }
    if (is_digit(c))
      throw DataError("normalize_text: digit " + uplus(in[i]) + " ('" + utf8_encode(in[i]) +
                      "') at code point index " + std::to_string(i) +
                      "; number expansion is not supported");
    if (!is_arabic_letter(c))
      throw DataError("normalize_text: unsupported code point " + uplus(in[i]) +
                      " at code point index " + std::to_string(i));
    out.push_back(c);
  }

  // Collapse space runs and adjacent duplicate markers, trim the ends.
  std::u32string collapsed;
  for (char32_t c : out) {
    if (c == U' ' && (collapsed.empty() || collapsed.back() == U' ')) continue;
    if ((c == kPauseMark || c == kSentenceMark) && !collapsed.empty() &&
        collapsed.back() == c)
      continue;
    collapsed.push_back(c);
  }
  while (!collapsed.empty() && collapsed.back() == U' ') collapsed.pop_back();
  return utf8_encode(collapsed);
}

namespace {

struct WordToken {
  const PhonemeEntry* entry;
  size_t cp_index;  // position in the normalized text, for diagnostics
};

// Greedy longest-match tokenization of one word.
std::vector<WordToken> tokenize_word(const std::u32string& word, size_t word_start,
                                     const PhonemeTable& table) {
  std::vector<WordToken> tokens;
  size_t p = 0;
  while (p < word.size()) {
    const PhonemeEntry* hit = nullptr;
    size_t hit_len = 0;
    size_t max_len = std::min(static_cast<size_t>(table.max_grapheme_len()), word.size() - p);
    for (size_t len = max_len; len >= 1; --len) {
      if (const PhonemeEntry* e = table.find_grapheme(word.substr(p, len))) {
        hit = e;
        hit_len = len;
        break;
      }
    }
    if (!hit)
      throw DataError("phonemize: unknown grapheme '" + utf8_encode(word.substr(p, 1)) +
                      "' at code point index " + std::to_string(word_start + p));
    tokens.push_back(WordToken{hit, word_start + p});
    p += hit_len;
  }
  return tokens;
}

enum class NeighborKind { none, vowel, consonant };

NeighborKind kind_of(const std::vector<WordToken>& tokens, size_t i) {
  if (i >= tokens.size()) return NeighborKind::none;
  return tokens[i].entry->cls == "vowel" ? NeighborKind::vowel : NeighborKind::consonant;
}

// Positional reading of the ambiguous letters: between two consonants or
// word-final after a consonant they are vowels; next to a vowel they are
// glides; anywhere else (word-initial included) they stay consonants.
// Ambiguous neighbors count as consonants, so the pass is order-free.
bool reads_as_vowel(const std::vector<WordToken>& tokens, size_t i) {
  NeighborKind left = i == 0 ? NeighborKind::none : kind_of(tokens, i - 1);
  NeighborKind right = kind_of(tokens, i + 1);
  if (left == NeighborKind::consonant && right == NeighborKind::consonant) return true;
  if (left == NeighborKind::consonant && right == NeighborKind::none) return true;
  return false;
}

}  // namespace

PhonemeSeq phonemize(const std::string& normalized_text, const PhonemeTable& table) {
  std::u32string in = utf8_decode(normalized_text);
  PhonemeSeq seq;
  bool prev_was_word = false;

  std::u32string word;
  size_t word_start = 0;

  auto flush_word = [&] {
    if (word.empty()) return;
    auto tokens = tokenize_word(word, word_start, table);
    if (prev_was_word) seq.ids.push_back(table.word_boundary_id());
    for (size_t i = 0; i < tokens.size(); ++i) {
      const PhonemeEntry& e = *tokens[i].entry;
      std::string symbol = e.phoneme;
      if (e.grapheme == U"و" && reads_as_vowel(tokens, i)) symbol = "ʊ";
      if (e.grapheme == U"ی" && reads_as_vowel(tokens, i)) symbol = "i";
      seq.ids.push_back(table.id_of(symbol));
    }
    word.clear();
    prev_was_word = true;
  };

  for (size_t i = 0; i < in.size(); ++i) {
    char32_t c = in[i];
    if (c == U' ') {
      flush_word();
    } else if (c == kPauseMark) {
      flush_word();
      seq.ids.push_back(table.pause_id());
      prev_was_word = false;
    } else if (c == kSentenceMark) {
      flush_word();
      seq.ids.push_back(table.sentence_end_id());
      prev_was_word = false;
    } else {
      if (word.empty()) word_start = i;
      word.push_back(c);
    }
  }
  flush_word();
  return seq;
}

std::string to_symbols(const PhonemeSeq& seq, const PhonemeTable& table) {
  std::string out;
  for (size_t i = 0; i < seq.ids.size(); ++i) {
    if (i) out += ' ';
    out += table.symbol_of(seq.ids[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Shipped inventory. Derived from the customized e-speak list for Central
// Kurdish; the source table's Letter/Example columns are unreliable, so this
// stays an editable data file (see data/phonemes_ckb.tsv) with the IPA
// symbols as the phoneme names. "و" and "ی" carry their consonant readings
// here; the vowel readings are applied positionally by phonemize().

const char* PhonemeTable::default_tsv() {
  return
      "# Central Kurdish (Sorani) phoneme inventory\n"
      "# grapheme<TAB>phoneme<TAB>class\n"
      "ب\tb\tvoiced-stop\n"
      "د\td\tvoiced-stop\n"
      "ج\tdʒ\tvoiced-stop\n"
      "گ\tg\tvoiced-stop\n"
      "ڤ\tv\tvoiced-fricative\n"
      "ز\tz\tvoiced-fricative\n"
      "ژ\tʒ\tvoiced-fricative\n"
      "غ\tɣ\tvoiced-fricative\n"
      "ع\tʕ\tvoiced-fricative\n"
      "ت\tt\tunvoiced-stop\n"
      "چ\ttʃ\tunvoiced-stop\n"
      "ک\tk\tunvoiced-stop\n"
      "پ\tp\tunvoiced-stop\n"
      "ق\tq\tunvoiced-stop\n"
      "ء\tʔ\tunvoiced-stop\n"
      "ئ\tʔ\tunvoiced-stop\n"
      "ه\th\tunvoiced-fricative\n"
      "ھ\th\tunvoiced-fricative\n"
      "ش\tʃ\tunvoiced-fricative\n"
      "س\ts\tunvoiced-fricative\n"
      "ف\tf\tunvoiced-fricative\n"
      "خ\tx\tunvoiced-fricative\n"
      "ح\tħ\tunvoiced-fricative\n"
      "ر\tɾ\tvibrant\n"
      "ڕ\tr\tvibrant\n"
      "ل\tl\tlateral\n"
      "ڵ\tɭ\tlateral\n"
      "م\tm\tnasal\n"
      "ن\tn\tnasal\n"
      "ی\tj\tapproximant\n"
      "و\tw\tapproximant\n"
      "ا\tä\tvowel\n"
      "ە\ta\tvowel\n"
      "ۆ\to\tvowel\n"
      "ێ\te\tvowel\n"
      "وو\tu\tvowel\n";
}

}  // namespace ktts::g2p
