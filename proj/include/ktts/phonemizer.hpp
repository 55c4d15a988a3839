#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "ktts/types.hpp"

namespace ktts::g2p {

// UTF-8 <-> code point helpers (errors report the byte offset).
std::u32string utf8_decode(const std::string& s);
std::string utf8_encode(const std::u32string& s);
std::string utf8_encode(char32_t cp);
std::string uplus(char32_t cp);  // "U+0627"

struct PhonemeEntry {
  std::u32string grapheme;  // 1-2 code points, unique within a table
  std::string phoneme;
  std::string cls;
};

// Phoneme inventory for Central Kurdish (Sorani, Arabic script), loaded from
// a `grapheme<TAB>phoneme<TAB>class` UTF-8 file so corrections never need a
// code change. Special tokens (word boundary, pause, sentence end) and the
// two context-dependent vowel readings (/U/ for "و", /i/ for "ی") receive
// ids after the file symbols.
class PhonemeTable {
 public:
  static PhonemeTable from_text(const std::string& tsv, const std::string& source_name);
  static PhonemeTable load_file(const std::string& path);
  // The shipped inventory, compiled in.
  static const PhonemeTable& builtin();

  int vocab_size() const { return static_cast<int>(symbols_.size()); }
  int id_of(const std::string& symbol) const;
  const std::string& symbol_of(int id) const;
  bool has_symbol(const std::string& symbol) const { return id_by_symbol_.count(symbol) > 0; }

  int word_boundary_id() const { return 0; }
  int pause_id() const { return 1; }
  int sentence_end_id() const { return 2; }

  const std::vector<PhonemeEntry>& entries() const { return entries_; }
  const PhonemeEntry* find_grapheme(const std::u32string& g) const;
  Index max_grapheme_len() const { return max_grapheme_len_; }

  // Default text of the shipped table (also installed at data/phonemes_ckb.tsv).
  static const char* default_tsv();

 private:
  std::vector<PhonemeEntry> entries_;
  std::unordered_map<std::string, size_t> entry_by_grapheme_;  // key: utf8 grapheme
  std::vector<std::string> symbols_;                           // id -> symbol
  std::unordered_map<std::string, int> id_by_symbol_;
  Index max_grapheme_len_ = 1;

  int intern(const std::string& symbol);
};

struct PhonemeSeq {
  std::vector<int> ids;
};

// Checks every id is in range and no two word boundaries sit adjacent.
void validate(const PhonemeSeq& seq, const PhonemeTable& table);

// Canonicalizes Sorani text: NFC-style letter folds (Arabic kaf/yeh to the
// Kurdish forms), whitespace collapsed to single spaces, sentence and pause
// punctuation mapped to canonical markers, ends trimmed. Digits and letters
// outside the Arabic script are rejected with the offending code point and
// its code point index.
std::string normalize_text(const std::string& text);

// Longest-match grapheme tokenization over the table (digraphs first), the
// positional vowel/consonant rule for "و" and "ی", word boundaries at
// spaces. Input must already be normalized.
PhonemeSeq phonemize(const std::string& normalized_text, const PhonemeTable& table);

// Symbols for a sequence, for display: e.g. "b u <wb> d".
std::string to_symbols(const PhonemeSeq& seq, const PhonemeTable& table);

}  // namespace ktts::g2p
