#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "viso/types.h"

// Second-stage processing: lexicon-driven word segmentation, teencode
// expansion and stopword removal, applied in that order.
namespace viso::segment {

// Multi-syllable word phrases. Phrases are stored with single spaces between
// syllables; segmented output joins them with '_'.
class Lexicon {
 public:
  Lexicon() = default;
  explicit Lexicon(const std::vector<std::string>& phrases);

  static Lexicon load(const std::filesystem::path& path);

  void add(std::string_view phrase);
  bool contains(std::string_view phrase) const { return entries_.contains(std::string(phrase)); }
  std::size_t max_len() const { return max_len_; }
  std::size_t size() const { return entries_.size(); }

 private:
  std::unordered_set<std::string> entries_;
  std::size_t max_len_ = 1;
};

// Teencode n-gram (n <= 3, space separated) -> expansion tokens.
class TeencodeMap {
 public:
  static constexpr std::size_t kMaxKeyTokens = 3;

  TeencodeMap() = default;
  static TeencodeMap load(const std::filesystem::path& tsv_path);

  void add(std::string_view key, std::string_view expansion);
  const std::vector<std::string>* find(std::string_view key) const;
  std::size_t size() const { return entries_.size(); }
  std::size_t max_key_tokens() const { return max_key_tokens_; }

 private:
  std::unordered_map<std::string, std::vector<std::string>> entries_;
  std::size_t max_key_tokens_ = 1;
};

// Stopwords compared whole against segmented tokens; multi-syllable entries
// are stored underscore-joined.
class StopwordSet {
 public:
  StopwordSet() = default;
  StopwordSet(std::initializer_list<std::string_view> words);
  static StopwordSet load(const std::filesystem::path& path);

  void add(std::string_view word);
  bool contains(std::string_view token) const { return words_.contains(std::string(token)); }
  std::size_t size() const { return words_.size(); }

 private:
  std::unordered_set<std::string> words_;
};

TokenSequence word_segment(std::string_view text, const Lexicon& lexicon);
TokenSequence de_teencode(const TokenSequence& tokens, const TeencodeMap& map);
TokenSequence remove_stopwords(const TokenSequence& tokens, const StopwordSet& stopwords);
TokenSequence phase2(std::string_view text, const Lexicon& lexicon, const TeencodeMap& map,
                     const StopwordSet& stopwords);

struct CorpusStats {
  std::size_t teencode_count = 0;
  double teencode_pct = 0.0;  // fraction of total_words, in [0, 1]
  std::size_t stopword_count = 0;
  double stopword_pct = 0.0;
  std::size_t total_words = 0;
};

// Counts over segmented (not yet de-teencoded) token sequences. Each
// matched teencode key occurrence counts once; stopwords are counted after
// expansion, i.e. exactly the tokens the stopword step would remove.
CorpusStats corpus_stats(const std::vector<TokenSequence>& corpus, const TeencodeMap& map,
                         const StopwordSet& stopwords);

}  // namespace viso::segment
