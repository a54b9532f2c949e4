#include "viso/segment.h"

#include <algorithm>

#include "viso/normalize.h"
#include "viso/utf8.h"

namespace viso::segment {

namespace {

std::string join_range(const std::vector<std::string>& tokens, std::size_t begin,
                       std::size_t n, char sep) {
  std::string out;
  for (std::size_t i = 0; i < n; ++i) {
    if (i) out.push_back(sep);
    out += tokens[begin + i];
  }
  return out;
}

std::string underscore_join(std::string_view phrase) {
  return utf8::join(utf8::split_whitespace(phrase), "_");
}

// Longest-match teencode expansion. Returns the number of key matches.
std::size_t expand(const std::vector<std::string>& in, const TeencodeMap& map,
                   std::vector<std::string>* out) {
  std::size_t matches = 0;
  std::size_t i = 0;
  while (i < in.size()) {
    std::size_t max_n = std::min(map.max_key_tokens(), in.size() - i);
    bool hit = false;
    for (std::size_t n = max_n; n >= 1; --n) {
      if (const auto* exp = map.find(join_range(in, i, n, ' '))) {
        if (out) out->insert(out->end(), exp->begin(), exp->end());
        i += n;
        ++matches;
        hit = true;
        break;
      }
    }
    if (!hit) {
      if (out) out->push_back(in[i]);
      ++i;
    }
  }
  return matches;
}

}  // namespace

Lexicon::Lexicon(const std::vector<std::string>& phrases) {
  for (const auto& p : phrases) add(p);
}

Lexicon Lexicon::load(const std::filesystem::path& path) {
  return Lexicon(normalize::read_word_list(path));
}

void Lexicon::add(std::string_view phrase) {
  auto parts = utf8::split_whitespace(phrase);
  if (parts.empty()) throw Error("empty lexicon entry");
  max_len_ = std::max(max_len_, parts.size());
  entries_.insert(utf8::join(parts, " "));
}

TeencodeMap TeencodeMap::load(const std::filesystem::path& tsv_path) {
  TeencodeMap map;
  for (const auto& line : normalize::read_word_list(tsv_path)) {
    auto tab = line.find('\t');
    if (tab == std::string::npos) throw Error("teencode line without tab: " + line);
    map.add(line.substr(0, tab), line.substr(tab + 1));
  }
  return map;
}

void TeencodeMap::add(std::string_view key, std::string_view expansion) {
  auto k = utf8::split_whitespace(key);
  auto e = utf8::split_whitespace(expansion);
  if (k.empty()) throw Error("empty teencode key");
  if (e.empty()) throw Error("empty teencode expansion for '" + std::string(key) + "'");
  if (k.size() > kMaxKeyTokens) throw Error("teencode key longer than 3 tokens: " + std::string(key));
  max_key_tokens_ = std::max(max_key_tokens_, k.size());
  entries_[utf8::join(k, " ")] = std::move(e);
}

const std::vector<std::string>* TeencodeMap::find(std::string_view key) const {
  auto it = entries_.find(std::string(key));
  return it == entries_.end() ? nullptr : &it->second;
}

StopwordSet::StopwordSet(std::initializer_list<std::string_view> words) {
  for (auto w : words) add(w);
}

StopwordSet StopwordSet::load(const std::filesystem::path& path) {
  StopwordSet s;
  for (const auto& w : normalize::read_word_list(path)) s.add(w);
  return s;
}

void StopwordSet::add(std::string_view word) {
  std::string w = underscore_join(word);
  if (!w.empty()) words_.insert(std::move(w));
}

TokenSequence word_segment(std::string_view text, const Lexicon& lexicon) {
  TokenSequence out;
  std::vector<std::string> syl = utf8::split_whitespace(text);
  std::size_t i = 0;
  while (i < syl.size()) {
    std::size_t max_n = std::min(lexicon.max_len(), syl.size() - i);
    std::size_t taken = 1;
    for (std::size_t n = max_n; n >= 2; --n) {
      if (lexicon.contains(join_range(syl, i, n, ' '))) {
        taken = n;
        break;
      }
    }
    out.tokens.push_back(join_range(syl, i, taken, '_'));
    i += taken;
  }
  return out;
}

TokenSequence de_teencode(const TokenSequence& tokens, const TeencodeMap& map) {
  TokenSequence out;
  out.origin_id = tokens.origin_id;
  out.tokens.reserve(tokens.size());
  expand(tokens.tokens, map, &out.tokens);
  return out;
}

TokenSequence remove_stopwords(const TokenSequence& tokens, const StopwordSet& stopwords) {
  TokenSequence out;
  out.origin_id = tokens.origin_id;
  for (const auto& t : tokens.tokens) {
    if (!stopwords.contains(t)) out.tokens.push_back(t);
  }
  return out;
}

TokenSequence phase2(std::string_view text, const Lexicon& lexicon, const TeencodeMap& map,
                     const StopwordSet& stopwords) {
  return remove_stopwords(de_teencode(word_segment(text, lexicon), map), stopwords);
}

CorpusStats corpus_stats(const std::vector<TokenSequence>& corpus, const TeencodeMap& map,
                         const StopwordSet& stopwords) {
  CorpusStats st;
  for (const auto& seq : corpus) {
    st.total_words += seq.size();
    std::vector<std::string> expanded;
    st.teencode_count += expand(seq.tokens, map, &expanded);
    st.stopword_count += static_cast<std::size_t>(std::count_if(
        expanded.begin(), expanded.end(), [&](const std::string& t) { return stopwords.contains(t); }));
  }
  if (st.total_words == 0) throw Error("empty corpus");
  st.teencode_pct = static_cast<double>(st.teencode_count) / static_cast<double>(st.total_words);
  st.stopword_pct = static_cast<double>(st.stopword_count) / static_cast<double>(st.total_words);
  return st;
}

}  // namespace viso::segment
