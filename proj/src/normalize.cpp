#include "viso/normalize.h"

#include <array>
#include <fstream>

#include "viso/utf8.h"

namespace viso::normalize {

namespace {

// Row order: tone none, grave, acute, hook above, tilde, dot below.
constexpr std::array<std::u32string_view, 12> kVowelRows = {
    U"aàáảãạ", U"ăằắẳẵặ", U"âầấẩẫậ", U"eèéẻẽẹ", U"êềếểễệ", U"iìíỉĩị",
    U"oòóỏõọ", U"ôồốổỗộ", U"ơờớởỡợ", U"uùúủũụ", U"ưừứửữự", U"yỳýỷỹỵ",
};

constexpr std::u32string_view kUrlSchemes[] = {U"http://", U"https://"};

bool is_trim_char(char32_t c) { return !utf8::is_alnum(c); }

std::u32string strip_url(std::u32string token) {
  if (token.starts_with(U"www.")) return {};
  std::size_t cut = std::u32string::npos;
  for (auto scheme : kUrlSchemes) {
    cut = std::min(cut, token.find(scheme));
  }
  if (cut != std::u32string::npos) token.resize(cut);
  return token;
}

std::u32string collapse_token(const std::u32string& token) {
  std::u32string out;
  out.reserve(token.size());
  for (char32_t c : token) {
    if (!out.empty() && out.back() == c && utf8::is_alpha(c)) continue;
    out.push_back(c);
  }
  return out;
}

std::string trim(std::string_view s) {
  auto is_ws = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
  while (!s.empty() && is_ws(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_ws(s.back())) s.remove_suffix(1);
  return std::string(s);
}

std::string canonical_word(std::string_view word) {
  return normalize_diacritics(normalize_unicode(utf8::to_lower(word)));
}

}  // namespace

std::optional<VowelForm> split_vowel(char32_t c) {
  for (const auto& row : kVowelRows) {
    auto pos = row.find(c);
    if (pos != std::u32string_view::npos) {
      return VowelForm{row[0], static_cast<Tone>(pos)};
    }
  }
  return std::nullopt;
}

char32_t join_vowel(char32_t base, Tone tone) {
  for (const auto& row : kVowelRows) {
    if (row[0] == base) return row[static_cast<std::size_t>(tone)];
  }
  throw Error("not a Vietnamese base vowel");
}

bool is_vowel(char32_t c) { return split_vowel(c).has_value(); }

void NormalizeConfig::protect(std::string_view word) {
  std::string w = canonical_word(word);
  if (!w.empty()) protected_lexicon.insert(std::move(w));
}

bool NormalizeConfig::is_protected(std::string_view token) const {
  if (protected_lexicon.empty()) return false;
  if (protected_lexicon.contains(std::string(token))) return true;
  // Also accept the token with surrounding punctuation removed ("kk," -> "kk").
  std::u32string u = utf8::decode(token);
  std::size_t b = 0, e = u.size();
  while (b < e && is_trim_char(u[b])) ++b;
  while (e > b && is_trim_char(u[e - 1])) --e;
  if (b == 0 && e == u.size()) return false;
  return protected_lexicon.contains(utf8::encode(u.substr(b, e - b)));
}

std::vector<std::string> read_word_list(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open word list: " + path.string());
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    out.push_back(std::move(t));
  }
  return out;
}

NormalizeConfig load_config(const std::filesystem::path& protected_path,
                            const std::optional<std::filesystem::path>& teencode_path) {
  NormalizeConfig cfg;
  for (const auto& w : read_word_list(protected_path)) cfg.protect(w);
  if (teencode_path) {
    for (const auto& line : read_word_list(*teencode_path)) {
      auto tab = line.find('\t');
      std::string key = line.substr(0, tab);
      for (const auto& piece : utf8::split_whitespace(key)) cfg.protect(piece);
    }
  }
  return cfg;
}

std::string scrub(std::string_view text, const NormalizeConfig& cfg) {
  std::string lowered = cfg.lowercase ? utf8::to_lower(text) : std::string(text);
  std::u32string u = utf8::decode(lowered);
  std::u32string out;
  out.reserve(u.size());
  std::u32string token;
  auto flush = [&] {
    if (token.empty()) return;
    if (cfg.strip_urls) token = strip_url(std::move(token));
    if (!token.empty()) {
      if (!out.empty()) out.push_back(U' ');
      out += token;
    }
    token.clear();
  };
  for (char32_t c : u) {
    if (utf8::is_space(c)) {
      flush();
    } else {
      token.push_back(c);
    }
  }
  flush();
  return utf8::encode(out);
}

std::string normalize_unicode(std::string_view text) { return utf8::nfc(text); }

std::string collapse_repeats(std::string_view text, const NormalizeConfig& cfg) {
  std::vector<std::string> tokens;
  std::string_view rest = text;
  while (true) {
    auto sp = rest.find(' ');
    std::string_view tok = rest.substr(0, sp);
    if (!tok.empty()) {
      if (cfg.is_protected(tok)) {
        tokens.emplace_back(tok);
      } else {
        tokens.push_back(utf8::encode(collapse_token(utf8::decode(tok))));
      }
    }
    if (sp == std::string_view::npos) break;
    rest.remove_prefix(sp + 1);
  }
  return utf8::join(tokens, " ");
}

// Tone placement for a single syllable:
//   1. one vowel: the mark sits on it;
//   2. two vowels: on the first; three vowels, or two vowels followed by a
//      consonant: on the second;
//   3. ê and ơ always carry the mark when present.
// "u" after "q" and "i" after "g" are counted as vowels. Tokens that are not
// a single syllable with exactly one tone mark are returned unchanged, as are
// tokens whose vowel cluster repeats a base letter back to back.
std::string normalize_diacritics(std::string_view token) {
  std::u32string u = utf8::decode(token);

  std::vector<VowelForm> forms(u.size(), VowelForm{0, Tone::kNone});
  std::size_t marks = 0;
  Tone tone = Tone::kNone;
  for (std::size_t i = 0; i < u.size(); ++i) {
    if (utf8::is_combining_mark(u[i])) return std::string(token);
    if (auto v = split_vowel(u[i])) {
      forms[i] = *v;
      if (v->tone != Tone::kNone) {
        ++marks;
        tone = v->tone;
      }
    }
  }
  if (marks != 1) return std::string(token);

  std::size_t first = u.size(), last = 0, runs = 0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    if (forms[i].base == 0) continue;
    if (i == 0 || forms[i - 1].base == 0) ++runs;
    if (first == u.size()) first = i;
    last = i;
  }
  if (runs != 1) return std::string(token);
  const std::size_t nucleus = last - first + 1;
  for (std::size_t i = first + 1; i <= last; ++i) {
    if (forms[i].base == forms[i - 1].base) return std::string(token);
  }
  const bool trailing_consonant = last + 1 < u.size() && utf8::is_alpha(u[last + 1]);

  std::size_t target = first;
  bool found_special = false;
  for (std::size_t i = first; i <= last; ++i) {
    if (forms[i].base == U'ê' || forms[i].base == U'ơ') {
      target = i;
      found_special = true;
      break;
    }
  }
  if (!found_special) {
    if (nucleus == 1) {
      target = first;
    } else if (nucleus == 2 && !trailing_consonant) {
      target = first;
    } else {
      target = first + 1;
    }
  }

  for (std::size_t i = first; i <= last; ++i) {
    u[i] = join_vowel(forms[i].base, i == target ? tone : Tone::kNone);
  }
  return utf8::encode(u);
}

std::string phase1(std::string_view text, const NormalizeConfig& cfg) {
  std::string s = scrub(text, cfg);
  s = normalize_unicode(s);
  s = collapse_repeats(s, cfg);
  std::vector<std::string> tokens;
  std::string_view rest = s;
  while (!rest.empty()) {
    auto sp = rest.find(' ');
    tokens.push_back(normalize_diacritics(rest.substr(0, sp)));
    if (sp == std::string_view::npos) break;
    rest.remove_prefix(sp + 1);
  }
  return utf8::join(tokens, " ");
}

RawComment phase1(RawComment comment, const NormalizeConfig& cfg) {
  comment.text = phase1(comment.text, cfg);
  return comment;
}

}  // namespace viso::normalize
