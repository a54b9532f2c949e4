#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>

#include "viso/types.h"

// First-stage comment cleaning: case folding, whitespace and link removal,
// canonical composition, redundant-character collapsing and tone-mark
// placement. Every function here is pure.
namespace viso::normalize {

using WordSet = std::unordered_set<std::string>;

enum class Tone : std::uint8_t { kNone = 0, kGrave, kAcute, kHookAbove, kTilde, kDotBelow };

struct VowelForm {
  char32_t base;  // one of a ă â e ê i o ô ơ u ư y
  Tone tone;
  bool operator==(const VowelForm&) const = default;
};

// Precomposed lowercase Vietnamese vowel <-> (base vowel, tone). The table
// covers the 12 base vowels times the 6 tone states.
std::optional<VowelForm> split_vowel(char32_t c);
char32_t join_vowel(char32_t base, Tone tone);
bool is_vowel(char32_t c);

struct NormalizeConfig {
  bool lowercase = true;
  bool strip_urls = true;
  // Tokens exempt from repeat collapsing. Entries are stored in canonical
  // form (lowercase, NFC, normalized tone placement); use protect().
  WordSet protected_lexicon;

  void protect(std::string_view word);
  bool is_protected(std::string_view token) const;
};

// Reads a one-entry-per-line UTF-8 list. Blank lines and lines starting
// with '#' are skipped; surrounding whitespace is trimmed.
std::vector<std::string> read_word_list(const std::filesystem::path& path);

// Builds a config from a protected-lexicon file, merging in every word of
// every key of the teencode file (if given).
NormalizeConfig load_config(const std::filesystem::path& protected_path,
                            const std::optional<std::filesystem::path>& teencode_path = {});

std::string scrub(std::string_view text, const NormalizeConfig& cfg);
std::string normalize_unicode(std::string_view text);
std::string collapse_repeats(std::string_view text, const NormalizeConfig& cfg);
std::string normalize_diacritics(std::string_view token);

std::string phase1(std::string_view text, const NormalizeConfig& cfg);
RawComment phase1(RawComment comment, const NormalizeConfig& cfg);

}  // namespace viso::normalize
