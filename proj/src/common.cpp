#include <algorithm>
#include <cctype>
#include <string>

#include "viso/rng.h"
#include "viso/types.h"

namespace viso {

std::string_view label_name(Label l) {
  switch (l) {
    case Label::kClean:
      return "CLEAN";
    case Label::kOffensive:
      return "OFFENSIVE";
    case Label::kHate:
      return "HATE";
  }
  return "CLEAN";
}

Label label_from_index(std::size_t i) {
  if (i >= kNumClasses) throw Error("label index out of range: " + std::to_string(i));
  return static_cast<Label>(i);
}

Label parse_label(std::string_view s) {
  std::string up(s);
  std::transform(up.begin(), up.end(), up.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  if (up == "CLEAN" || up == "0" || up == "0.0") return Label::kClean;
  if (up == "OFFENSIVE" || up == "1" || up == "1.0") return Label::kOffensive;
  if (up == "HATE" || up == "2" || up == "2.0") return Label::kHate;
  throw Error("unknown label: " + std::string(s));
}

std::uint64_t Rng::index(std::uint64_t n) {
  if (n == 0) throw Error("Rng::index called with n = 0");
  // Rejection sampling keeps the draw unbiased.
  const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % n);
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % n;
}

double Rng::unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  return mix_seed(mix_seed(mix_seed(seed) ^ a) ^ b);
}

}  // namespace viso
