#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace viso {

// All library failures surface as viso::Error; the message is the contract.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Label : std::uint8_t { kClean = 0, kOffensive = 1, kHate = 2 };

inline constexpr std::size_t kNumClasses = 3;
inline constexpr std::array<Label, kNumClasses> kAllLabels = {
    Label::kClean, Label::kOffensive, Label::kHate};

inline std::size_t label_index(Label l) { return static_cast<std::size_t>(l); }

// Wire code used by the streaming output: CLEAN -> 0.0, OFFENSIVE -> 1.0,
// HATE -> 2.0.
inline double label_code(Label l) { return static_cast<double>(label_index(l)); }

std::string_view label_name(Label l);
Label label_from_index(std::size_t i);
// Accepts "CLEAN", "OFFENSIVE", "HATE" (case-insensitive) and the numeric
// codes "0", "1", "2".
Label parse_label(std::string_view s);

// One social-media comment as fetched from a source.
struct RawComment {
  std::string id;
  std::string text;
  std::string source;
  std::int64_t fetched_at = 0;  // UTC milliseconds
};

struct TokenSequence {
  std::vector<std::string> tokens;
  std::string origin_id;

  std::size_t size() const { return tokens.size(); }
  bool empty() const { return tokens.empty(); }
  bool operator==(const TokenSequence&) const = default;
};

struct LabeledExample {
  TokenSequence tokens;
  Label label = Label::kClean;
  bool operator==(const LabeledExample&) const = default;
};

struct Prediction {
  Label label = Label::kClean;
  std::array<double, kNumClasses> probs{};
  double latency_ms = 0.0;
  bool empty_input = false;

  double code() const { return label_code(label); }
};

}  // namespace viso
