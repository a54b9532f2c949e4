#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "viso/rng.h"
#include "viso/segment.h"
#include "viso/types.h"

// Easy data augmentation (synonym replacement, random insertion, random
// swap, random deletion) and label balancing.
namespace viso::augment {

using SynonymMap = std::unordered_map<std::string, std::vector<std::string>>;

// Reads `word<TAB>syn1,syn2,...`; multi-syllable words are underscore-joined.
SynonymMap load_synonyms(const std::filesystem::path& path);

struct EdaConfig {
  double alpha = 0.15;
  std::size_t num_aug_cap = 16;  // max augmented copies per original
  std::uint64_t seed = 0;
  SynonymMap synonyms;
  segment::StopwordSet stopwords;  // never chosen for synonym replacement

  void validate() const;
};

enum class EdaKind : std::uint8_t { kSynonym = 0, kInsert, kSwap, kDelete };

// Strength is an operation count n for synonym/insert/swap and a deletion
// probability p for delete.
std::vector<std::string> eda_op(const std::vector<std::string>& tokens, EdaKind kind,
                                double strength, const EdaConfig& cfg, Rng& rng);

// n = max(1, round_half_up(alpha * len)).
std::size_t op_count(double alpha, std::size_t len);

LabeledExample augment_sentence(const LabeledExample& example, const EdaConfig& cfg, Rng& rng);

using LabelCounts = std::array<std::size_t, kNumClasses>;

LabelCounts count_labels(const std::vector<LabeledExample>& dataset);

// Appends augmented copies of OFFENSIVE and HATE examples, cycling through
// each label's originals in dataset order, until every label count equals
// its target. Originals are kept in place; CLEAN is never augmented. Copy k
// of a label uses an RNG seeded from (cfg.seed, label, k), so output is
// independent of evaluation order.
std::vector<LabeledExample> balance_dataset(const std::vector<LabeledExample>& dataset,
                                            const LabelCounts& targets, const EdaConfig& cfg);

}  // namespace viso::augment
