#include "viso/augment.h"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "viso/normalize.h"
#include "viso/utf8.h"

namespace viso::augment {

namespace {

const std::vector<std::string>* synonyms_of(const EdaConfig& cfg, const std::string& word) {
  auto it = cfg.synonyms.find(word);
  if (it == cfg.synonyms.end() || it->second.empty()) return nullptr;
  return &it->second;
}

std::vector<std::string> synonym_replace(std::vector<std::string> tokens, std::size_t n,
                                         const EdaConfig& cfg, Rng& rng) {
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (!cfg.stopwords.contains(tokens[i]) && synonyms_of(cfg, tokens[i])) candidates.push_back(i);
  }
  shuffle(candidates, rng);
  candidates.resize(std::min(n, candidates.size()));
  for (std::size_t pos : candidates) {
    const auto& syns = *synonyms_of(cfg, tokens[pos]);
    tokens[pos] = syns[rng.index(syns.size())];
  }
  return tokens;
}

// Inserts a synonym of a random token at a random position. When no token
// has synonyms, a copy of a random token is inserted instead so the output
// length is always len + n.
std::vector<std::string> random_insert(std::vector<std::string> tokens, std::size_t n,
                                       const EdaConfig& cfg, Rng& rng) {
  for (std::size_t k = 0; k < n; ++k) {
    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (synonyms_of(cfg, tokens[i])) candidates.push_back(i);
    }
    std::string word;
    if (candidates.empty()) {
      word = tokens[rng.index(tokens.size())];
    } else {
      const auto& syns = *synonyms_of(cfg, tokens[candidates[rng.index(candidates.size())]]);
      word = syns[rng.index(syns.size())];
    }
    auto pos = rng.index(tokens.size() + 1);
    tokens.insert(tokens.begin() + static_cast<std::ptrdiff_t>(pos), std::move(word));
  }
  return tokens;
}

std::vector<std::string> random_swap(std::vector<std::string> tokens, std::size_t n, Rng& rng) {
  if (tokens.size() < 2) return tokens;
  for (std::size_t k = 0; k < n; ++k) {
    auto i = rng.index(tokens.size());
    auto j = rng.index(tokens.size());
    // Same retry budget as the reference EDA implementation.
    for (int tries = 0; j == i && tries < 3; ++tries) j = rng.index(tokens.size());
    std::swap(tokens[i], tokens[j]);
  }
  return tokens;
}

std::vector<std::string> random_delete(const std::vector<std::string>& tokens, double p, Rng& rng) {
  std::vector<std::string> out;
  for (const auto& t : tokens) {
    if (rng.unit() >= p) out.push_back(t);
  }
  if (out.empty()) out.push_back(tokens[rng.index(tokens.size())]);
  return out;
}

}  // namespace

SynonymMap load_synonyms(const std::filesystem::path& path) {
  SynonymMap map;
  for (const auto& line : normalize::read_word_list(path)) {
    auto tab = line.find('\t');
    if (tab == std::string::npos) throw Error("synonym line without tab: " + line);
    std::string word = utf8::join(utf8::split_whitespace(line.substr(0, tab)), "_");
    std::string rest = line.substr(tab + 1);
    auto& syns = map[word];
    std::size_t start = 0;
    while (start <= rest.size()) {
      auto comma = rest.find(',', start);
      std::string s = utf8::join(
          utf8::split_whitespace(rest.substr(start, comma == std::string::npos ? std::string::npos
                                                                                : comma - start)),
          "_");
      if (!s.empty() && s != word) syns.push_back(std::move(s));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
  }
  return map;
}

void EdaConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error("alpha must be in [0, 1]");
}

std::size_t op_count(double alpha, std::size_t len) {
  // The small epsilon keeps exact halves (0.15 * 10) from rounding down.
  double x = std::floor(alpha * static_cast<double>(len) + 0.5 + 1e-9);
  return std::max<std::size_t>(1, static_cast<std::size_t>(x));
}

std::vector<std::string> eda_op(const std::vector<std::string>& tokens, EdaKind kind,
                                double strength, const EdaConfig& cfg, Rng& rng) {
  if (tokens.empty()) throw Error("empty sequence");
  if (kind == EdaKind::kDelete) {
    if (!(strength >= 0.0 && strength <= 1.0)) throw Error("deletion probability must be in [0, 1]");
    return random_delete(tokens, strength, rng);
  }
  if (!(strength >= 0.0)) throw Error("operation count must be >= 0");
  auto n = static_cast<std::size_t>(strength);
  switch (kind) {
    case EdaKind::kSynonym:
      return synonym_replace(tokens, n, cfg, rng);
    case EdaKind::kInsert:
      return random_insert(tokens, n, cfg, rng);
    case EdaKind::kSwap:
      return random_swap(tokens, n, rng);
    case EdaKind::kDelete:
      break;
  }
  return tokens;
}

LabeledExample augment_sentence(const LabeledExample& example, const EdaConfig& cfg, Rng& rng) {
  const auto& tokens = example.tokens.tokens;
  if (tokens.empty()) throw Error("empty sequence");
  auto kind = static_cast<EdaKind>(rng.index(4));
  double strength = kind == EdaKind::kDelete
                        ? cfg.alpha
                        : static_cast<double>(op_count(cfg.alpha, tokens.size()));
  LabeledExample out;
  out.label = example.label;
  out.tokens.origin_id = example.tokens.origin_id;
  out.tokens.tokens = eda_op(tokens, kind, strength, cfg, rng);
  return out;
}

LabelCounts count_labels(const std::vector<LabeledExample>& dataset) {
  LabelCounts c{};
  for (const auto& ex : dataset) ++c[label_index(ex.label)];
  return c;
}

std::vector<LabeledExample> balance_dataset(const std::vector<LabeledExample>& dataset,
                                            const LabelCounts& targets, const EdaConfig& cfg) {
  cfg.validate();
  const LabelCounts current = count_labels(dataset);
  for (std::size_t l = 0; l < kNumClasses; ++l) {
    if (targets[l] < current[l]) throw Error("target below current");
  }
  if (targets[label_index(Label::kClean)] != current[label_index(Label::kClean)]) {
    throw Error("CLEAN target must equal the current CLEAN count");
  }

  std::vector<LabeledExample> out = dataset;
  for (Label label : {Label::kOffensive, Label::kHate}) {
    const std::size_t l = label_index(label);
    const std::size_t need = targets[l] - current[l];
    if (need == 0) continue;
    std::vector<const LabeledExample*> originals;
    for (const auto& ex : dataset) {
      if (ex.label == label) originals.push_back(&ex);
    }
    if (originals.empty()) {
      throw Error("cannot augment " + std::string(label_name(label)) + ": no originals");
    }
    if (need > cfg.num_aug_cap * originals.size()) throw Error("augmentation cap exceeded");
    for (std::size_t k = 0; k < need; ++k) {
      const LabeledExample& src = *originals[k % originals.size()];
      Rng rng(derive_seed(cfg.seed, l, k));
      LabeledExample aug = augment_sentence(src, cfg, rng);
      aug.tokens.origin_id = src.tokens.origin_id + "#eda" + std::to_string(k / originals.size() + 1);
      out.push_back(std::move(aug));
    }
  }
  return out;
}

}  // namespace viso::augment
