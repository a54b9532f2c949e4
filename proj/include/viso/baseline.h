#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string_view>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "viso/types.h"

// TF-IDF with unigram + bigram features and a multinomial naive Bayes
// classifier over them.
namespace viso::baseline {

// Sparse row: (column, value) pairs sorted by column.
using SparseVector = std::vector<std::pair<std::size_t, double>>;

class TfidfModel {
 public:
  // Bigram terms are the two tokens joined by a single space.
  static std::vector<std::string> terms(const TokenSequence& doc);

  // idf(t) = ln((1 + N) / (1 + df(t))) + 1. Columns are sorted by term.
  static TfidfModel fit(const std::vector<TokenSequence>& corpus);

  // Raw term counts over the fitted vocabulary; unseen terms are ignored.
  SparseVector counts(const TokenSequence& doc) const;
  // count * idf, then L2-normalized (zero vector stays zero).
  SparseVector weight(const SparseVector& counts) const;
  SparseVector transform(const TokenSequence& doc) const { return weight(counts(doc)); }

  std::size_t num_features() const { return vocabulary_.size(); }
  const std::vector<std::string>& vocabulary() const { return vocabulary_; }
  const std::vector<double>& idf() const { return idf_; }
  std::optional<std::size_t> column(std::string_view term) const;

  TfidfModel() = default;
  TfidfModel(std::vector<std::string> vocabulary, std::vector<double> idf);

 private:
  std::vector<std::string> vocabulary_;
  std::vector<double> idf_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct MnbModel {
  double alpha = 1.0;
  // -infinity for classes absent from training data.
  std::array<double, kNumClasses> class_log_prior{};
  // [class][feature] log P(feature | class)
  std::array<std::vector<double>, kNumClasses> feature_log_prob;

  std::size_t num_features() const { return feature_log_prob[0].size(); }
};

MnbModel train_mnb(const std::vector<SparseVector>& vectors, const std::vector<Label>& labels,
                   std::size_t num_features, double alpha = 1.0);

// Ties go to the lowest class index.
Prediction predict_mnb(const MnbModel& model, const SparseVector& vector);

// TF-IDF and MNB persisted together as one versioned JSON document.
struct BaselineModel {
  TfidfModel tfidf;
  MnbModel mnb;

  static BaselineModel fit(const std::vector<TokenSequence>& docs, const std::vector<Label>& labels,
                           double alpha = 1.0);
  Prediction predict(const TokenSequence& doc) const { return predict_mnb(mnb, tfidf.transform(doc)); }

  void save(const std::filesystem::path& path) const;
  static BaselineModel load(const std::filesystem::path& path);
};

}  // namespace viso::baseline
