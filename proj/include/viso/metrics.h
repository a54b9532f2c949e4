#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "viso/types.h"

namespace viso::metrics {

// Rows are the actual class, columns the predicted class.
struct ConfusionMatrix {
  std::array<std::array<std::uint64_t, kNumClasses>, kNumClasses> counts{};

  std::uint64_t total() const;
  std::uint64_t tp(std::size_t i) const { return counts[i][i]; }
  std::uint64_t fp(std::size_t i) const;
  std::uint64_t fn(std::size_t i) const;
  std::uint64_t tn(std::size_t i) const;
};

ConfusionMatrix confusion(std::span<const Label> preds, std::span<const Label> golds);

// Mean over classes of (tp + tn) / (tp + fp + tn + fn). This is the averaged
// one-vs-rest accuracy, not trace / total.
double one_vs_rest_accuracy(const ConfusionMatrix& cm);

struct MacroScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;  // harmonic mean of the macro precision and recall
};

// Per-class 0/0 ratios count as 0.
MacroScores macro_prf1(const ConfusionMatrix& cm);

struct MetricReport {
  double accuracy = 0.0;           // averaged one-vs-rest accuracy
  double precision_macro = 0.0;
  double recall_macro = 0.0;
  double f1 = 0.0;
  double standard_accuracy = 0.0;  // trace / total (supplementary)
  double mean_class_f1 = 0.0;      // mean of per-class F1 (supplementary)
  ConfusionMatrix confusion;
};

MetricReport report(const ConfusionMatrix& cm);

// Seeded shuffle of 0..n-1 split into k folds whose sizes differ by at most one.
std::vector<std::vector<std::size_t>> kfold_split(std::size_t n, std::size_t k = 5,
                                                  std::uint64_t seed = 0);

template <typename Item>
struct FoldData {
  std::vector<Item> train;
  std::vector<Item> test;
};

// Runs k-fold cross-validation. prepare_train (optional) sees only the
// training portion of each fold, which is where augmentation belongs; the
// test portion is passed to fit_predict untouched. fit_predict returns one
// prediction per test item.
template <typename Item>
std::vector<MetricReport> cross_validate(
    const std::vector<Item>& items, std::size_t k, std::uint64_t seed,
    const std::function<Label(const Item&)>& gold_of,
    const std::function<std::vector<Label>(const std::vector<Item>& train,
                                           const std::vector<Item>& test)>& fit_predict,
    const std::function<std::vector<Item>(std::vector<Item>)>& prepare_train = {}) {
  auto folds = kfold_split(items.size(), k, seed);
  std::vector<MetricReport> out;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    FoldData<Item> data;
    for (std::size_t g = 0; g < folds.size(); ++g) {
      auto& dst = g == f ? data.test : data.train;
      for (auto idx : folds[g]) dst.push_back(items[idx]);
    }
    if (prepare_train) data.train = prepare_train(std::move(data.train));
    std::vector<Label> preds = fit_predict(data.train, data.test);
    std::vector<Label> golds;
    for (const auto& it : data.test) golds.push_back(gold_of(it));
    out.push_back(report(confusion(preds, golds)));
  }
  return out;
}

}  // namespace viso::metrics
