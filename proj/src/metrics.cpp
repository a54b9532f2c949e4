#include "viso/metrics.h"

#include <numeric>

#include "viso/rng.h"

namespace viso::metrics {

namespace {

double ratio(std::uint64_t num, std::uint64_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

void require_nonempty(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw Error("empty confusion matrix");
}

}  // namespace

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t t = 0;
  for (const auto& row : counts) t += std::accumulate(row.begin(), row.end(), std::uint64_t{0});
  return t;
}

std::uint64_t ConfusionMatrix::fp(std::size_t i) const {
  std::uint64_t s = 0;
  for (std::size_t r = 0; r < kNumClasses; ++r) {
    if (r != i) s += counts[r][i];
  }
  return s;
}

std::uint64_t ConfusionMatrix::fn(std::size_t i) const {
  std::uint64_t s = 0;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    if (c != i) s += counts[i][c];
  }
  return s;
}

std::uint64_t ConfusionMatrix::tn(std::size_t i) const { return total() - tp(i) - fp(i) - fn(i); }

ConfusionMatrix confusion(std::span<const Label> preds, std::span<const Label> golds) {
  if (preds.size() != golds.size()) throw Error("length mismatch between predictions and golds");
  if (preds.empty()) throw Error("empty input");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    ++cm.counts[label_index(golds[i])][label_index(preds[i])];
  }
  return cm;
}

double one_vs_rest_accuracy(const ConfusionMatrix& cm) {
  require_nonempty(cm);
  double sum = 0.0;
  for (std::size_t i = 0; i < kNumClasses; ++i) {
    sum += ratio(cm.tp(i) + cm.tn(i), cm.tp(i) + cm.fp(i) + cm.tn(i) + cm.fn(i));
  }
  return sum / static_cast<double>(kNumClasses);
}

MacroScores macro_prf1(const ConfusionMatrix& cm) {
  require_nonempty(cm);
  MacroScores s;
  for (std::size_t i = 0; i < kNumClasses; ++i) {
    s.precision += ratio(cm.tp(i), cm.tp(i) + cm.fp(i));
    s.recall += ratio(cm.tp(i), cm.tp(i) + cm.fn(i));
  }
  s.precision /= static_cast<double>(kNumClasses);
  s.recall /= static_cast<double>(kNumClasses);
  const double denom = s.precision + s.recall;
  s.f1 = denom == 0.0 ? 0.0 : 2.0 * s.precision * s.recall / denom;
  return s;
}

MetricReport report(const ConfusionMatrix& cm) {
  MetricReport r;
  r.confusion = cm;
  r.accuracy = one_vs_rest_accuracy(cm);
  auto m = macro_prf1(cm);
  r.precision_macro = m.precision;
  r.recall_macro = m.recall;
  r.f1 = m.f1;
  std::uint64_t trace = 0;
  double f1_sum = 0.0;
  for (std::size_t i = 0; i < kNumClasses; ++i) {
    trace += cm.tp(i);
    double p = ratio(cm.tp(i), cm.tp(i) + cm.fp(i));
    double rc = ratio(cm.tp(i), cm.tp(i) + cm.fn(i));
    f1_sum += (p + rc) == 0.0 ? 0.0 : 2.0 * p * rc / (p + rc);
  }
  r.standard_accuracy = ratio(trace, cm.total());
  r.mean_class_f1 = f1_sum / static_cast<double>(kNumClasses);
  return r;
}

std::vector<std::vector<std::size_t>> kfold_split(std::size_t n, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw Error("k must be >= 2");
  if (n < k) throw Error("fewer items than folds");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(seed);
  shuffle(idx, rng);
  std::vector<std::vector<std::size_t>> folds(k);
  std::size_t pos = 0;
  for (std::size_t f = 0; f < k; ++f) {
    std::size_t size = n / k + (f < n % k ? 1 : 0);
    folds[f].assign(idx.begin() + static_cast<std::ptrdiff_t>(pos),
                    idx.begin() + static_cast<std::ptrdiff_t>(pos + size));
    pos += size;
  }
  return folds;
}

}  // namespace viso::metrics
