#include "viso/baseline.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>

#include <nlohmann/json.hpp>

namespace viso::baseline {

namespace {

constexpr int kFormatVersion = 1;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

}  // namespace

std::vector<std::string> TfidfModel::terms(const TokenSequence& doc) {
  std::vector<std::string> out(doc.tokens.begin(), doc.tokens.end());
  for (std::size_t i = 0; i + 1 < doc.tokens.size(); ++i) {
    out.push_back(doc.tokens[i] + " " + doc.tokens[i + 1]);
  }
  return out;
}

TfidfModel::TfidfModel(std::vector<std::string> vocabulary, std::vector<double> idf)
    : vocabulary_(std::move(vocabulary)), idf_(std::move(idf)) {
  if (vocabulary_.size() != idf_.size()) throw Error("vocabulary/idf size mismatch");
  for (std::size_t i = 0; i < vocabulary_.size(); ++i) {
    if (!index_.emplace(vocabulary_[i], i).second) throw Error("duplicate vocabulary term");
    if (!(std::isfinite(idf_[i]) && idf_[i] > 0.0)) throw Error("idf must be finite and positive");
  }
}

TfidfModel TfidfModel::fit(const std::vector<TokenSequence>& corpus) {
  if (corpus.empty()) throw Error("empty corpus");
  std::map<std::string, std::size_t> df;
  for (const auto& doc : corpus) {
    auto t = terms(doc);
    std::set<std::string> uniq(t.begin(), t.end());
    for (const auto& term : uniq) ++df[term];
  }
  const double n = static_cast<double>(corpus.size());
  std::vector<std::string> vocab;
  std::vector<double> idf;
  for (const auto& [term, count] : df) {
    vocab.push_back(term);
    idf.push_back(std::log((1.0 + n) / (1.0 + static_cast<double>(count))) + 1.0);
  }
  return TfidfModel(std::move(vocab), std::move(idf));
}

std::optional<std::size_t> TfidfModel::column(std::string_view term) const {
  auto it = index_.find(std::string(term));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

SparseVector TfidfModel::counts(const TokenSequence& doc) const {
  std::map<std::size_t, double> acc;
  for (const auto& term : terms(doc)) {
    if (auto c = column(term)) acc[*c] += 1.0;
  }
  return SparseVector(acc.begin(), acc.end());
}

SparseVector TfidfModel::weight(const SparseVector& counts) const {
  SparseVector out;
  out.reserve(counts.size());
  double norm2 = 0.0;
  for (const auto& [col, c] : counts) {
    if (col >= idf_.size()) throw Error("feature index out of range");
    double v = c * idf_[col];
    out.emplace_back(col, v);
    norm2 += v * v;
  }
  if (norm2 > 0.0) {
    const double inv = 1.0 / std::sqrt(norm2);
    for (auto& [col, v] : out) v *= inv;
  }
  return out;
}

MnbModel train_mnb(const std::vector<SparseVector>& vectors, const std::vector<Label>& labels,
                   std::size_t num_features, double alpha) {
  if (vectors.empty()) throw Error("empty training input");
  if (vectors.size() != labels.size()) throw Error("vectors/labels length mismatch");
  if (!(alpha >= 0.0)) throw Error("alpha must be >= 0");

  MnbModel m;
  m.alpha = alpha;
  std::array<std::vector<double>, kNumClasses> feature_count;
  std::array<std::size_t, kNumClasses> class_count{};
  for (auto& fc : feature_count) fc.assign(num_features, 0.0);
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    const std::size_t c = label_index(labels[i]);
    ++class_count[c];
    for (const auto& [col, v] : vectors[i]) {
      if (col >= num_features) throw Error("feature index out of range");
      feature_count[c][col] += v;
    }
  }
  const double n = static_cast<double>(vectors.size());
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    m.class_log_prior[c] =
        class_count[c] == 0 ? kNegInf : std::log(static_cast<double>(class_count[c]) / n);
    double total = alpha * static_cast<double>(num_features);
    for (double v : feature_count[c]) total += v;
    m.feature_log_prob[c].resize(num_features);
    for (std::size_t j = 0; j < num_features; ++j) {
      m.feature_log_prob[c][j] = total > 0.0 ? std::log((feature_count[c][j] + alpha) / total) : kNegInf;
    }
  }
  return m;
}

Prediction predict_mnb(const MnbModel& model, const SparseVector& vector) {
  std::array<double, kNumClasses> joint = model.class_log_prior;
  for (const auto& [col, v] : vector) {
    if (col >= model.num_features()) throw Error("vector width does not match the model vocabulary");
    if (v == 0.0) continue;
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      if (joint[c] != kNegInf) joint[c] += v * model.feature_log_prob[c][col];
    }
  }
  std::size_t best = 0;
  for (std::size_t c = 1; c < kNumClasses; ++c) {
    if (joint[c] > joint[best]) best = c;
  }
  Prediction p;
  p.label = label_from_index(best);
  const double mx = joint[best];
  double sum = 0.0;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    p.probs[c] = joint[c] == kNegInf ? 0.0 : std::exp(joint[c] - mx);
    sum += p.probs[c];
  }
  for (auto& x : p.probs) x /= sum;
  return p;
}

BaselineModel BaselineModel::fit(const std::vector<TokenSequence>& docs,
                                 const std::vector<Label>& labels, double alpha) {
  BaselineModel m;
  m.tfidf = TfidfModel::fit(docs);
  std::vector<SparseVector> vecs;
  vecs.reserve(docs.size());
  for (const auto& d : docs) vecs.push_back(m.tfidf.transform(d));
  m.mnb = train_mnb(vecs, labels, m.tfidf.num_features(), alpha);
  return m;
}

void BaselineModel::save(const std::filesystem::path& path) const {
  nlohmann::json j;
  j["format"] = "viso-tfidf-mnb";
  j["version"] = kFormatVersion;
  j["ngram_range"] = {1, 2};
  j["vocabulary"] = tfidf.vocabulary();
  j["idf"] = tfidf.idf();
  j["alpha"] = mnb.alpha;
  nlohmann::json priors = nlohmann::json::array();
  for (double p : mnb.class_log_prior) {
    priors.push_back(p == kNegInf ? nlohmann::json(nullptr) : nlohmann::json(p));
  }
  j["class_log_prior"] = priors;
  nlohmann::json lik = nlohmann::json::array();
  for (const auto& row : mnb.feature_log_prob) lik.push_back(row);
  j["feature_log_prob"] = lik;
  std::ofstream out(path);
  if (!out) throw Error("cannot write model: " + path.string());
  out << j.dump() << '\n';
  if (!out) throw Error("write failed: " + path.string());
}

BaselineModel BaselineModel::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open model: " + path.string());
  BaselineModel m;
  try {
    auto j = nlohmann::json::parse(in);
    if (j.at("format") != "viso-tfidf-mnb") throw Error("not a baseline model file");
    if (j.at("version").get<int>() != kFormatVersion) throw Error("unsupported baseline model version");
    m.tfidf = TfidfModel(j.at("vocabulary").get<std::vector<std::string>>(),
                         j.at("idf").get<std::vector<double>>());
    m.mnb.alpha = j.at("alpha").get<double>();
    const auto& priors = j.at("class_log_prior");
    const auto& lik = j.at("feature_log_prob");
    if (priors.size() != kNumClasses || lik.size() != kNumClasses) throw Error("bad class count");
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      m.mnb.class_log_prior[c] = priors[c].is_null() ? kNegInf : priors[c].get<double>();
      m.mnb.feature_log_prob[c] = lik[c].get<std::vector<double>>();
      if (m.mnb.feature_log_prob[c].size() != m.tfidf.num_features()) {
        throw Error("likelihood width does not match vocabulary");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("corrupt baseline model: ") + e.what());
  }
  return m;
}

}  // namespace viso::baseline
