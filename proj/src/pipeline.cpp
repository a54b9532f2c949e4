#include "viso/pipeline.h"

#include <chrono>

#include <spdlog/spdlog.h>

namespace viso {

namespace {

double elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

Prediction empty_prediction() {
  Prediction p;
  p.label = Label::kClean;
  p.probs = {1.0, 0.0, 0.0};
  p.empty_input = true;
  return p;
}

}  // namespace

ResourcePaths ResourcePaths::in_directory(const std::filesystem::path& dir) {
  return {dir / "protected.txt", dir / "teencode.tsv", dir / "stopwords.txt", dir / "lexicon.txt"};
}

Preprocessor Preprocessor::load(const ResourcePaths& paths) {
  Preprocessor p;
  p.normalize = normalize::load_config(paths.protected_lexicon, paths.teencode);
  p.lexicon = segment::Lexicon::load(paths.lexicon);
  p.teencode = segment::TeencodeMap::load(paths.teencode);
  p.stopwords = segment::StopwordSet::load(paths.stopwords);
  return p;
}

TokenSequence Preprocessor::operator()(std::string_view text, std::string_view id) const {
  auto cleaned = normalize::phase1(text, normalize);
  auto seq = segment::phase2(cleaned, lexicon, teencode, stopwords);
  seq.origin_id = std::string(id);
  return seq;
}

TextCnnClassifier::TextCnnClassifier(std::shared_ptr<const Preprocessor> pre,
                                     std::shared_ptr<const embed::EmbeddingTable> table,
                                     textcnn::Params<float> params,
                                     std::shared_ptr<const embed::SidecarStore> sidecar)
    : pre_(std::move(pre)),
      table_(std::move(table)),
      params_(std::move(params)),
      sidecar_(std::move(sidecar)),
      version_(textcnn::model_version(params_)) {
  if (!pre_ || !table_) throw Error("classifier requires preprocessing resources and embeddings");
  if (table_->dim() != params_.arch.dim) {
    throw Error("embedding dimension " + std::to_string(table_->dim()) +
                " does not match model dimension " + std::to_string(params_.arch.dim));
  }
}

Prediction TextCnnClassifier::classify(std::string_view id, std::string_view text) const {
  const auto start = std::chrono::steady_clock::now();
  if (sidecar_ && !id.empty() && sidecar_->contains(id)) {
    Prediction p = textcnn::predict_matrix(sidecar_->lookup(id), params_);
    p.latency_ms = elapsed_ms(start);
    return p;
  }
  if (sidecar_ && !id.empty()) {
    spdlog::debug("no sidecar embedding for '{}', using static table", id);
  }
  TokenSequence tokens = (*pre_)(text, id);
  if (tokens.empty()) {
    Prediction p = empty_prediction();
    p.latency_ms = elapsed_ms(start);
    return p;
  }
  Prediction p = textcnn::predict_matrix(embed::embed_sequence(tokens, *table_, params_.arch.max_len),
                                         params_);
  p.latency_ms = elapsed_ms(start);
  return p;
}

MnbClassifier::MnbClassifier(std::shared_ptr<const Preprocessor> pre, baseline::BaselineModel model)
    : pre_(std::move(pre)), model_(std::move(model)) {
  if (!pre_) throw Error("classifier requires preprocessing resources");
}

Prediction MnbClassifier::classify(std::string_view id, std::string_view text) const {
  const auto start = std::chrono::steady_clock::now();
  TokenSequence tokens = (*pre_)(text, id);
  Prediction p = tokens.empty() ? empty_prediction() : model_.predict(tokens);
  p.latency_ms = elapsed_ms(start);
  return p;
}

}  // namespace viso
