#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include "viso/baseline.h"
#include "viso/embed.h"
#include "viso/normalize.h"
#include "viso/segment.h"
#include "viso/textcnn.h"
#include "viso/types.h"

namespace viso {

struct ResourcePaths {
  std::filesystem::path protected_lexicon;
  std::filesystem::path teencode;
  std::filesystem::path stopwords;
  std::filesystem::path lexicon;

  // protected.txt, teencode.tsv, stopwords.txt, lexicon.txt inside dir.
  static ResourcePaths in_directory(const std::filesystem::path& dir);
};

// Everything needed to turn raw comment text into model tokens.
struct Preprocessor {
  normalize::NormalizeConfig normalize;
  segment::Lexicon lexicon;
  segment::TeencodeMap teencode;
  segment::StopwordSet stopwords;

  static Preprocessor load(const ResourcePaths& paths);

  // phase1 followed by phase2.
  TokenSequence operator()(std::string_view text, std::string_view id = {}) const;
};

// Shared by the offline predict path, the stream processor and the HTTP
// gateway, so all three produce identical results for identical input.
class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual Prediction classify(std::string_view id, std::string_view text) const = 0;
  virtual std::string version() const = 0;
};

class TextCnnClassifier final : public Classifier {
 public:
  TextCnnClassifier(std::shared_ptr<const Preprocessor> pre,
                    std::shared_ptr<const embed::EmbeddingTable> table,
                    textcnn::Params<float> params,
                    std::shared_ptr<const embed::SidecarStore> sidecar = nullptr);

  // Empty-after-preprocessing input yields CLEAN with empty_input set. When
  // a sidecar store is present and holds the id, its matrix replaces the
  // static-table embedding.
  Prediction classify(std::string_view id, std::string_view text) const override;
  std::string version() const override { return version_; }

  const textcnn::Params<float>& params() const { return params_; }

 private:
  std::shared_ptr<const Preprocessor> pre_;
  std::shared_ptr<const embed::EmbeddingTable> table_;
  textcnn::Params<float> params_;
  std::shared_ptr<const embed::SidecarStore> sidecar_;
  std::string version_;
};

class MnbClassifier final : public Classifier {
 public:
  MnbClassifier(std::shared_ptr<const Preprocessor> pre, baseline::BaselineModel model);

  Prediction classify(std::string_view id, std::string_view text) const override;
  std::string version() const override { return "tfidf-mnb-v1"; }

 private:
  std::shared_ptr<const Preprocessor> pre_;
  baseline::BaselineModel model_;
};

}  // namespace viso
