#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "viso/embed.h"
#include "viso/pipeline.h"
#include "viso/textcnn.h"
#include "viso/types.h"

// Labeled comment files.
//   .jsonl: {"id", "text", "label"} per line; label is a name or 0/1/2 and
//           may be absent. A "tokens" array marks already-preprocessed
//           rows (e.g. augmentation output) and bypasses preprocessing.
//   .csv:   header row with text/free_text and label/label_id columns,
//           optional id. RFC 4180 quoting.
namespace viso::dataset {

struct Document {
  std::string id;
  std::string text;
  std::optional<Label> label;
  std::optional<std::vector<std::string>> tokens;
};

std::vector<Document> load(const std::filesystem::path& path);
void save_jsonl(const std::filesystem::path& path, const std::vector<Document>& docs);

TokenSequence tokenize(const Document& doc, const Preprocessor& pre);
// Throws Error naming the first document without a label.
std::vector<LabeledExample> labeled(const std::vector<Document>& docs, const Preprocessor& pre);
std::vector<Document> from_examples(const std::vector<LabeledExample>& examples);

std::vector<textcnn::LabeledMatrix> to_matrices(const std::vector<LabeledExample>& examples,
                                                const embed::EmbeddingTable& table, std::size_t max_len);

// Deterministic pseudo-comments for load tests: 3 to 14 words drawn from a
// fixed pool of everyday, teencode and abusive vocabulary, ids "syn<i>".
std::vector<RawComment> synthetic_comments(std::size_t n, std::uint64_t seed,
                                           std::string_view source = "synthetic");

// Splits one CSV document into rows of fields.
std::vector<std::vector<std::string>> parse_csv(std::string_view content);

}  // namespace viso::dataset
