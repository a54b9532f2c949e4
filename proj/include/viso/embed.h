#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "viso/types.h"

namespace viso::embed {

inline constexpr std::string_view kUnk = "<unk>";
inline constexpr std::string_view kPad = "<pad>";

// Static word vectors. Rows are stored contiguously, row-major.
class EmbeddingTable {
 public:
  EmbeddingTable(std::vector<std::string> words, std::vector<float> matrix, std::size_t dim);

  // Text format: first line "V D", then V lines "word v1 ... vD". Appends
  // <unk> (mean of all rows) and <pad> (zeros) when absent.
  static EmbeddingTable load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return words_.size(); }
  const std::vector<std::string>& words() const { return words_; }
  const std::vector<float>& matrix() const { return matrix_; }

  // Row index of a word, or of <unk> when the word is unknown.
  std::size_t index_of(std::string_view word) const;
  bool contains(std::string_view word) const { return vocab_.contains(std::string(word)); }
  std::span<const float> row(std::size_t i) const {
    return {matrix_.data() + i * dim_, dim_};
  }
  std::size_t unk_index() const { return unk_; }
  std::size_t pad_index() const { return pad_; }

 private:
  void ensure_specials();

  std::vector<std::string> words_;
  std::vector<float> matrix_;
  std::size_t dim_;
  std::unordered_map<std::string, std::size_t> vocab_;
  std::size_t unk_ = 0;
  std::size_t pad_ = 0;
};

// A max_len x dim input matrix; rows past true_len are padding.
struct SequenceMatrix {
  std::size_t max_len = 0;
  std::size_t dim = 0;
  std::size_t true_len = 0;
  std::vector<float> data;

  std::span<const float> row(std::size_t i) const { return {data.data() + i * dim, dim}; }
  bool operator==(const SequenceMatrix&) const = default;
};

// Head of the sequence is kept when it is longer than max_len.
SequenceMatrix embed_sequence(const TokenSequence& tokens, const EmbeddingTable& table,
                              std::size_t max_len);

// Precomputed per-comment sequence embeddings (e.g. from an out-of-process
// transformer). Binary format: "VSEM1", then records of
// u32 id_len | id | u32 max_len | u32 dim | max_len*dim f32, little-endian.
class SidecarStore {
 public:
  SidecarStore() = default;

  // Throws if any record's dim differs from expected_dim (0 = accept any).
  static SidecarStore load(const std::filesystem::path& path, std::size_t expected_dim = 0);
  static void save(const std::filesystem::path& path,
                   const std::vector<std::pair<std::string, SequenceMatrix>>& records);

  void insert(std::string id, SequenceMatrix m);
  bool contains(std::string_view id) const { return entries_.contains(std::string(id)); }
  // Throws Error("no sidecar embedding") when the id is absent.
  const SequenceMatrix& lookup(std::string_view id) const;
  std::size_t size() const { return entries_.size(); }

 private:
  std::unordered_map<std::string, SequenceMatrix> entries_;
};

}  // namespace viso::embed
