#include "viso/embed.h"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "viso/binio.h"

namespace viso::embed {

namespace {

constexpr std::string_view kSidecarMagic = "VSEM1";

std::vector<std::string_view> split_spaces(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

template <typename T>
T parse_number(std::string_view s, const std::string& what) {
  T v{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw Error(what + ": '" + std::string(s) + "'");
  return v;
}

std::size_t trailing_true_len(const SequenceMatrix& m) {
  std::size_t len = m.max_len;
  while (len > 0) {
    auto r = m.row(len - 1);
    bool zero = true;
    for (float v : r) zero = zero && v == 0.0f;
    if (!zero) break;
    --len;
  }
  return len;
}

}  // namespace

EmbeddingTable::EmbeddingTable(std::vector<std::string> words, std::vector<float> matrix,
                               std::size_t dim)
    : words_(std::move(words)), matrix_(std::move(matrix)), dim_(dim) {
  if (dim_ == 0) throw Error("embedding dimension must be >= 1");
  if (matrix_.size() != words_.size() * dim_) throw Error("embedding matrix size mismatch");
  for (std::size_t i = 0; i < words_.size(); ++i) {
    if (!vocab_.emplace(words_[i], i).second) throw Error("duplicate word: " + words_[i]);
  }
  for (float v : matrix_) {
    if (!std::isfinite(v)) throw Error("non-finite embedding value");
  }
  ensure_specials();
}

void EmbeddingTable::ensure_specials() {
  const std::size_t real_rows = words_.size();
  auto add_row = [&](std::string_view w, std::vector<float> values) {
    vocab_.emplace(std::string(w), words_.size());
    words_.emplace_back(w);
    matrix_.insert(matrix_.end(), values.begin(), values.end());
  };
  if (!vocab_.contains(std::string(kUnk))) {
    std::vector<double> sum(dim_, 0.0);
    for (std::size_t i = 0; i < real_rows; ++i) {
      for (std::size_t d = 0; d < dim_; ++d) sum[d] += matrix_[i * dim_ + d];
    }
    std::vector<float> mean(dim_, 0.0f);
    if (real_rows > 0) {
      for (std::size_t d = 0; d < dim_; ++d) {
        mean[d] = static_cast<float>(sum[d] / static_cast<double>(real_rows));
      }
    }
    add_row(kUnk, std::move(mean));
  }
  if (!vocab_.contains(std::string(kPad))) add_row(kPad, std::vector<float>(dim_, 0.0f));
  unk_ = vocab_.at(std::string(kUnk));
  pad_ = vocab_.at(std::string(kPad));
  for (float v : row(pad_)) {
    if (v != 0.0f) throw Error("<pad> row must be all zero");
  }
}

EmbeddingTable EmbeddingTable::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open embeddings: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw Error("missing embedding header");
  auto header = split_spaces(line);
  if (header.size() != 2) throw Error("embedding header must be 'V D'");
  auto v = parse_number<std::size_t>(header[0], "bad vocabulary size");
  auto d = parse_number<std::size_t>(header[1], "bad dimension");
  if (d == 0) throw Error("embedding dimension must be >= 1");

  std::vector<std::string> words;
  std::vector<float> matrix;
  words.reserve(v);
  matrix.reserve(v * d);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    auto fields = split_spaces(line);
    if (fields.empty()) continue;
    if (fields.size() - 1 != d) {
      throw Error("row dimension: line " + std::to_string(lineno) + " has " +
                  std::to_string(fields.size() - 1) + " values, expected " + std::to_string(d));
    }
    words.emplace_back(fields[0]);
    for (std::size_t k = 1; k < fields.size(); ++k) {
      matrix.push_back(parse_number<float>(fields[k], "bad embedding value"));
    }
  }
  if (words.size() != v) {
    throw Error("vocabulary size mismatch: header says " + std::to_string(v) + ", found " +
                std::to_string(words.size()));
  }
  return EmbeddingTable(std::move(words), std::move(matrix), d);
}

void EmbeddingTable::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot write embeddings: " + path.string());
  out << words_.size() << ' ' << dim_ << '\n';
  char buf[64];
  for (std::size_t i = 0; i < words_.size(); ++i) {
    out << words_[i];
    for (float v : row(i)) {
      auto res = std::to_chars(buf, buf + sizeof(buf), v);
      out << ' ' << std::string_view(buf, static_cast<std::size_t>(res.ptr - buf));
    }
    out << '\n';
  }
  if (!out) throw Error("write failed: " + path.string());
}

std::size_t EmbeddingTable::index_of(std::string_view word) const {
  auto it = vocab_.find(std::string(word));
  return it == vocab_.end() ? unk_ : it->second;
}

SequenceMatrix embed_sequence(const TokenSequence& tokens, const EmbeddingTable& table,
                              std::size_t max_len) {
  if (max_len == 0) throw Error("max_len must be >= 1");
  SequenceMatrix m;
  m.max_len = max_len;
  m.dim = table.dim();
  m.true_len = std::min(tokens.size(), max_len);
  m.data.assign(max_len * m.dim, 0.0f);
  for (std::size_t i = 0; i < m.true_len; ++i) {
    auto r = table.row(table.index_of(tokens.tokens[i]));
    std::copy(r.begin(), r.end(), m.data.begin() + static_cast<std::ptrdiff_t>(i * m.dim));
  }
  return m;
}

SidecarStore SidecarStore::load(const std::filesystem::path& path, std::size_t expected_dim) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open sidecar: " + path.string());
  constexpr const char* kCorrupt = "corrupt sidecar file";
  if (binio::read_bytes(in, kSidecarMagic.size(), "bad sidecar magic") != kSidecarMagic) {
    throw Error("bad sidecar magic");
  }
  SidecarStore store;
  while (in.peek() != std::char_traits<char>::eof()) {
    auto id_len = binio::read_u32(in, kCorrupt);
    std::string id = binio::read_bytes(in, id_len, kCorrupt);
    SequenceMatrix m;
    m.max_len = binio::read_u32(in, kCorrupt);
    m.dim = binio::read_u32(in, kCorrupt);
    if (expected_dim != 0 && m.dim != expected_dim) {
      throw Error("sidecar dimension " + std::to_string(m.dim) + " does not match model dimension " +
                  std::to_string(expected_dim));
    }
    m.data.resize(m.max_len * m.dim);
    for (auto& v : m.data) v = binio::read_f32(in, kCorrupt);
    m.true_len = trailing_true_len(m);
    store.insert(std::move(id), std::move(m));
  }
  return store;
}

void SidecarStore::save(const std::filesystem::path& path,
                        const std::vector<std::pair<std::string, SequenceMatrix>>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write sidecar: " + path.string());
  binio::write_bytes(out, kSidecarMagic);
  for (const auto& [id, m] : records) {
    binio::write_u32(out, static_cast<std::uint32_t>(id.size()));
    binio::write_bytes(out, id);
    binio::write_u32(out, static_cast<std::uint32_t>(m.max_len));
    binio::write_u32(out, static_cast<std::uint32_t>(m.dim));
    for (float v : m.data) binio::write_f32(out, v);
  }
  if (!out) throw Error("write failed: " + path.string());
}

void SidecarStore::insert(std::string id, SequenceMatrix m) {
  if (m.data.size() != m.max_len * m.dim) throw Error("sidecar matrix size mismatch");
  entries_.insert_or_assign(std::move(id), std::move(m));
}

const SequenceMatrix& SidecarStore::lookup(std::string_view id) const {
  auto it = entries_.find(std::string(id));
  if (it == entries_.end()) throw Error("no sidecar embedding for id '" + std::string(id) + "'");
  return it->second;
}

}  // namespace viso::embed
