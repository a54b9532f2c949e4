#include "viso/dataset.h"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "viso/rng.h"
#include "viso/utf8.h"

namespace viso::dataset {

using nlohmann::json;

namespace {

Label label_of(const json& v) {
  if (v.is_string()) return parse_label(v.get<std::string>());
  if (v.is_number_integer()) return label_from_index(v.get<std::size_t>());
  if (v.is_number_float()) {
    const double d = v.get<double>();
    if (d == 0.0 || d == 1.0 || d == 2.0) return label_from_index(static_cast<std::size_t>(d));
  }
  throw Error("bad label " + v.dump());
}

std::vector<Document> load_jsonl(std::istream& in, const std::string& name) {
  std::vector<Document> docs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto j = json::parse(line);
      Document d;
      d.id = j.contains("id") ? (j["id"].is_string() ? j["id"].get<std::string>() : j["id"].dump())
                              : std::to_string(lineno);
      if (j.contains("tokens")) d.tokens = j["tokens"].get<std::vector<std::string>>();
      if (j.contains("text")) {
        d.text = j["text"].get<std::string>();
      } else if (!d.tokens) {
        throw Error("missing text");
      }
      if (j.contains("label") && !j["label"].is_null()) d.label = label_of(j["label"]);
      docs.push_back(std::move(d));
    } catch (const std::exception& e) {
      throw Error(name + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return docs;
}

std::vector<Document> load_csv(const std::string& content, const std::string& name) {
  auto rows = parse_csv(content);
  if (rows.empty()) return {};
  const auto& header = rows[0];
  auto find = [&](std::initializer_list<std::string_view> names) -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < header.size(); ++i) {
      for (auto n : names) {
        if (header[i] == n) return i;
      }
    }
    return std::nullopt;
  };
  const auto text_col = find({"free_text", "text"});
  const auto label_col = find({"label_id", "label"});
  const auto id_col = find({"id"});
  if (!text_col) throw Error(name + ": no text or free_text column");
  std::vector<Document> docs;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() == 1 && row[0].empty()) continue;
    if (row.size() != header.size()) {
      throw Error(name + ": row " + std::to_string(r + 1) + " has " + std::to_string(row.size()) +
                  " fields, expected " + std::to_string(header.size()));
    }
    Document d;
    d.id = id_col ? row[*id_col] : "row" + std::to_string(r);
    d.text = row[*text_col];
    if (label_col && !row[*label_col].empty()) d.label = parse_label(row[*label_col]);
    docs.push_back(std::move(d));
  }
  return docs;
}

}  // namespace

std::vector<std::vector<std::string>> parse_csv(std::string_view s) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  std::size_t i = 0;
  if (s.substr(0, 3) == "\xEF\xBB\xBF") i = 3;  // BOM
  for (; i < s.size(); ++i) {
    const char c = s[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < s.size() && s[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < s.size() && s[i + 1] == '\n') ++i;
      row.push_back(std::move(field));
      field.clear();
      rows.push_back(std::move(row));
      row.clear();
    } else {
      field += c;
    }
  }
  if (quoted) throw Error("unterminated quoted CSV field");
  if (!field.empty() || !row.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<Document> load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open dataset " + path.string());
  if (path.extension() == ".csv") {
    std::ostringstream ss;
    ss << in.rdbuf();
    return load_csv(ss.str(), path.string());
  }
  return load_jsonl(in, path.string());
}

void save_jsonl(const std::filesystem::path& path, const std::vector<Document>& docs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& d : docs) {
    json j = {{"id", d.id}, {"text", d.text}};
    if (d.label) j["label"] = label_name(*d.label);
    if (d.tokens) j["tokens"] = *d.tokens;
    out << j.dump() << '\n';
  }
  if (!out) throw Error("write failed: " + path.string());
}

TokenSequence tokenize(const Document& doc, const Preprocessor& pre) {
  if (doc.tokens) return {*doc.tokens, doc.id};
  return pre(doc.text, doc.id);
}

std::vector<LabeledExample> labeled(const std::vector<Document>& docs, const Preprocessor& pre) {
  std::vector<LabeledExample> out;
  out.reserve(docs.size());
  for (const auto& d : docs) {
    if (!d.label) throw Error("document '" + d.id + "' has no label");
    out.push_back({tokenize(d, pre), *d.label});
  }
  return out;
}

std::vector<Document> from_examples(const std::vector<LabeledExample>& examples) {
  std::vector<Document> out;
  out.reserve(examples.size());
  for (const auto& e : examples) {
    Document d;
    d.id = e.tokens.origin_id;
    d.text = utf8::join(e.tokens.tokens, " ");
    d.label = e.label;
    d.tokens = e.tokens.tokens;
    out.push_back(std::move(d));
  }
  return out;
}

std::vector<textcnn::LabeledMatrix> to_matrices(const std::vector<LabeledExample>& examples,
                                                const embed::EmbeddingTable& table, std::size_t max_len) {
  std::vector<textcnn::LabeledMatrix> out;
  out.reserve(examples.size());
  for (const auto& e : examples) out.push_back({embed::embed_sequence(e.tokens, table, max_len), e.label});
  return out;
}

std::vector<RawComment> synthetic_comments(std::size_t n, std::uint64_t seed, std::string_view source) {
  static const std::vector<std::string_view> kWords = {
      "video", "hay", "quá", "cảm", "ơn", "bạn", "nhiều", "mình", "thấy", "rất", "vui", "đẹp",
      "ko", "đc", "bt", "mn", "thích", "nghe", "nhạc", "này", "hôm", "nay", "trời", "mưa",
      "ngu", "vl", "vkl", "đm", "cút", "đi", "bọn", "nó", "chán", "xem", "lại", "haha",
      "việt", "nam", "người", "yêu", "quê", "hương", "ăn", "cơm", "chưa", "sao", "z", "cc"};
  Rng rng(seed);
  std::vector<RawComment> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t len = 3 + rng.index(12);
    std::string text;
    for (std::size_t k = 0; k < len; ++k) {
      if (k) text += ' ';
      text += kWords[rng.index(kWords.size())];
    }
    if (rng.index(4) == 0) text += rng.index(2) ? "!!!" : " https://youtu.be/x";
    out.push_back({"syn" + std::to_string(i), std::move(text), std::string(source),
                   1700000000000 + static_cast<std::int64_t>(i)});
  }
  return out;
}

}  // namespace viso::dataset
