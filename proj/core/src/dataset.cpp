#include "advchar/dataset.hpp"

#include <fstream>
#include <map>

#include <json.hpp>

#include "advchar/error.hpp"

namespace advchar {

using nlohmann::json;

LabelMap::LabelMap(std::vector<std::string> names) : names_(std::move(names)) {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (names_[i] == names_[j]) throw ConfigError("duplicate label '" + names_[i] + "'");
    }
  }
}

const std::string& LabelMap::name_of(int index) const {
  if (index < 0 || static_cast<std::size_t>(index) >= names_.size()) {
    throw DataError("label index " + std::to_string(index) + " out of range [0, " +
                    std::to_string(names_.size()) + ")");
  }
  return names_[static_cast<std::size_t>(index)];
}

int LabelMap::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return static_cast<int>(i);
  }
  throw DataError("unknown label '" + name + "'");
}

LabelMap LabelMap::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("label map not found: " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("label map " + path.string() + " is not valid JSON: " + e.what());
  }
  if (!doc.is_object() || doc.empty()) {
    throw ConfigError("label map " + path.string() + " must be a non-empty object");
  }
  std::vector<std::string> names(doc.size());
  std::vector<bool> seen(doc.size(), false);
  for (const auto& [name, value] : doc.items()) {
    if (!value.is_number_integer()) {
      throw ConfigError("label map entry '" + name + "' is not an integer");
    }
    const auto idx = value.get<long long>();
    if (idx < 0 || static_cast<std::size_t>(idx) >= names.size() || seen[idx]) {
      throw ConfigError("label map indices must be a permutation of 0.." +
                        std::to_string(names.size() - 1));
    }
    seen[idx] = true;
    names[idx] = name;
  }
  return LabelMap(std::move(names));
}

void LabelMap::save(const std::filesystem::path& path) const {
  // nlohmann::json objects sort keys; order by index reads better.
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write label map " + path.string());
  out << "{\n";
  for (std::size_t i = 0; i < names_.size(); ++i) {
    out << "  " << json(names_[i]).dump() << ": " << i
        << (i + 1 < names_.size() ? ",\n" : "\n");
  }
  out << "}\n";
}

std::vector<Example> read_dataset(const std::filesystem::path& path,
                                  const LabelMap& labels) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileNotFoundError("dataset not found: " + path.string());
  std::vector<Example> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::exception&) {
      throw DataError(where + ": malformed JSON");
    }
    if (!obj.is_object() || !obj.contains("text") || !obj["text"].is_string() ||
        !obj.contains("label") || !obj["label"].is_string()) {
      throw DataError(where + ": expected string fields 'text' and 'label'");
    }
    Example ex;
    ex.text = obj["text"].get<std::string>();
    try {
      utf8_decode(ex.text);
      ex.label = labels.index_of(obj["label"].get<std::string>());
    } catch (const DataError& e) {
      throw DataError(where + ": " + e.what());
    }
    out.push_back(std::move(ex));
  }
  return out;
}

void write_dataset(const std::filesystem::path& path,
                   std::span<const Example> examples, const LabelMap& labels) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write dataset " + path.string());
  for (const auto& ex : examples) {
    json obj;
    obj["text"] = ex.text;
    obj["label"] = labels.name_of(ex.label);
    out << obj.dump() << '\n';
  }
}

TokenizedDataset tokenize(const Vocab& vocab, std::span<const Example> examples,
                          std::size_t max_len) {
  TokenizedDataset out;
  out.inputs.reserve(examples.size());
  out.labels.reserve(examples.size());
  for (const auto& ex : examples) {
    out.inputs.push_back(vocab.encode(ex.text, max_len));
    out.labels.push_back(ex.label);
  }
  return out;
}

}  // namespace advchar
