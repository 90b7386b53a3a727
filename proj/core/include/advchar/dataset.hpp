#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "advchar/vocab.hpp"

namespace advchar {

struct Example {
  std::string text;
  int label = 0;

  friend bool operator==(const Example&, const Example&) = default;
};

// label name -> class index. Indices are dense 0..C-1.
class LabelMap {
 public:
  LabelMap() = default;
  explicit LabelMap(std::vector<std::string> names);

  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }
  const std::string& name_of(int index) const;
  // Throws DataError for unknown labels.
  int index_of(const std::string& name) const;

  // {"label": index, ...}. A missing file is a ConfigError.
  static LabelMap load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

 private:
  std::vector<std::string> names_;
};

// JSONL with one {"text": ..., "label": ...} object per line. Malformed lines
// raise DataError naming the line number.
std::vector<Example> read_dataset(const std::filesystem::path& path,
                                  const LabelMap& labels);
void write_dataset(const std::filesystem::path& path,
                   std::span<const Example> examples, const LabelMap& labels);

struct TokenizedDataset {
  std::vector<TokenSequence> inputs;
  std::vector<int> labels;

  std::size_t size() const { return inputs.size(); }
  bool empty() const { return inputs.empty(); }
};

TokenizedDataset tokenize(const Vocab& vocab, std::span<const Example> examples,
                          std::size_t max_len);

}  // namespace advchar
