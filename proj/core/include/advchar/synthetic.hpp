#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "advchar/dataset.hpp"

namespace advchar {

// Planted-keyword topic data: every text is random filler characters with
// 1..max_keywords characters from its class's private keyword set mixed in.
// Texts never contain another class's keywords, so a keyword lookup
// classifies every example correctly.
struct SyntheticConfig {
  int classes = 4;
  int filler_chars = 180;
  int keywords_per_class = 5;
  int train_per_class = 500;
  int dev_per_class = 125;
  int test_per_class = 125;
  int min_length = 12;
  int max_length = 24;
  int min_keywords = 1;
  int max_keywords = 2;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SyntheticDataset {
  LabelMap labels;
  std::vector<std::vector<char32_t>> keywords;  // per class
  std::vector<char32_t> filler;
  std::vector<Example> train, dev, test;
};

SyntheticDataset generate_synthetic(const SyntheticConfig& cfg);

// Writes train.jsonl, dev.jsonl, test.jsonl and labels.json into dir.
void write_synthetic(const SyntheticDataset& data, const std::filesystem::path& dir);

}  // namespace advchar
