#include "advchar/synthetic.hpp"

#include <algorithm>
#include <random>

#include "advchar/error.hpp"
#include "advchar/random.hpp"

namespace advchar {

namespace {

// CJK Unified Ideographs block; plenty of room for desk-scale vocabularies.
constexpr char32_t kFirstCodePoint = 0x4E00;
constexpr int kCodePointBudget = 0x9FFF - 0x4E00;

const char* const kTopicNames[] = {"sports", "finance", "entertainment", "technology",
                                   "education", "politics", "health", "travel"};

std::vector<Example> make_split(const SyntheticDataset& data, const SyntheticConfig& cfg,
                                int per_class, std::uint64_t stream) {
  std::mt19937_64 rng(derive_seed(cfg.seed, stream));
  std::uniform_int_distribution<int> length(cfg.min_length, cfg.max_length);
  std::uniform_int_distribution<int> n_keywords(cfg.min_keywords, cfg.max_keywords);
  std::uniform_int_distribution<std::size_t> filler(0, data.filler.size() - 1);
  std::vector<Example> out;
  out.reserve(static_cast<std::size_t>(per_class * cfg.classes));
  for (int i = 0; i < per_class; ++i) {
    for (int c = 0; c < cfg.classes; ++c) {
      const auto& keys = data.keywords[static_cast<std::size_t>(c)];
      std::uniform_int_distribution<std::size_t> key(0, keys.size() - 1);
      const int len = length(rng);
      std::u32string text;
      for (int j = 0; j < len; ++j) text.push_back(data.filler[filler(rng)]);
      // Overwrite distinct random positions with keywords.
      std::vector<int> slots(static_cast<std::size_t>(len));
      for (int j = 0; j < len; ++j) slots[static_cast<std::size_t>(j)] = j;
      const int k = std::min(n_keywords(rng), len);
      for (int j = 0; j < k; ++j) {
        std::uniform_int_distribution<int> pick(j, len - 1);
        std::swap(slots[static_cast<std::size_t>(j)], slots[static_cast<std::size_t>(pick(rng))]);
        text[static_cast<std::size_t>(slots[static_cast<std::size_t>(j)])] = keys[key(rng)];
      }
      out.push_back({utf8_encode(text), c});
    }
  }
  return out;
}

}  // namespace

void SyntheticConfig::validate() const {
  if (classes < 2) throw ConfigError("synthetic: need at least 2 classes");
  if (filler_chars < 1 || keywords_per_class < 1) {
    throw ConfigError("synthetic: need filler and keyword characters");
  }
  if (filler_chars + classes * keywords_per_class > kCodePointBudget) {
    throw ConfigError("synthetic: too many characters requested");
  }
  if (train_per_class < 1 || dev_per_class < 1 || test_per_class < 1) {
    throw ConfigError("synthetic: every split needs at least one example per class");
  }
  if (min_length < 1 || max_length < min_length) {
    throw ConfigError("synthetic: need 1 <= min_length <= max_length");
  }
  if (min_keywords < 1 || max_keywords < min_keywords || min_keywords > min_length) {
    throw ConfigError("synthetic: need 1 <= min_keywords <= max_keywords, min_keywords <= min_length");
  }
}

SyntheticDataset generate_synthetic(const SyntheticConfig& cfg) {
  cfg.validate();
  SyntheticDataset data;
  std::vector<std::string> names;
  for (int c = 0; c < cfg.classes; ++c) {
    names.push_back(c < static_cast<int>(std::size(kTopicNames)) ? kTopicNames[c]
                                                                 : "class_" + std::to_string(c));
  }
  data.labels = LabelMap(std::move(names));

  // Shuffle a block of code points, then deal keywords and filler from it.
  const int total = cfg.filler_chars + cfg.classes * cfg.keywords_per_class;
  std::vector<char32_t> pool(static_cast<std::size_t>(total));
  for (int i = 0; i < total; ++i) pool[static_cast<std::size_t>(i)] = kFirstCodePoint + static_cast<char32_t>(i);
  std::mt19937_64 rng(derive_seed(cfg.seed, 0));
  std::shuffle(pool.begin(), pool.end(), rng);
  auto it = pool.begin();
  for (int c = 0; c < cfg.classes; ++c) {
    data.keywords.emplace_back(it, it + cfg.keywords_per_class);
    it += cfg.keywords_per_class;
  }
  data.filler.assign(it, pool.end());

  data.train = make_split(data, cfg, cfg.train_per_class, 1);
  data.dev = make_split(data, cfg, cfg.dev_per_class, 2);
  data.test = make_split(data, cfg, cfg.test_per_class, 3);
  return data;
}

void write_synthetic(const SyntheticDataset& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_dataset(dir / "train.jsonl", data.train, data.labels);
  write_dataset(dir / "dev.jsonl", data.dev, data.labels);
  write_dataset(dir / "test.jsonl", data.test, data.labels);
  data.labels.save(dir / "labels.json");
}

}  // namespace advchar
