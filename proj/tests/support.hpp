#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>

#include "advchar/dataset.hpp"
#include "advchar/model.hpp"
#include "advchar/trainer.hpp"
#include "advchar/vocab.hpp"

namespace advchar::testing {

// Unique directory under the system temp dir, removed on destruction.
class ScratchDir {
 public:
  ScratchDir() {
    static std::atomic<int> counter{0};
    const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
    path_ = std::filesystem::temp_directory_path() /
            ("advchar_test_" + std::to_string(stamp) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline ModelConfig small_config(int d, int layers, int heads, int classes,
                                std::uint64_t seed, int max_len = 16, int d_ff = 0) {
  ModelConfig cfg;
  cfg.d_model = d;
  cfg.layers = layers;
  cfg.heads = heads;
  cfg.d_ff = d_ff > 0 ? d_ff : 2 * d;
  cfg.max_len = max_len;
  cfg.num_classes = classes;
  cfg.seed = seed;
  return cfg;
}

// [CLS] followed by n uniformly drawn non-special ids.
inline TokenSequence random_tokens(std::mt19937_64& rng, std::size_t n, std::size_t vocab_size) {
  std::uniform_int_distribution<TokenId> pick(kNumSpecials, static_cast<TokenId>(vocab_size) - 1);
  TokenSequence x{kClsId};
  for (std::size_t i = 0; i < n; ++i) x.push_back(pick(rng));
  return x;
}

// Adds U(-scale, scale) noise to every parameter so biases and layer-norm
// affine terms are exercised away from their initial values.
template <typename T>
BasicModel<T> jitter(const BasicModel<T>& model, std::uint64_t seed, double scale) {
  ParameterSet<T> params = model.params();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-scale, scale);
  params.for_each([&](auto, Matrix<T>& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] += static_cast<T>(u(rng));
  });
  return BasicModel<T>(model.config(), std::move(params));
}

// Texts of filler characters w..z with exactly one keyword character; class c
// owns keyword 'a' + c, so a single character decides the label.
inline std::vector<Example> keyword_examples(std::size_t n, int classes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const std::u32string filler = U"wxyz";
  std::uniform_int_distribution<std::size_t> pick(0, filler.size() - 1);
  std::uniform_int_distribution<int> len(4, 10);
  std::vector<Example> out;
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % static_cast<std::size_t>(classes));
    std::u32string text;
    for (int k = len(rng); k > 0; --k) text.push_back(filler[pick(rng)]);
    text.insert(text.begin() + static_cast<std::ptrdiff_t>(rng() % (text.size() + 1)),
                static_cast<char32_t>(U'a' + label));
    out.push_back({utf8_encode(text), label});
  }
  return out;
}

struct KeywordModel {
  Vocab vocab;
  Model model;
  std::vector<Example> test;
};

// A small classifier trained to near-perfect accuracy on keyword_examples.
// Built once per process.
inline const KeywordModel& keyword_model() {
  static const KeywordModel instance = [] {
    const int classes = 3;
    Vocab vocab({U'a', U'b', U'c', U'w', U'x', U'y', U'z'});
    const auto train_set = tokenize(vocab, keyword_examples(300, classes, 1), 16);
    const auto dev_set = tokenize(vocab, keyword_examples(90, classes, 2), 16);
    TrainConfig cfg;
    cfg.batch_size = 16;
    cfg.lr = 1e-2;
    cfg.max_epochs = 8;
    cfg.patience = 3;
    cfg.seed = 5;
    cfg.workers = 1;
    ModelConfig mc = small_config(16, 1, 2, classes, 5);
    auto result = train(Model(mc, vocab.size()), train_set, dev_set, cfg);
    return KeywordModel{vocab, std::move(result.model), keyword_examples(60, classes, 3)};
  }();
  return instance;
}

}  // namespace advchar::testing
