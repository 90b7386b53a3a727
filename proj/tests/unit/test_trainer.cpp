#include <gtest/gtest.h>

#include <fstream>
#include <random>

#include "advchar/adam.hpp"
#include "advchar/error.hpp"
#include "advchar/trainer.hpp"
#include "support.hpp"

namespace advchar {
namespace {

using testing::random_tokens;
using testing::small_config;

struct KeywordTask {
  Vocab vocab{std::vector<char32_t>{U'a', U'b', U'w', U'x', U'y', U'z'}};
  TokenizedDataset train_set = tokenize(vocab, testing::keyword_examples(200, 2, 1), 16);
  TokenizedDataset dev_set = tokenize(vocab, testing::keyword_examples(60, 2, 2), 16);
};

TrainConfig quick_config(std::uint64_t seed) {
  TrainConfig cfg;
  cfg.batch_size = 16;
  cfg.lr = 1e-2;
  cfg.max_epochs = 5;
  cfg.patience = 5;
  cfg.seed = seed;
  cfg.workers = 1;
  return cfg;
}

TEST(Train, SeparableTaskReachesPerfectDevAccuracy) {
  KeywordTask task;
  const auto result = train(Model(small_config(16, 1, 2, 2, 3), task.vocab.size()),
                            task.train_set, task.dev_set, quick_config(3));
  EXPECT_LE(result.log.size(), 5u);
  EXPECT_EQ(result.best_dev_accuracy, 1.0);
  EXPECT_EQ(evaluate_accuracy(result.model, task.dev_set), 1.0);
}

TEST(Train, FrozenLearningRateStopsAfterPatiencePlusOne) {
  KeywordTask task;
  TrainConfig cfg = quick_config(1);
  cfg.lr = 0.0;
  cfg.patience = 1;
  const Model init(small_config(16, 1, 2, 2, 3), task.vocab.size());
  const auto result = train(init, task.train_set, task.dev_set, cfg);
  EXPECT_EQ(result.log.size(), 2u);
  EXPECT_TRUE(result.model.params().head_weight == init.params().head_weight);
}

TEST(Train, SameSeedIsReproducible) {
  KeywordTask task;
  const auto a = train(Model(small_config(16, 1, 2, 2, 5), task.vocab.size()),
                       task.train_set, task.dev_set, quick_config(9));
  TrainConfig threaded = quick_config(9);
  threaded.workers = 3;
  const auto b = train(Model(small_config(16, 1, 2, 2, 5), task.vocab.size()),
                       task.train_set, task.dev_set, threaded);
  ASSERT_EQ(a.log.size(), b.log.size());
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    EXPECT_EQ(a.log[i].train_loss, b.log[i].train_loss);
    EXPECT_EQ(a.log[i].dev_accuracy, b.log[i].dev_accuracy);
  }
  EXPECT_TRUE(a.model.params().head_weight == b.model.params().head_weight);
}

TEST(Train, ReturnsBestCheckpoint) {
  KeywordTask task;
  TrainConfig cfg = quick_config(4);
  cfg.lr = 0.05;
  cfg.max_epochs = 6;
  const auto result = train(Model(small_config(16, 1, 2, 2, 8), task.vocab.size()),
                            task.train_set, task.dev_set, cfg);
  double best = 0.0;
  for (const auto& e : result.log) best = std::max(best, e.dev_accuracy);
  EXPECT_EQ(result.best_dev_accuracy, best);
  EXPECT_EQ(evaluate_accuracy(result.model, task.dev_set), best);
  EXPECT_EQ(result.log[static_cast<std::size_t>(result.best_epoch - 1)].dev_accuracy, best);
}

TEST(Train, LabelOutOfRangeIsDataError) {
  KeywordTask task;
  task.train_set.labels[3] = 2;
  EXPECT_THROW(train(Model(small_config(16, 1, 2, 2, 3), task.vocab.size()), task.train_set,
                     task.dev_set, quick_config(1)),
               DataError);
}

TEST(Train, ConfigValidation) {
  TrainConfig cfg;
  cfg.batch_size = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.patience = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.lr = -1.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Train, FirstSmallStepDoesNotIncreaseLoss) {
  int decreased = 0;
  const int seeds = 20;
  for (int seed = 0; seed < seeds; ++seed) {
    const auto cfg = small_config(16, 2, 2, 3, static_cast<std::uint64_t>(seed));
    Model model(cfg, 20);
    std::mt19937_64 rng(static_cast<std::uint64_t>(seed));
    std::vector<TokenSequence> batch;
    std::vector<int> labels;
    for (int i = 0; i < 16; ++i) {
      batch.push_back(random_tokens(rng, 3 + rng() % 8, 20));
      labels.push_back(static_cast<int>(rng() % 3));
    }
    auto batch_loss = [&](const Model& m, ParameterSet<Real>* grads) {
      double total = 0.0;
      for (std::size_t i = 0; i < batch.size(); ++i) {
        const int y = labels[i];
        const LogitObjective<Real> ce = [y](const Logits<Real>& z, Logits<Real>& g) {
          return softmax_cross_entropy(z, y, g);
        };
        if (grads) {
          total += m.accumulate_gradients(batch[i], ce, *grads);
        } else {
          Logits<Real> g;
          total += ce(m.forward(batch[i]), g);
        }
      }
      return total / static_cast<double>(batch.size());
    };
    auto grads = ParameterSet<Real>::zeros(cfg, 20);
    const double before = batch_loss(model, &grads);
    grads.scale(1.0f / static_cast<Real>(batch.size()));
    AdamState<Real> state;
    adam_step(state, model.mutable_params(), grads, 1e-4);
    if (batch_loss(model, nullptr) <= before) ++decreased;
  }
  EXPECT_GE(decreased, 19);
}

TEST(EvaluateAccuracy, MatchesRecount) {
  const Model m = testing::jitter(Model(small_config(8, 1, 2, 3, 2), 15), 3, 0.5);
  std::mt19937_64 rng(5);
  TokenizedDataset ds;
  for (int i = 0; i < 200; ++i) {
    ds.inputs.push_back(random_tokens(rng, 1 + rng() % 10, 15));
    ds.labels.push_back(static_cast<int>(rng() % 3));
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) hits += m.predict(ds.inputs[i]) == ds.labels[i];
  EXPECT_EQ(evaluate_accuracy(m, ds, 1), static_cast<double>(hits) / 200.0);
  EXPECT_EQ(evaluate_accuracy(m, ds, 4), static_cast<double>(hits) / 200.0);

  const auto preds = predict_all(m, ds.inputs, 2);
  ds.labels = preds;
  EXPECT_EQ(evaluate_accuracy(m, ds), 1.0);
  ds.inputs.resize(4);
  ds.labels.resize(4);
  ds.labels[0] = (ds.labels[0] + 1) % 3;
  ds.labels[3] = (ds.labels[3] + 2) % 3;
  EXPECT_EQ(evaluate_accuracy(m, ds), 0.5);
  EXPECT_THROW(evaluate_accuracy(m, TokenizedDataset{}), DataError);
}

TEST(TrainingLog, CsvLayout) {
  testing::ScratchDir dir;
  write_training_log(dir / "log.csv", {{1, 0.5, 0.75}, {2, 0.25, 1.0}});
  EXPECT_EQ(testing::slurp(dir / "log.csv"),
            "epoch,train_loss,dev_acc\n1,0.500000,0.750000\n2,0.250000,1.000000\n");
}

}  // namespace
}  // namespace advchar
