#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "advchar/dataset.hpp"
#include "advchar/model.hpp"

namespace advchar {

struct TrainConfig {
  int batch_size = 64;
  double lr = 1e-3;
  int max_epochs = 30;
  // Stop once dev accuracy has not improved for this many epochs.
  int patience = 3;
  std::uint64_t seed = 0;
  // 0 = one worker per hardware thread. Results do not depend on this.
  int workers = 0;

  void validate() const;
};

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double dev_accuracy = 0.0;
};

struct TrainResult {
  Model model;
  std::vector<EpochLog> log;
  double best_dev_accuracy = 0.0;
  int best_epoch = 0;
};

// Softmax cross-entropy of logits z against class y; writes dloss/dz.
template <typename T>
T softmax_cross_entropy(const Logits<T>& z, int y, Logits<T>& grad) {
  const T max = z.maxCoeff();
  const auto shifted = (z.array() - max).eval();
  const T log_sum = std::log(shifted.exp().sum());
  grad = (shifted - log_sum).exp().matrix();
  grad(y) -= T(1);
  return log_sum - shifted(y);
}

// Mini-batch Adam on softmax cross-entropy with dev-accuracy early stopping.
// Returns the model from the epoch with the best dev accuracy.
TrainResult train(Model model, const TokenizedDataset& train_set,
                  const TokenizedDataset& dev_set, const TrainConfig& cfg);

double evaluate_accuracy(const Model& model, const TokenizedDataset& dataset,
                         int workers = 1);

std::vector<int> predict_all(const Model& model,
                             const std::vector<TokenSequence>& inputs,
                             int workers = 1);

// CSV with header epoch,train_loss,dev_acc.
void write_training_log(const std::filesystem::path& path,
                        const std::vector<EpochLog>& log);

}  // namespace advchar
