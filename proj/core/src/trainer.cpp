#include "advchar/trainer.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>

#include "advchar/adam.hpp"
#include "advchar/error.hpp"
#include "advchar/parallel.hpp"
#include "advchar/random.hpp"

namespace advchar {

namespace {

// Batch gradients are summed in this many fixed slices, then reduced in slice
// order, so the result is independent of the worker count.
constexpr std::size_t kGradientSlices = 4;

void check_labels(const TokenizedDataset& data, int num_classes, const char* split) {
  if (data.inputs.size() != data.labels.size()) {
    throw DataError(std::string(split) + " split has mismatched inputs/labels");
  }
  for (std::size_t i = 0; i < data.labels.size(); ++i) {
    if (data.labels[i] < 0 || data.labels[i] >= num_classes) {
      throw DataError(std::string(split) + " example " + std::to_string(i) +
                      " has label " + std::to_string(data.labels[i]) +
                      " outside [0, " + std::to_string(num_classes) + ")");
    }
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  // lr = 0 is accepted: it freezes the weights, which is useful for dry runs.
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be finite and >= 0");
  if (max_epochs < 1) throw ConfigError("max_epochs must be at least 1");
  if (patience < 1) throw ConfigError("patience must be at least 1");
}

std::vector<int> predict_all(const Model& model,
                             const std::vector<TokenSequence>& inputs,
                             int workers) {
  std::vector<int> out(inputs.size());
  parallel_for(inputs.size(), workers,
               [&](std::size_t i) { out[i] = model.predict(inputs[i]); });
  return out;
}

double evaluate_accuracy(const Model& model, const TokenizedDataset& dataset,
                         int workers) {
  if (dataset.empty()) throw DataError("cannot evaluate accuracy on an empty dataset");
  const std::vector<int> preds = predict_all(model, dataset.inputs, workers);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] == dataset.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(preds.size());
}

TrainResult train(Model model, const TokenizedDataset& train_set,
                  const TokenizedDataset& dev_set, const TrainConfig& cfg) {
  cfg.validate();
  if (train_set.empty() || dev_set.empty()) {
    throw DataError("training needs non-empty train and dev splits");
  }
  check_labels(train_set, model.num_classes(), "train");
  check_labels(dev_set, model.num_classes(), "dev");

  const ModelConfig& mc = model.config();
  const std::size_t vocab_size = model.vocab_size();
  AdamState<Real> adam;
  std::vector<std::size_t> order(train_set.size());
  std::vector<ParameterSet<Real>> slice_grads(
      kGradientSlices, ParameterSet<Real>::zeros(mc, vocab_size));
  std::vector<double> slice_loss(kGradientSlices);

  TrainResult result{model, {}, -1.0, 0};
  int epochs_without_improvement = 0;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), rng);

    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const std::size_t batch = end - start;
      parallel_for(kGradientSlices, cfg.workers, [&](std::size_t s) {
        slice_grads[s].set_zero();
        slice_loss[s] = 0.0;
        const std::size_t lo = start + batch * s / kGradientSlices;
        const std::size_t hi = start + batch * (s + 1) / kGradientSlices;
        for (std::size_t j = lo; j < hi; ++j) {
          const std::size_t idx = order[j];
          const int label = train_set.labels[idx];
          slice_loss[s] += model.accumulate_gradients(
              train_set.inputs[idx],
              [label](const Logits<Real>& z, Logits<Real>& g) {
                return softmax_cross_entropy(z, label, g);
              },
              slice_grads[s]);
        }
      });
      for (std::size_t s = 1; s < kGradientSlices; ++s) slice_grads[0].add(slice_grads[s]);
      slice_grads[0].scale(Real(1) / static_cast<Real>(batch));
      for (double l : slice_loss) epoch_loss += l;
      adam_step(adam, model.mutable_params(), slice_grads[0], cfg.lr);
    }

    const double dev_acc = evaluate_accuracy(model, dev_set, cfg.workers);
    result.log.push_back({epoch, epoch_loss / static_cast<double>(order.size()), dev_acc});
    if (dev_acc > result.best_dev_accuracy) {
      result.best_dev_accuracy = dev_acc;
      result.best_epoch = epoch;
      result.model = model;
      epochs_without_improvement = 0;
    } else if (++epochs_without_improvement >= cfg.patience) {
      break;
    }
  }
  return result;
}

void write_training_log(const std::filesystem::path& path,
                        const std::vector<EpochLog>& log) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write training log " + path.string());
  out << "epoch,train_loss,dev_acc\n";
  char buf[96];
  for (const auto& e : log) {
    std::snprintf(buf, sizeof buf, "%d,%.6f,%.6f\n", e.epoch, e.train_loss,
                  e.dev_accuracy);
    out << buf;
  }
}

}  // namespace advchar
