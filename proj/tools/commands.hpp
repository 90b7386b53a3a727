#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "advchar/eval.hpp"
#include "advchar/model.hpp"
#include "advchar/synthetic.hpp"
#include "advchar/trainer.hpp"

namespace advchar::cli {

// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNumerical = 3;

struct GenSyntheticOptions {
  std::filesystem::path out;
  SyntheticConfig config;
};

struct TrainOptions {
  std::filesystem::path data;
  std::filesystem::path dev;     // default: dev.jsonl next to data
  std::filesystem::path labels;  // default: labels.json next to data
  std::filesystem::path checkpoint;
  std::filesystem::path log;     // default: <checkpoint>.log.csv
  std::size_t min_freq = 1;
  ModelConfig model;
  TrainConfig train;
};

struct TrainSummary {
  double best_dev_accuracy = 0.0;
  int epochs_run = 0;
  int best_epoch = 0;
};

struct AttackOptions {
  std::filesystem::path data;
  std::filesystem::path checkpoint;
  std::filesystem::path out;
  std::uint64_t seed = 0;
  AttackMethod method = AttackMethod::kAdvChar;
  AttackMode mode = AttackMode::kUntargeted;
  std::string strategy = "next";  // "next" or "fixed:<class name or index>"
  std::vector<Norm> norms = {Norm::kL2};
  // (c, kappa) cells.
  std::vector<std::pair<double, double>> sweep = {{5, 5}, {10, 5}, {10, 10}};
  int steps = 100;
  double alpha = AttackConfig{}.alpha;
  bool final_only = false;
  int workers = 0;
  int clusters = 0;
};

struct TransferOptions {
  std::filesystem::path adversarial;
  std::filesystem::path blackbox;
  std::filesystem::path out;
};

struct ExportOptions {
  std::filesystem::path data;
  std::filesystem::path adversarial;
  std::filesystem::path labels;  // default: labels.json next to data
  std::filesystem::path out;
  std::size_t n_each = 50;
  std::uint64_t seed = 0;
};

// "5/5,10/5" -> {{5,5},{10,5}}. ConfigError on malformed input.
std::vector<std::pair<double, double>> parse_sweep(const std::string& text);
// "l1,l2" -> {kL1, kL2}.
std::vector<Norm> parse_norms(const std::string& text);
// "next" | "fixed:<name or index>", resolved against class names.
TargetStrategy parse_strategy(const std::string& text,
                              const std::vector<std::string>& class_names);
// File name of the per-example records of one sweep cell.
std::string records_file_name(const EvalReport& report);

void cmd_gen_synthetic(const GenSyntheticOptions& opts);
TrainSummary cmd_train(const TrainOptions& opts);
std::vector<EvalReport> cmd_attack(const AttackOptions& opts);
TransferReport cmd_transfer(const TransferOptions& opts);
std::vector<StudyItem> cmd_export_human_eval(const ExportOptions& opts);

// Parses argv, dispatches and maps failures to exit codes. Diagnostics go to
// stderr as a single line.
int run(int argc, char** argv);

}  // namespace advchar::cli
