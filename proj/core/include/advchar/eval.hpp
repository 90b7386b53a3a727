#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "advchar/attack.hpp"
#include "advchar/dataset.hpp"
#include "advchar/model.hpp"
#include "advchar/vocab.hpp"

namespace advchar {

enum class AttackMethod { kAdvChar, kBaseline };

std::string to_string(AttackMethod method);
std::string to_string(AttackMode mode);
std::string to_string(Norm norm);
// "next", "fixed:<class>" or "-" for untargeted runs.
std::string strategy_string(const AttackConfig& cfg);

// One attacked example, as written to the per-example JSONL.
struct AttackRecord {
  std::size_t index = 0;
  std::string method;
  std::string text;
  std::string adversarial_text;
  TokenSequence tokens;
  TokenSequence adversarial_tokens;
  int true_label = 0;
  int predicted_before = 0;
  int predicted_after = 0;
  std::optional<int> target;
  std::vector<int> modified_positions;
  int steps_used = 0;
  bool succeeded = false;
  double norm = 0.0;
  std::vector<double> logits;
};

// Fraction of records whose recomputed argmax f(x') equals the target.
// UndefinedMetricError on an empty set or a record without a target.
double tsr(std::span<const AttackRecord> records, const Model& model);
// Fraction of records whose recomputed argmax f(x') differs from the truth.
double usr(std::span<const AttackRecord> records, const Model& model);
// |{i >= 1 : x_i != x'_i}|; InvariantViolationError on length mismatch.
std::size_t modified_chars(std::span<const TokenId> x, std::span<const TokenId> x_prime);

struct SubsetStats {
  std::size_t count = 0;
  std::size_t successes = 0;
  std::optional<double> tsr;
  std::optional<double> usr;
  double mean_modified_chars = 0.0;
  std::optional<double> mean_modified_chars_successful;
};

// Metrics over the records selected by only_correct (predicted_before ==
// true_label) or all records. Success is recomputed from the model.
SubsetStats compute_subset_stats(std::span<const AttackRecord> records, const Model& model,
                                 AttackMode mode, bool only_correct);

struct EvalOptions {
  std::uint64_t seed = 0;
  int workers = 0;
  int clusters = 0;  // 0 = default_cluster_count
  int cluster_iters = 100;
};

struct EvalReport {
  AttackMethod method = AttackMethod::kAdvChar;
  AttackConfig config;
  double original_accuracy = 0.0;
  SubsetStats all;
  SubsetStats originally_correct;
  std::vector<AttackRecord> records;
};

// Attacks every example of test_set and aggregates the metrics on the full
// set and on the originally-correct subset.
EvalReport run_evaluation(const Model& model, const Vocab& vocab,
                          std::span<const Example> test_set, const AttackConfig& cfg,
                          AttackMethod method, const EvalOptions& options);

std::string record_to_json(const AttackRecord& record,
                           const std::vector<std::string>& class_names);
AttackRecord record_from_json(const std::string& line,
                              const std::vector<std::string>& class_names);
void write_records(const std::filesystem::path& path, std::span<const AttackRecord> records,
                   const std::vector<std::string>& class_names);
std::vector<AttackRecord> read_records(const std::filesystem::path& path,
                                       const std::vector<std::string>& class_names);

// Table-style summary: one JSON object per report cell.
void write_summary_json(const std::filesystem::path& path, std::span<const EvalReport> reports);
// method,mode,strategy,norm,c,kappa,subset,count,original_acc,tsr,usr,
// mean_modified_chars,mean_modified_chars_successful
std::string summary_csv_header();
std::vector<std::string> summary_csv_rows(const EvalReport& report);
void write_summary_csv(const std::filesystem::path& path, std::span<const EvalReport> reports);

struct TransferReport {
  std::size_t count = 0;
  double clean_accuracy = 0.0;
  double adversarial_accuracy = 0.0;
  std::size_t successful_count = 0;
  // Accuracy on records that fooled the source model.
  std::optional<double> adversarial_accuracy_successful;
};

// Accuracy of a second model on adversarial sequences crafted against
// another one. DataError if the records were not produced with the same
// vocabulary.
TransferReport transfer_evaluation(const Model& blackbox, const Vocab& vocab,
                                   std::span<const AttackRecord> records);

struct StudyItem {
  std::string id;
  std::string text;
  std::string label_a;
  std::string label_b;
  std::string correct;
  std::string source;  // "clean" or "adversarial"
};

// n_each clean and n_each adversarial items, each offering the true label and
// a fake one (a random other label for clean text, the model's wrong
// prediction for adversarial text), shuffled. ConfigError when either pool is
// too small.
std::vector<StudyItem> export_human_eval(std::span<const Example> clean,
                                         std::span<const AttackRecord> adversarial,
                                         const std::vector<std::string>& class_names,
                                         std::size_t n_each, std::mt19937_64& rng);

// study: {id, text, label_a, label_b}; key: {id, correct, source}.
void write_human_eval(const std::filesystem::path& study_path,
                      const std::filesystem::path& key_path,
                      std::span<const StudyItem> items);

}  // namespace advchar
