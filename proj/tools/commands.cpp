#include "commands.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "advchar/checkpoint.hpp"
#include "advchar/error.hpp"

namespace advchar::cli {

namespace {

std::filesystem::path sibling_or(const std::filesystem::path& given,
                                 const std::filesystem::path& anchor, const char* name) {
  return given.empty() ? anchor.parent_path() / name : given;
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, sep)) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double parse_number(const std::string& text, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("cannot parse " + what + " '" + text + "'");
  }
}

std::string format_g(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

}  // namespace

std::vector<std::pair<double, double>> parse_sweep(const std::string& text) {
  std::vector<std::pair<double, double>> cells;
  for (const auto& cell : split(text, ',')) {
    const auto parts = split(cell, '/');
    if (parts.size() != 2) throw ConfigError("sweep cell '" + cell + "' is not c/kappa");
    cells.emplace_back(parse_number(parts[0], "c"), parse_number(parts[1], "kappa"));
  }
  if (cells.empty()) throw ConfigError("sweep grid is empty");
  return cells;
}

std::vector<Norm> parse_norms(const std::string& text) {
  std::vector<Norm> norms;
  for (const auto& n : split(text, ',')) {
    if (n == "l1") norms.push_back(Norm::kL1);
    else if (n == "l2") norms.push_back(Norm::kL2);
    else throw ConfigError("unknown norm '" + n + "' (expected l1 or l2)");
  }
  if (norms.empty()) throw ConfigError("no norm given");
  return norms;
}

TargetStrategy parse_strategy(const std::string& text,
                              const std::vector<std::string>& class_names) {
  if (text == "next") return TargetStrategy::next_class();
  const std::string prefix = "fixed:";
  if (text.rfind(prefix, 0) != 0) {
    throw ConfigError("strategy must be 'next' or 'fixed:<class>', got '" + text + "'");
  }
  const std::string cls = text.substr(prefix.size());
  for (std::size_t i = 0; i < class_names.size(); ++i) {
    if (class_names[i] == cls) return TargetStrategy::fixed(static_cast<int>(i));
  }
  const double idx = parse_number(cls, "target class");
  if (idx != static_cast<int>(idx) || idx < 0 || idx >= static_cast<double>(class_names.size())) {
    throw ConfigError("unknown target class '" + cls + "'");
  }
  return TargetStrategy::fixed(static_cast<int>(idx));
}

std::string records_file_name(const EvalReport& r) {
  std::string name = to_string(r.method) + "_" + to_string(r.config.mode) + "_" +
                     to_string(r.config.norm);
  if (r.method == AttackMethod::kAdvChar) {
    name += "_c" + format_g(r.config.c) + "_k" + format_g(r.config.kappa);
  }
  return name + ".jsonl";
}

void cmd_gen_synthetic(const GenSyntheticOptions& opts) {
  if (opts.out.empty()) throw ConfigError("--out is required");
  const SyntheticDataset data = generate_synthetic(opts.config);
  write_synthetic(data, opts.out);
  std::cout << "wrote " << data.train.size() << "/" << data.dev.size() << "/"
            << data.test.size() << " train/dev/test examples to " << opts.out.string() << "\n";
}

TrainSummary cmd_train(const TrainOptions& opts) {
  if (opts.data.empty() || opts.checkpoint.empty()) {
    throw ConfigError("--data and --checkpoint are required");
  }
  const LabelMap labels = LabelMap::load(sibling_or(opts.labels, opts.data, "labels.json"));
  const auto train_examples = read_dataset(opts.data, labels);
  const auto dev_examples = read_dataset(sibling_or(opts.dev, opts.data, "dev.jsonl"), labels);
  if (train_examples.empty()) throw DataError("training set is empty");

  std::vector<std::string> corpus;
  corpus.reserve(train_examples.size());
  for (const auto& ex : train_examples) corpus.push_back(ex.text);
  const Vocab vocab = build_vocab(corpus, opts.min_freq);

  ModelConfig mc = opts.model;
  mc.num_classes = static_cast<int>(labels.size());
  const auto max_len = static_cast<std::size_t>(mc.max_len);
  const TokenizedDataset train_set = tokenize(vocab, train_examples, max_len);
  const TokenizedDataset dev_set = tokenize(vocab, dev_examples, max_len);

  TrainResult result = train(Model(mc, vocab.size()), train_set, dev_set, opts.train);
  save_checkpoint(result.model, vocab, labels.names(), opts.checkpoint);
  write_training_log(opts.log.empty() ? std::filesystem::path(opts.checkpoint.string() + ".log.csv")
                                      : opts.log,
                     result.log);
  std::printf("dev accuracy: %.4f (best epoch %d of %zu)\n", result.best_dev_accuracy,
              result.best_epoch, result.log.size());
  return {result.best_dev_accuracy, static_cast<int>(result.log.size()), result.best_epoch};
}

std::vector<EvalReport> cmd_attack(const AttackOptions& opts) {
  if (opts.data.empty() || opts.checkpoint.empty() || opts.out.empty()) {
    throw ConfigError("--data, --checkpoint and --out are required");
  }
  if (opts.sweep.empty()) throw ConfigError("sweep grid is empty");
  if (opts.norms.empty()) throw ConfigError("no norm given");
  const Checkpoint ckpt = load_checkpoint(opts.checkpoint);
  const auto examples = read_dataset(opts.data, LabelMap(ckpt.class_names));

  AttackConfig base;
  base.mode = opts.mode;
  base.max_steps = opts.steps;
  base.alpha = opts.alpha;
  base.keep_best = !opts.final_only;
  if (opts.mode == AttackMode::kTargeted) {
    base.strategy = parse_strategy(opts.strategy, ckpt.class_names);
  }
  EvalOptions eval_opts;
  eval_opts.seed = opts.seed;
  eval_opts.workers = opts.workers;
  eval_opts.clusters = opts.clusters;

  // The baseline ignores c/kappa, so it runs once per norm.
  std::vector<std::pair<double, double>> cells = opts.sweep;
  if (opts.method == AttackMethod::kBaseline) cells.resize(1);

  std::filesystem::create_directories(opts.out / "records");
  std::vector<EvalReport> reports;
  for (Norm norm : opts.norms) {
    for (const auto& [c, kappa] : cells) {
      AttackConfig cfg = base;
      cfg.norm = norm;
      cfg.c = c;
      cfg.kappa = kappa;
      EvalReport report =
          run_evaluation(ckpt.model, ckpt.vocab, examples, cfg, opts.method, eval_opts);
      write_records(opts.out / "records" / records_file_name(report), report.records,
                    ckpt.class_names);
      for (const auto& row : summary_csv_rows(report)) std::cout << row << "\n";
      reports.push_back(std::move(report));
    }
  }
  write_summary_json(opts.out / "summary.json", reports);
  write_summary_csv(opts.out / "summary.csv", reports);
  return reports;
}

TransferReport cmd_transfer(const TransferOptions& opts) {
  if (opts.adversarial.empty() || opts.blackbox.empty()) {
    throw ConfigError("--adversarial and --blackbox are required");
  }
  const Checkpoint blackbox = load_checkpoint(opts.blackbox);
  const auto records = read_records(opts.adversarial, blackbox.class_names);
  const TransferReport rep = transfer_evaluation(blackbox.model, blackbox.vocab, records);
  nlohmann::json j = {{"count", rep.count},
                      {"clean_accuracy", rep.clean_accuracy},
                      {"adversarial_accuracy", rep.adversarial_accuracy},
                      {"successful_count", rep.successful_count},
                      {"adversarial_accuracy_successful",
                       rep.adversarial_accuracy_successful
                           ? nlohmann::json(*rep.adversarial_accuracy_successful)
                           : nlohmann::json(nullptr)}};
  if (!opts.out.empty()) {
    std::filesystem::create_directories(opts.out);
    std::ofstream out(opts.out / "transfer.json", std::ios::binary);
    if (!out) throw DataError("cannot write " + (opts.out / "transfer.json").string());
    out << j.dump(2) << "\n";
  }
  std::printf("blackbox clean accuracy: %.4f, adversarial accuracy: %.4f (%zu records)\n",
              rep.clean_accuracy, rep.adversarial_accuracy, rep.count);
  return rep;
}

std::vector<StudyItem> cmd_export_human_eval(const ExportOptions& opts) {
  if (opts.data.empty() || opts.adversarial.empty() || opts.out.empty()) {
    throw ConfigError("--data, --adversarial and --out are required");
  }
  const LabelMap labels = LabelMap::load(sibling_or(opts.labels, opts.data, "labels.json"));
  const auto clean = read_dataset(opts.data, labels);
  const auto records = read_records(opts.adversarial, labels.names());
  std::mt19937_64 rng(opts.seed);
  auto items = export_human_eval(clean, records, labels.names(), opts.n_each, rng);
  std::filesystem::create_directories(opts.out);
  write_human_eval(opts.out / "study.jsonl", opts.out / "key.jsonl", items);
  std::cout << "wrote " << items.size() << " study items to " << opts.out.string() << "\n";
  return items;
}

int run(int argc, char** argv) {
  CLI::App app{"Character-level adversarial attacks on a char-level text classifier"};
  app.require_subcommand(1);
  app.set_config("--config", "", "TOML/INI file mirroring the flags; flags win");
  app.fallthrough();  // lets --config follow the subcommand name

  GenSyntheticOptions gen;
  auto* gen_cmd = app.add_subcommand("gen-synthetic", "Write a planted-keyword dataset");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--seed", gen.config.seed, "Random seed");
  gen_cmd->add_option("--classes", gen.config.classes, "Number of classes");
  gen_cmd->add_option("--fillers", gen.config.filler_chars, "Filler character count");
  gen_cmd->add_option("--keywords", gen.config.keywords_per_class, "Keywords per class");
  gen_cmd->add_option("--train-per-class", gen.config.train_per_class);
  gen_cmd->add_option("--dev-per-class", gen.config.dev_per_class);
  gen_cmd->add_option("--test-per-class", gen.config.test_per_class);
  gen_cmd->add_option("--min-length", gen.config.min_length);
  gen_cmd->add_option("--max-length", gen.config.max_length);

  TrainOptions tr;
  std::uint64_t train_seed = 0;
  auto* train_cmd = app.add_subcommand("train", "Train the classifier and write a checkpoint");
  train_cmd->add_option("--data", tr.data, "Training JSONL")->required();
  train_cmd->add_option("--dev", tr.dev, "Dev JSONL (default: dev.jsonl beside --data)");
  train_cmd->add_option("--labels", tr.labels, "Label map (default: labels.json beside --data)");
  train_cmd->add_option("--checkpoint", tr.checkpoint, "Checkpoint to write")->required();
  train_cmd->add_option("--log", tr.log, "Training log CSV");
  train_cmd->add_option("--seed", train_seed, "Seed for initialization and shuffling");
  train_cmd->add_option("--epochs", tr.train.max_epochs);
  train_cmd->add_option("--batch-size", tr.train.batch_size);
  train_cmd->add_option("--lr", tr.train.lr);
  train_cmd->add_option("--patience", tr.train.patience);
  train_cmd->add_option("--workers", tr.train.workers, "0 = all cores");
  train_cmd->add_option("--d-model", tr.model.d_model);
  train_cmd->add_option("--layers", tr.model.layers);
  train_cmd->add_option("--heads", tr.model.heads);
  train_cmd->add_option("--d-ff", tr.model.d_ff);
  train_cmd->add_option("--max-len", tr.model.max_len);
  train_cmd->add_option("--min-freq", tr.min_freq);

  AttackOptions at;
  std::string norm_text = "l2", mode_text = "untargeted", method_text = "advchar", sweep_text;
  std::optional<double> c_flag, kappa_flag;
  auto* attack_cmd = app.add_subcommand("attack", "Attack a test set and write reports");
  attack_cmd->add_option("--data", at.data, "Test JSONL")->required();
  attack_cmd->add_option("--checkpoint", at.checkpoint, "Model checkpoint")->required();
  attack_cmd->add_option("--out", at.out, "Output directory")->required();
  attack_cmd->add_option("--seed", at.seed);
  attack_cmd->add_option("--c", c_flag, "Objective weight (single cell)");
  attack_cmd->add_option("--kappa", kappa_flag, "Confidence margin (single cell)");
  attack_cmd->add_option("--sweep", sweep_text, "c/kappa cells, e.g. 5/5,10/5,10/10");
  attack_cmd->add_option("--norm", norm_text, "l1, l2 or l1,l2");
  attack_cmd->add_option("--mode", mode_text, "targeted or untargeted");
  attack_cmd->add_option("--strategy", at.strategy, "next or fixed:<class>");
  attack_cmd->add_option("--steps", at.steps, "Max optimization steps");
  attack_cmd->add_option("--alpha", at.alpha, "Adam step size on the perturbation");
  attack_cmd->add_option("--method", method_text, "advchar or baseline");
  attack_cmd->add_option("--clusters", at.clusters, "Baseline k-means clusters (0 = default)");
  attack_cmd->add_flag("--final-only", at.final_only,
                       "Return the last step's text instead of the best candidate");
  attack_cmd->add_option("--workers", at.workers, "0 = all cores");

  TransferOptions tf;
  auto* transfer_cmd = app.add_subcommand("transfer", "Score adversarial text on another model");
  transfer_cmd->add_option("--adversarial", tf.adversarial, "Attack records JSONL")->required();
  transfer_cmd->add_option("--blackbox", tf.blackbox, "Blackbox checkpoint")->required();
  transfer_cmd->add_option("--out", tf.out, "Output directory");

  ExportOptions ex;
  auto* export_cmd = app.add_subcommand("export-human-eval", "Write a human-study file");
  export_cmd->add_option("--data", ex.data, "Clean JSONL")->required();
  export_cmd->add_option("--adversarial", ex.adversarial, "Attack records JSONL")->required();
  export_cmd->add_option("--labels", ex.labels, "Label map (default: beside --data)");
  export_cmd->add_option("--n-each", ex.n_each, "Items per kind");
  export_cmd->add_option("--seed", ex.seed);
  export_cmd->add_option("--out", ex.out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen_cmd) {
      cmd_gen_synthetic(gen);
    } else if (*train_cmd) {
      tr.model.seed = train_seed;
      tr.train.seed = train_seed;
      cmd_train(tr);
    } else if (*attack_cmd) {
      at.norms = parse_norms(norm_text);
      if (mode_text == "targeted") at.mode = AttackMode::kTargeted;
      else if (mode_text == "untargeted") at.mode = AttackMode::kUntargeted;
      else throw ConfigError("unknown mode '" + mode_text + "'");
      if (method_text == "advchar") at.method = AttackMethod::kAdvChar;
      else if (method_text == "baseline") at.method = AttackMethod::kBaseline;
      else throw ConfigError("unknown method '" + method_text + "'");
      if (!sweep_text.empty()) {
        if (c_flag || kappa_flag) throw ConfigError("use either --sweep or --c/--kappa");
        at.sweep = parse_sweep(sweep_text);
      } else if (c_flag || kappa_flag) {
        at.sweep = {{c_flag.value_or(5.0), kappa_flag.value_or(5.0)}};
      }
      cmd_attack(at);
    } else if (*transfer_cmd) {
      cmd_transfer(tf);
    } else if (*export_cmd) {
      cmd_export_human_eval(ex);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    switch (e.kind()) {
      case ErrorKind::kConfig: return kExitUsage;
      case ErrorKind::kData: return kExitData;
      case ErrorKind::kNumerical: return kExitNumerical;
    }
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitOk;
}

}  // namespace advchar::cli
