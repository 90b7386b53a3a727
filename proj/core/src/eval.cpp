#include "advchar/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "advchar/baseline.hpp"
#include "advchar/error.hpp"
#include "advchar/parallel.hpp"
#include "advchar/random.hpp"
#include "advchar/trainer.hpp"

namespace advchar {

using nlohmann::json;

std::string to_string(AttackMethod method) {
  return method == AttackMethod::kAdvChar ? "advchar" : "baseline";
}

std::string to_string(AttackMode mode) {
  return mode == AttackMode::kTargeted ? "targeted" : "untargeted";
}

std::string to_string(Norm norm) { return norm == Norm::kL1 ? "l1" : "l2"; }

std::string strategy_string(const AttackConfig& cfg) {
  if (cfg.mode == AttackMode::kUntargeted) return "-";
  if (cfg.strategy.kind == TargetStrategy::Kind::kNextClass) return "next";
  return "fixed:" + std::to_string(cfg.strategy.fixed_class);
}

std::size_t modified_chars(std::span<const TokenId> x, std::span<const TokenId> x_prime) {
  return modified_positions(x, x_prime).size();
}

double tsr(std::span<const AttackRecord> records, const Model& model) {
  if (records.empty()) throw UndefinedMetricError("TSR is undefined on an empty adversarial set");
  std::size_t hits = 0;
  for (const auto& r : records) {
    if (!r.target) throw UndefinedMetricError("TSR needs a target for every record");
    if (model.predict(r.adversarial_tokens) == *r.target) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(records.size());
}

double usr(std::span<const AttackRecord> records, const Model& model) {
  if (records.empty()) throw UndefinedMetricError("USR is undefined on an empty adversarial set");
  std::size_t flips = 0;
  for (const auto& r : records) {
    if (model.predict(r.adversarial_tokens) != r.true_label) ++flips;
  }
  return static_cast<double>(flips) / static_cast<double>(records.size());
}

SubsetStats compute_subset_stats(std::span<const AttackRecord> records, const Model& model,
                                 AttackMode mode, bool only_correct) {
  std::vector<AttackRecord> subset;
  for (const auto& r : records) {
    if (!only_correct || r.predicted_before == r.true_label) subset.push_back(r);
  }
  SubsetStats s;
  s.count = subset.size();
  if (subset.empty()) return s;
  s.usr = usr(subset, model);
  if (mode == AttackMode::kTargeted) s.tsr = tsr(subset, model);
  double total = 0.0;
  double total_successful = 0.0;
  for (const auto& r : subset) {
    const auto changed = static_cast<double>(modified_chars(r.tokens, r.adversarial_tokens));
    total += changed;
    const int pred = model.predict(r.adversarial_tokens);
    if (is_attack_success(pred, r.true_label, r.target.value_or(r.true_label), mode)) {
      ++s.successes;
      total_successful += changed;
    }
  }
  s.mean_modified_chars = total / static_cast<double>(s.count);
  if (s.successes > 0) {
    s.mean_modified_chars_successful = total_successful / static_cast<double>(s.successes);
  }
  return s;
}

EvalReport run_evaluation(const Model& model, const Vocab& vocab,
                          std::span<const Example> test_set, const AttackConfig& cfg,
                          AttackMethod method, const EvalOptions& options) {
  if (test_set.empty()) throw DataError("evaluation needs a non-empty test set");
  if (vocab.size() != model.vocab_size()) {
    throw DataError("vocab size " + std::to_string(vocab.size()) +
                    " does not match the model's " + std::to_string(model.vocab_size()));
  }
  const int num_classes = model.num_classes();
  cfg.validate(num_classes);
  for (std::size_t i = 0; i < test_set.size(); ++i) {
    if (test_set[i].label < 0 || test_set[i].label >= num_classes) {
      throw DataError("test example " + std::to_string(i) + " has label outside the model's " +
                      std::to_string(num_classes) + " classes");
    }
  }
  const TokenizedDataset data =
      tokenize(vocab, test_set, static_cast<std::size_t>(model.config().max_len));

  std::optional<ClusterAssignment> clusters;
  if (method == AttackMethod::kBaseline) {
    const int k = options.clusters > 0 ? options.clusters
                                       : default_cluster_count(model.vocab_size());
    clusters = cluster_embeddings(model.params().token_embedding, k,
                                  derive_seed(options.seed, 0xC1D57E55ull), options.cluster_iters);
  }

  EvalReport report;
  report.method = method;
  report.config = cfg;
  report.records.resize(data.size());
  parallel_for(data.size(), options.workers, [&](std::size_t i) {
    const TokenSequence& x = data.inputs[i];
    const int y = data.labels[i];
    const std::uint64_t seed = derive_seed(options.seed, i);
    AttackRecord& rec = report.records[i];
    rec.index = i;
    rec.method = to_string(method);
    rec.text = test_set[i].text;
    rec.tokens = x;
    rec.true_label = y;
    rec.predicted_before = model.predict(x);

    if (method == AttackMethod::kAdvChar) {
      const AttackResult res = attack(model, x, y, cfg, seed);
      rec.adversarial_tokens = res.x_prime;
      rec.steps_used = res.steps_used;
      rec.norm = res.norm_of_best;
      if (cfg.mode == AttackMode::kTargeted) rec.target = res.target;
    } else {
      std::mt19937_64 rng(seed);
      const int target = resolve_target(y, cfg, num_classes, rng);
      if (cfg.mode == AttackMode::kTargeted) rec.target = target;
      const bool perturbable =
          std::any_of(x.begin() + 1, x.end(), [](TokenId t) { return !is_special(t); });
      rec.adversarial_tokens = perturbable ? baseline_attack(x, *clusters, rng) : x;
      rec.steps_used = 1;
      const EmbeddingSeq<Real> delta = model.embed(rec.adversarial_tokens) - model.embed(x);
      rec.norm = perturbation_norm(delta.bottomRows(delta.rows() - 1), cfg.norm);
    }
    const Logits<Real> z = model.forward(rec.adversarial_tokens);
    rec.predicted_after = argmax(z);
    rec.logits.assign(z.data(), z.data() + z.size());
    rec.adversarial_text = vocab.decode(rec.adversarial_tokens);
    rec.modified_positions = modified_positions(x, rec.adversarial_tokens);
    rec.succeeded = is_attack_success(rec.predicted_after, y, rec.target.value_or(y), cfg.mode);
  });

  std::size_t correct = 0;
  for (const auto& r : report.records) correct += r.predicted_before == r.true_label;
  report.original_accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
  report.all = compute_subset_stats(report.records, model, cfg.mode, false);
  report.originally_correct = compute_subset_stats(report.records, model, cfg.mode, true);
  return report;
}

std::string record_to_json(const AttackRecord& r, const std::vector<std::string>& class_names) {
  auto name = [&](int idx) -> const std::string& {
    if (idx < 0 || static_cast<std::size_t>(idx) >= class_names.size()) {
      throw DataError("class index " + std::to_string(idx) + " has no name");
    }
    return class_names[static_cast<std::size_t>(idx)];
  };
  json j;
  j["index"] = r.index;
  j["method"] = r.method;
  j["text"] = r.text;
  j["adversarial_text"] = r.adversarial_text;
  j["tokens"] = r.tokens;
  j["adversarial_tokens"] = r.adversarial_tokens;
  j["true_label"] = name(r.true_label);
  j["predicted_before"] = name(r.predicted_before);
  j["predicted_after"] = name(r.predicted_after);
  j["target"] = r.target ? json(name(*r.target)) : json(nullptr);
  j["modified_positions"] = r.modified_positions;
  j["steps_used"] = r.steps_used;
  j["succeeded"] = r.succeeded;
  j["norm"] = r.norm;
  json logits = json::object();
  for (std::size_t c = 0; c < r.logits.size(); ++c) logits[name(static_cast<int>(c))] = r.logits[c];
  j["logits"] = std::move(logits);
  return j.dump();
}

AttackRecord record_from_json(const std::string& line,
                              const std::vector<std::string>& class_names) {
  const LabelMap labels(class_names);
  try {
    const json j = json::parse(line);
    AttackRecord r;
    r.index = j.at("index").get<std::size_t>();
    r.method = j.at("method").get<std::string>();
    r.text = j.at("text").get<std::string>();
    r.adversarial_text = j.at("adversarial_text").get<std::string>();
    r.tokens = j.at("tokens").get<TokenSequence>();
    r.adversarial_tokens = j.at("adversarial_tokens").get<TokenSequence>();
    r.true_label = labels.index_of(j.at("true_label").get<std::string>());
    r.predicted_before = labels.index_of(j.at("predicted_before").get<std::string>());
    r.predicted_after = labels.index_of(j.at("predicted_after").get<std::string>());
    if (!j.at("target").is_null()) r.target = labels.index_of(j["target"].get<std::string>());
    r.modified_positions = j.at("modified_positions").get<std::vector<int>>();
    r.steps_used = j.at("steps_used").get<int>();
    r.succeeded = j.at("succeeded").get<bool>();
    r.norm = j.at("norm").get<double>();
    for (const auto& cls : class_names) r.logits.push_back(j.at("logits").at(cls).get<double>());
    return r;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed attack record: ") + e.what());
  }
}

void write_records(const std::filesystem::path& path, std::span<const AttackRecord> records,
                   const std::vector<std::string>& class_names) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& r : records) out << record_to_json(r, class_names) << '\n';
}

std::vector<AttackRecord> read_records(const std::filesystem::path& path,
                                       const std::vector<std::string>& class_names) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileNotFoundError("adversarial records not found: " + path.string());
  std::vector<AttackRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(record_from_json(line, class_names));
    } catch (const DataError& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

namespace {

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json stats_json(const SubsetStats& s) {
  return {{"count", s.count},
          {"successes", s.successes},
          {"tsr", optional_json(s.tsr)},
          {"usr", optional_json(s.usr)},
          {"mean_modified_chars", s.mean_modified_chars},
          {"mean_modified_chars_successful", optional_json(s.mean_modified_chars_successful)}};
}

std::string fmt_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string fmt_optional(const std::optional<double>& v) { return v ? fmt_number(*v) : ""; }

}  // namespace

void write_summary_json(const std::filesystem::path& path, std::span<const EvalReport> reports) {
  json cells = json::array();
  for (const auto& r : reports) {
    cells.push_back({{"method", to_string(r.method)},
                     {"mode", to_string(r.config.mode)},
                     {"strategy", strategy_string(r.config)},
                     {"norm", to_string(r.config.norm)},
                     {"c", r.config.c},
                     {"kappa", r.config.kappa},
                     {"steps", r.config.max_steps},
                     {"alpha", r.config.alpha},
                     {"original_accuracy", r.original_accuracy},
                     {"all", stats_json(r.all)},
                     {"originally_correct", stats_json(r.originally_correct)}});
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << cells.dump(2) << '\n';
}

std::string summary_csv_header() {
  return "method,mode,strategy,norm,c,kappa,subset,count,original_acc,tsr,usr,"
         "mean_modified_chars,mean_modified_chars_successful";
}

std::vector<std::string> summary_csv_rows(const EvalReport& r) {
  std::vector<std::string> rows;
  const std::string prefix = to_string(r.method) + "," + to_string(r.config.mode) + "," +
                             strategy_string(r.config) + "," + to_string(r.config.norm) + "," +
                             fmt_number(r.config.c) + "," + fmt_number(r.config.kappa) + ",";
  const std::pair<const char*, const SubsetStats*> subsets[] = {
      {"all", &r.all}, {"originally_correct", &r.originally_correct}};
  for (const auto& [name, s] : subsets) {
    rows.push_back(prefix + name + "," + std::to_string(s->count) + "," +
                   fmt_number(r.original_accuracy) + "," + fmt_optional(s->tsr) + "," +
                   fmt_optional(s->usr) + "," + fmt_number(s->mean_modified_chars) + "," +
                   fmt_optional(s->mean_modified_chars_successful));
  }
  return rows;
}

void write_summary_csv(const std::filesystem::path& path, std::span<const EvalReport> reports) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << summary_csv_header() << '\n';
  for (const auto& r : reports) {
    for (const auto& row : summary_csv_rows(r)) out << row << '\n';
  }
}

TransferReport transfer_evaluation(const Model& blackbox, const Vocab& vocab,
                                   std::span<const AttackRecord> records) {
  if (records.empty()) throw DataError("transfer evaluation needs at least one record");
  if (vocab.size() != blackbox.vocab_size()) {
    throw DataError("blackbox vocab does not match its embedding table");
  }
  TransferReport rep;
  rep.count = records.size();
  std::size_t clean_ok = 0, adv_ok = 0, adv_ok_successful = 0;
  for (const auto& r : records) {
    if (r.tokens.empty() || r.tokens.size() != r.adversarial_tokens.size()) {
      throw DataError("record " + std::to_string(r.index) + " has inconsistent token lengths");
    }
    const TokenSequence reencoded = vocab.encode(r.text, r.tokens.size() - 1);
    const TokenSequence adv_reencoded = vocab.encode(r.adversarial_text, r.tokens.size() - 1);
    if (reencoded != r.tokens || adv_reencoded != r.adversarial_tokens) {
      throw DataError("record " + std::to_string(r.index) +
                      " was produced with a different vocabulary than the blackbox model");
    }
    if (r.true_label < 0 || r.true_label >= blackbox.num_classes()) {
      throw DataError("record " + std::to_string(r.index) + " label outside blackbox classes");
    }
    clean_ok += blackbox.predict(r.tokens) == r.true_label;
    const bool adv_correct = blackbox.predict(r.adversarial_tokens) == r.true_label;
    adv_ok += adv_correct;
    if (r.succeeded) {
      ++rep.successful_count;
      adv_ok_successful += adv_correct;
    }
  }
  const auto n = static_cast<double>(records.size());
  rep.clean_accuracy = static_cast<double>(clean_ok) / n;
  rep.adversarial_accuracy = static_cast<double>(adv_ok) / n;
  if (rep.successful_count > 0) {
    rep.adversarial_accuracy_successful =
        static_cast<double>(adv_ok_successful) / static_cast<double>(rep.successful_count);
  }
  return rep;
}

std::vector<StudyItem> export_human_eval(std::span<const Example> clean,
                                         std::span<const AttackRecord> adversarial,
                                         const std::vector<std::string>& class_names,
                                         std::size_t n_each, std::mt19937_64& rng) {
  if (class_names.size() < 2) throw ConfigError("human eval needs at least two labels");
  if (n_each < 1) throw ConfigError("human eval needs n_each >= 1");
  std::vector<const AttackRecord*> fooled;
  for (const auto& r : adversarial) {
    if (r.predicted_after != r.true_label) fooled.push_back(&r);
  }
  if (clean.size() < n_each) {
    throw ConfigError("need " + std::to_string(n_each) + " clean examples, have " +
                      std::to_string(clean.size()));
  }
  if (fooled.size() < n_each) {
    throw ConfigError("need " + std::to_string(n_each) +
                      " adversarial examples with a wrong prediction, have " +
                      std::to_string(fooled.size()));
  }

  auto sample = [&](std::size_t pool) {
    std::vector<std::size_t> idx(pool);
    for (std::size_t i = 0; i < pool; ++i) idx[i] = i;
    for (std::size_t i = 0; i < n_each; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, pool - 1);
      std::swap(idx[i], idx[pick(rng)]);
    }
    idx.resize(n_each);
    return idx;
  };
  const int num_labels = static_cast<int>(class_names.size());
  auto make_item = [&](std::string text, int truth, int fake, const char* source) {
    StudyItem item;
    item.text = std::move(text);
    item.correct = class_names[static_cast<std::size_t>(truth)];
    const std::string& fake_name = class_names[static_cast<std::size_t>(fake)];
    std::bernoulli_distribution truth_first(0.5);
    if (truth_first(rng)) {
      item.label_a = item.correct;
      item.label_b = fake_name;
    } else {
      item.label_a = fake_name;
      item.label_b = item.correct;
    }
    item.source = source;
    return item;
  };

  std::vector<StudyItem> items;
  for (std::size_t i : sample(clean.size())) {
    const Example& ex = clean[i];
    if (ex.label < 0 || ex.label >= num_labels) throw DataError("clean example label out of range");
    std::uniform_int_distribution<int> other(0, num_labels - 2);
    int fake = other(rng);
    if (fake >= ex.label) ++fake;
    items.push_back(make_item(ex.text, ex.label, fake, "clean"));
  }
  for (std::size_t i : sample(fooled.size())) {
    const AttackRecord& r = *fooled[i];
    items.push_back(make_item(r.adversarial_text, r.true_label, r.predicted_after, "adversarial"));
  }
  std::shuffle(items.begin(), items.end(), rng);
  for (std::size_t i = 0; i < items.size(); ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "q%04zu", i);
    items[i].id = id;
  }
  return items;
}

void write_human_eval(const std::filesystem::path& study_path,
                      const std::filesystem::path& key_path,
                      std::span<const StudyItem> items) {
  std::ofstream study(study_path, std::ios::binary);
  std::ofstream key(key_path, std::ios::binary);
  if (!study || !key) throw DataError("cannot write human-eval files");
  for (const auto& item : items) {
    study << json{{"id", item.id}, {"text", item.text}, {"label_a", item.label_a},
                  {"label_b", item.label_b}}
                 .dump()
          << '\n';
    key << json{{"id", item.id}, {"correct", item.correct}, {"source", item.source}}.dump()
        << '\n';
  }
}

}  // namespace advchar
