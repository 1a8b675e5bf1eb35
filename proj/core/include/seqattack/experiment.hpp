#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "seqattack/baselines.hpp"
#include "seqattack/classifiers.hpp"
#include "seqattack/corpus.hpp"
#include "seqattack/evalsuite.hpp"
#include "seqattack/finetune.hpp"
#include "seqattack/generator.hpp"
#include "seqattack/vectorizer.hpp"

namespace seqattack {

struct DatasetSpec {
  std::string path;                       // JSONL file, or
  std::optional<SynthesisConfig> synthetic;
};

struct AttackParams {
  int n_flips = 1;
  int n_bugs = 1;
  int trigger_len = 3;
  bool copycat_greedy = false;
};

struct ExperimentConfig {
  DatasetSpec dataset;
  PreprocessConfig corpus;
  int d = 30;
  int d_prime = 30;
  int vocab_size = 5000;
  int folds = 5;
  std::optional<int> folds_limit;  // run only the first N folds
  VectorizerConfig vectorizer;
  ClassifierKind classifier_kind = ClassifierKind::HRNN;
  ClassifierConfig classifier;
  GeneratorConfig generator;
  FinetuneConfig finetune;
  std::vector<std::string> attacks;  // copycat|hotflip|unitrigger|textbugger|malcom|petgen
  AttackParams attack_params;
  std::string box = "white";  // "white" | "black"
  std::string sentiment_lexicon = "builtin";
  std::uint64_t seed = 0;
  std::string out_dir;

  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig from_file(const std::string& path);
  nlohmann::json to_json() const;
  std::string fingerprint() const;  // over the canonical json + seed
  void validate() const;
};

struct FoldOutcome {
  int fold = 0;
  double f1_before = 0.0;
  std::optional<double> surrogate_agreement;
  std::map<std::string, AttackReport> reports;
  std::vector<std::string> train_ids, test_ids;
  std::map<std::string, std::string> checkpoints;
  bool id_audit_ok = true;
};

struct RunManifest {
  std::string config_fingerprint;
  nlohmann::json config;
  std::string created_at;
  std::string box;
  std::vector<FoldOutcome> folds;
  std::optional<std::string> error;  // partial-results marker

  nlohmann::json aggregate() const;  // arithmetic mean over folds
  nlohmann::json to_json() const;
  void save(const std::string& path) const;
};

// Full per-fold protocol: train the target classifier (plus a surrogate in the
// black-box setting), mount every listed attack on the test fold, score it.
RunManifest run_experiment(const ExperimentConfig& cfg);

struct AblationRow {
  std::string variant;
  double f1_before = 0.0;
  AttackReport report;
};

// The nine-variant grid: base generator, each task alone, attention alone,
// and full pipelines against both classifier kinds.
std::vector<AblationRow> run_ablation(const ExperimentConfig& cfg);

struct KSweepRow {
  int k = 0;
  double f1 = 0.0;
  std::optional<double> atk;
  double rs = 0.0;
};

std::vector<KSweepRow> run_ksweep(const ExperimentConfig& cfg, std::vector<int> k_values = {1, 2, 3, 4, 5});

// Rendering helpers shared by the CLI `report` subcommand.
std::string render_report_table(const RunManifest& manifest);
std::string render_ablation_csv(const std::vector<AblationRow>& rows);
std::string render_ksweep_csv(const std::vector<KSweepRow>& rows);
void write_text_file(const std::string& path, const std::string& content);

nlohmann::json attack_report_to_json(const AttackReport& r);
AttackReport attack_report_from_json(const nlohmann::json& j);

// Environment-variable cache root (SEQATTACK_CACHE) or empty when disabled.
std::string cache_root();

}  // namespace seqattack
