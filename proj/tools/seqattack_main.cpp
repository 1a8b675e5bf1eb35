#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "seqattack/experiment.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

seqattack::ExperimentConfig load_config(const std::string& path, std::int64_t seed_override,
                                        const std::string& out_override) {
  auto cfg = seqattack::ExperimentConfig::from_file(path);
  if (seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(seed_override);
  if (!out_override.empty()) cfg.out_dir = out_override;
  return cfg;
}

// No attacks listed: the run trains the classifier per fold and the report
// carries only the "without attack" row.
int cmd_train_classifier(const seqattack::ExperimentConfig& cfg) {
  seqattack::ExperimentConfig c = cfg;
  c.attacks.clear();
  seqattack::RunManifest manifest = seqattack::run_experiment(c);
  std::cout << seqattack::render_report_table(manifest);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"seqattack: user-sequence classifiers, a personalized next-post "
               "generation attack, baselines, and a metric suite"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  std::int64_t seed = -1;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "experiment config JSON")->required();
    sub->add_option("--seed", seed, "override the config seed");
    sub->add_option("--out", out_dir, "output directory");
  };

  CLI::App* train = app.add_subcommand("train-classifier", "train the target classifier per fold");
  add_common(train);
  CLI::App* attack = app.add_subcommand("attack", "run the listed attacks and score them");
  add_common(attack);
  CLI::App* ablation = app.add_subcommand("ablation", "nine-variant component grid");
  add_common(ablation);
  CLI::App* ksweep = app.add_subcommand("ksweep", "sweep the recent-k window");
  add_common(ksweep);
  std::vector<int> k_values = {1, 2, 3, 4, 5};
  ksweep->add_option("--k", k_values, "k values to sweep");

  CLI::App* report = app.add_subcommand("report", "render a saved manifest");
  std::string manifest_path;
  report->add_option("--manifest", manifest_path, "manifest.json path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (report->parsed()) {
      std::ifstream in(manifest_path);
      if (!in) throw seqattack::ConfigError("cannot open manifest: " + manifest_path);
      nlohmann::json j = nlohmann::json::parse(in);
      seqattack::RunManifest m;
      m.config_fingerprint = j.value("config_fingerprint", "");
      m.config = j.value("config", nlohmann::json::object());
      m.created_at = j.value("created_at", "");
      m.box = j.value("box", "white");
      const nlohmann::json folds = j.value("folds", nlohmann::json::array());
      for (const auto& fj : folds) {
        seqattack::FoldOutcome f;
        f.fold = fj.value("fold", 0);
        f.f1_before = fj.value("f1_before", 0.0);
        if (fj.contains("surrogate_agreement") && !fj["surrogate_agreement"].is_null())
          f.surrogate_agreement = fj["surrogate_agreement"].get<double>();
        const nlohmann::json reports = fj.value("reports", nlohmann::json::object());
        for (const auto& [name, rj] : reports.items())
          f.reports[name] = seqattack::attack_report_from_json(rj);
        m.folds.push_back(std::move(f));
      }
      std::cout << seqattack::render_report_table(m);
      return kExitOk;
    }

    auto cfg = load_config(config_path, seed, out_dir);
    if (train->parsed()) return cmd_train_classifier(cfg);
    if (attack->parsed()) {
      auto manifest = seqattack::run_experiment(cfg);
      std::cout << seqattack::render_report_table(manifest);
      return kExitOk;
    }
    if (ablation->parsed()) {
      auto rows = seqattack::run_ablation(cfg);
      std::cout << seqattack::render_ablation_csv(rows);
      return kExitOk;
    }
    if (ksweep->parsed()) {
      auto rows = seqattack::run_ksweep(cfg, k_values);
      std::cout << seqattack::render_ksweep_csv(rows);
      return kExitOk;
    }
  } catch (const seqattack::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}
