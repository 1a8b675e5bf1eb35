#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "seqattack/experiment.hpp"

using namespace seqattack;
using nlohmann::json;

namespace {

// Desk-scale settings sized for test speed, not attack quality.
ExperimentConfig tiny_config() {
  ExperimentConfig cfg = ExperimentConfig::from_json(json::parse(R"({
    "dataset": {"synthetic": {"n_users": 24, "n_topics": 4, "vocab_size": 120,
                              "posts_per_user": 7}},
    "corpus": {"d": 8, "d_prime": 8, "vocab_size": 150, "folds": 3, "folds_limit": 1},
    "vectorizer": {"n_topics": 4, "gibbs_sweeps": 40, "infer_iters": 20},
    "classifier": {"kind": "hrnn", "token_embed": 8, "post_hidden": 8, "seq_hidden": 8,
                   "lr": 0.01, "batch_size": 8, "max_epochs": 4},
    "generator": {"base_cell": "gru", "token_embed": 8, "gru_hidden": 8,
                  "lr": 0.01, "batch_size": 8, "mle_epochs": 1},
    "finetune": {"k_recent": 2, "max_outer": 1, "batch_size": 8},
    "attacks": ["copycat"],
    "box": "white",
    "seed": 5
  })"));
  return cfg;
}

}  // namespace

TEST_CASE("config validation catches the documented error classes") {
  CHECK_THROWS_AS(ExperimentConfig::from_json(json::parse(R"({"attacks": []})")), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json(json::parse(
                      R"({"dataset": {"path": "x.jsonl"}, "box": "purple"})")),
                  ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json(json::parse(
                      R"({"dataset": {"path": "x.jsonl"}, "attacks": ["nuke"]})")),
                  ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_file("/nonexistent/config.json"), ConfigError);
}

TEST_CASE("config fingerprint is stable and seed-sensitive") {
  ExperimentConfig a = tiny_config();
  ExperimentConfig b = tiny_config();
  CHECK(a.fingerprint() == b.fingerprint());
  b.seed = 6;
  CHECK(a.fingerprint() != b.fingerprint());
}

TEST_CASE("run_experiment with no attacks reports only the without-attack row") {
  ExperimentConfig cfg = tiny_config();
  cfg.attacks.clear();
  RunManifest m = run_experiment(cfg);
  REQUIRE(m.folds.size() == 1);
  CHECK(m.folds[0].reports.empty());
  CHECK(m.folds[0].f1_before >= 0.0);
  json agg = m.aggregate();
  CHECK(agg.contains("f1_before"));
  CHECK(agg["reports"].empty());
}

TEST_CASE("run_experiment produces a complete copycat report and a clean id audit") {
  RunManifest m = run_experiment(tiny_config());
  REQUIRE(m.folds.size() == 1);
  const FoldOutcome& f = m.folds[0];
  CHECK(f.id_audit_ok);
  REQUIRE(f.reports.count("copycat"));
  const AttackReport& r = f.reports.at("copycat");
  CHECK(r.f1_before == f.f1_before);
  CHECK(r.f1_after >= 0.0);
  CHECK(r.f1_after <= 1.0);
  CHECK(r.bleu >= 0.0);
  CHECK(r.bleu <= 1.0);
  CHECK(r.tcs >= -1.0);
  CHECK(r.sentiment_consistency.has_value());

  // Train and test ids are disjoint and cover the fold structure.
  for (const auto& id : f.test_ids)
    CHECK(std::find(f.train_ids.begin(), f.train_ids.end(), id) == f.train_ids.end());
}

TEST_CASE("manifest aggregate equals the arithmetic fold mean") {
  ExperimentConfig cfg = tiny_config();
  cfg.folds_limit = 2;
  RunManifest m = run_experiment(cfg);
  REQUIRE(m.folds.size() == 2);
  json agg = m.aggregate();
  double expect = (m.folds[0].f1_before + m.folds[1].f1_before) / 2.0;
  CHECK(agg["f1_before"].get<double>() == doctest::Approx(expect).epsilon(1e-9));
  double ra = (m.folds[0].reports.at("copycat").f1_after +
               m.folds[1].reports.at("copycat").f1_after) / 2.0;
  CHECK(agg["reports"]["copycat"]["f1_after"].get<double>() ==
        doctest::Approx(ra).epsilon(1e-9));
}

TEST_CASE("identical config and seed reproduce identical aggregates") {
  RunManifest a = run_experiment(tiny_config());
  RunManifest b = run_experiment(tiny_config());
  CHECK(a.aggregate().dump() == b.aggregate().dump());
}

TEST_CASE("black-box runs carry a surrogate and its agreement") {
  ExperimentConfig cfg = tiny_config();
  cfg.box = "black";
  RunManifest m = run_experiment(cfg);
  REQUIRE(m.folds.size() == 1);
  CHECK(m.folds[0].surrogate_agreement.has_value());
  CHECK(*m.folds[0].surrogate_agreement >= 0.0);
  CHECK(*m.folds[0].surrogate_agreement <= 1.0);
}

TEST_CASE("manifest and outputs persist to the output directory") {
  namespace fs = std::filesystem;
  ExperimentConfig cfg = tiny_config();
  cfg.out_dir = "exp_out_test";
  RunManifest m = run_experiment(cfg);
  CHECK(fs::exists("exp_out_test/manifest.json"));
  CHECK(fs::exists("exp_out_test/report.txt"));
  CHECK(fs::exists("exp_out_test/fold_0/copycat_posts.jsonl"));

  std::ifstream in("exp_out_test/manifest.json");
  json j = json::parse(in);
  CHECK(j["format"] == "seqattack.manifest");
  CHECK(j["config_fingerprint"] == m.config_fingerprint);
  CHECK(j["folds"][0]["id_audit_ok"].get<bool>());

  // Generated-post JSONL matches the documented schema.
  std::ifstream posts("exp_out_test/fold_0/copycat_posts.jsonl");
  std::string line;
  REQUIRE(std::getline(posts, line));
  json p = json::parse(line);
  CHECK(p.contains("user_id"));
  CHECK(p.contains("generated_text"));
  CHECK(p.contains("mode"));
  fs::remove_all("exp_out_test");
}

TEST_CASE("classifier checkpoints cache through SEQATTACK_CACHE") {
  namespace fs = std::filesystem;
  fs::remove_all("cache_test_dir");
  setenv("SEQATTACK_CACHE", "cache_test_dir", 1);
  ExperimentConfig cfg = tiny_config();
  RunManifest a = run_experiment(cfg);
  REQUIRE(!a.folds[0].checkpoints.empty());
  std::string path = a.folds[0].checkpoints.begin()->second;
  CHECK(fs::exists(path));
  // A second run reuses the checkpoint and reproduces the numbers.
  RunManifest b = run_experiment(cfg);
  CHECK(a.aggregate().dump() == b.aggregate().dump());
  unsetenv("SEQATTACK_CACHE");
  fs::remove_all("cache_test_dir");
}

TEST_CASE("render helpers emit the documented table and csv shapes") {
  RunManifest m = run_experiment(tiny_config());
  std::string table = render_report_table(m);
  CHECK(table.find("without-attack") != std::string::npos);
  CHECK(table.find("copycat") != std::string::npos);

  std::vector<AblationRow> rows(2);
  rows[0].variant = "base";
  rows[1].variant = "style";
  std::string csv = render_ablation_csv(rows);
  CHECK(csv.rfind("variant,f1_before,f1_after,atk,bleu,tcs,rs,cps\n", 0) == 0);

  std::vector<KSweepRow> ks(1);
  ks[0].k = 3;
  CHECK(render_ksweep_csv(ks).rfind("k,f1,atk,rs\n", 0) == 0);
}

TEST_CASE("black-box manifest records a surrogate checkpoint") {
  namespace fs = std::filesystem;
  ExperimentConfig cfg = tiny_config();
  cfg.box = "black";
  cfg.out_dir = "bb_out_test";
  RunManifest m = run_experiment(cfg);
  REQUIRE(m.folds[0].checkpoints.count("surrogate"));
  CHECK(fs::exists(m.folds[0].checkpoints.at("surrogate")));
  REQUIRE(m.folds[0].checkpoints.count("classifier"));
  fs::remove_all("bb_out_test");
}

TEST_CASE("ablation emits nine rows; the full row equals a standalone run") {
  ExperimentConfig cfg = tiny_config();
  cfg.attacks = {"petgen"};
  auto rows = run_ablation(cfg);
  REQUIRE(rows.size() == 9);
  const std::vector<std::string> expected = {
      "base", "style", "attack_ties", "attack_hrnn", "recency",
      "target_context", "contextual_post", "petgen_hrnn", "petgen_ties"};
  for (std::size_t i = 0; i < rows.size(); ++i) CHECK(rows[i].variant == expected[i]);

  RunManifest standalone = run_experiment(cfg);
  const AttackReport& ab = rows[7].report;  // petgen_hrnn
  const AttackReport& st = standalone.folds[0].reports.at("petgen");
  CHECK(ab.f1_after == st.f1_after);
  CHECK(ab.bleu == st.bleu);
  CHECK(ab.tcs == st.tcs);
  CHECK(ab.rs == st.rs);
  CHECK(ab.cps == st.cps);
  CHECK(ab.atk.has_value() == st.atk.has_value());
  if (ab.atk && st.atk) CHECK(*ab.atk == *st.atk);
}

TEST_CASE("a single-k sweep equals run_experiment at that k") {
  ExperimentConfig cfg = tiny_config();
  cfg.attacks = {"petgen"};
  cfg.finetune.k_recent = 2;
  auto rows = run_ksweep(cfg, {2});
  REQUIRE(rows.size() == 1);
  RunManifest m = run_experiment(cfg);
  const AttackReport& r = m.folds[0].reports.at("petgen");
  CHECK(rows[0].f1 == r.f1_after);
  CHECK(rows[0].rs == r.rs);
  CHECK(rows[0].atk.has_value() == r.atk.has_value());
  if (rows[0].atk && r.atk) CHECK(*rows[0].atk == *r.atk);
}

TEST_CASE("attack report json round-trips including null atk") {
  AttackReport r;
  r.attack = "copycat";
  r.f1_before = 0.5;
  r.f1_after = 0.4;
  r.atk = std::nullopt;
  r.bleu = 0.3;
  r.improvements["hotflip"] = {std::optional<double>(1.5), std::nullopt};
  AttackReport back = attack_report_from_json(attack_report_to_json(r));
  CHECK(back.attack == r.attack);
  CHECK(back.f1_after == r.f1_after);
  CHECK(!back.atk.has_value());
  CHECK(back.improvements.at("hotflip").first.has_value());
  CHECK(!back.improvements.at("hotflip").second.has_value());
}
