// Acceptance suite: one named criterion per function, each printing a single
// [PASS]/[FAIL] line. Run all with no arguments or a subset by number.

#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include "metric_oracles.hpp"
#include "seqattack/experiment.hpp"
#include "test_util.hpp"

using namespace seqattack;
using nlohmann::json;

namespace {

struct Criterion {
  int number;
  std::string name;
  std::function<bool(std::string&)> run;
};

// ---------------------------------------------------------------------------
// 1. Metric oracle suite
// ---------------------------------------------------------------------------

bool criterion_metrics(std::string& detail) {
  std::mt19937 rng(2024);
  std::uniform_int_distribution<int> bit(0, 1), users(1, 10), len(1, 12), word(0, 9);
  bool ok = true;
  int instances = 0;

  // f1 / attack_rate / improvement on randomized label vectors.
  for (int trial = 0; trial < 60; ++trial) {
    int n = users(rng);
    std::vector<int> preds, pre, post, truth;
    for (int i = 0; i < n; ++i) {
      preds.push_back(bit(rng));
      pre.push_back(bit(rng));
      post.push_back(bit(rng));
      truth.push_back(bit(rng));
    }
    ok &= std::abs(f1_score(preds, truth) - oracle::f1(preds, truth)) < 1e-6;
    auto a = attack_rate(pre, post, truth);
    auto oa = oracle::attack_rate(pre, post, truth);
    ok &= a.has_value() == oa.has_value();
    if (a && oa) ok &= std::abs(*a - *oa) < 1e-6;
    std::uniform_real_distribution<double> val(0.05, 2.0);
    double ours = val(rng), base = val(rng);
    ok &= std::abs(*improvement(ours, base, Direction::LowerBetter) -
                   *oracle::improvement(ours, base, true)) < 1e-6;
    ok &= std::abs(*improvement(ours, base, Direction::HigherBetter) -
                   *oracle::improvement(ours, base, false)) < 1e-6;
    ++instances;
  }

  // bleu on randomized corpora.
  for (int trial = 0; trial < 60; ++trial) {
    std::vector<std::string> cands, refs;
    std::vector<std::vector<std::string>> ct, rt;
    std::uniform_int_distribution<int> docs(1, 5);
    for (int i = 0, n = docs(rng); i < n; ++i) {
      std::vector<std::string> toks;
      std::string text;
      for (int w = 0, l = len(rng); w < l; ++w) {
        toks.push_back("w" + std::to_string(word(rng)));
        text += (w ? " " : "") + toks.back();
      }
      cands.push_back(text);
      ct.push_back(toks);
    }
    for (int i = 0, n = docs(rng); i < n; ++i) {
      std::vector<std::string> toks;
      std::string text;
      for (int w = 0, l = len(rng); w < l; ++w) {
        toks.push_back("w" + std::to_string(word(rng)));
        text += (w ? " " : "") + toks.back();
      }
      refs.push_back(text);
      rt.push_back(toks);
    }
    ok &= std::abs(bleu(cands, refs) - oracle::bleu(ct, rt)) < 1e-6;
    ++instances;
  }

  // TCS / RS / CPS against the double-loop oracles on a shared vectorizer.
  std::vector<std::string> docs;
  for (int cluster = 0; cluster < 2; ++cluster)
    for (int d = 0; d < 15; ++d) {
      std::string text;
      for (int w = 0; w < 12; ++w)
        text += (w ? " " : "") + std::string(cluster ? "zeta" : "eta") +
                std::to_string(word(rng));
      docs.push_back(text);
    }
  VectorizerConfig vcfg;
  vcfg.n_topics = 2;
  vcfg.seed = 3;
  TopicVectorizer vec = fit_topic_model(docs, vcfg);
  auto rand_doc = [&] {
    std::string text;
    int c = bit(rng);
    for (int w = 0, l = 3 + word(rng); w < l; ++w)
      text += (w ? " " : "") + std::string(c ? "zeta" : "eta") + std::to_string(word(rng));
    return text;
  };
  for (int trial = 0; trial < 50; ++trial) {
    int n = users(rng);
    std::vector<std::string> gen, ctx;
    std::vector<std::vector<std::string>> hist;
    std::vector<std::vector<double>> attn;
    std::uniform_real_distribution<double> score(0.0, 1.0);
    for (int u = 0; u < n; ++u) {
      gen.push_back(rand_doc());
      ctx.push_back(rand_doc());
      std::vector<std::string> h;
      std::vector<double> a;
      for (int p = 0; p < 4; ++p) {
        h.push_back(rand_doc());
        a.push_back(score(rng));
      }
      hist.push_back(h);
      attn.push_back(a);
    }
    ok &= std::abs(target_context_similarity(gen, ctx, vec) - oracle::tcs(gen, ctx, vec)) < 1e-6;
    ok &= std::abs(recent_post_similarity(gen, hist, 3, vec) - oracle::rs(gen, hist, 3, vec)) < 1e-6;
    ok &= std::abs(context_post_similarity(gen, hist, attn, vec) -
                   oracle::cps(gen, hist, attn, vec)) < 1e-6;
    ++instances;
  }

  // The two table-anchored improvement checks.
  double impr_f1 = *improvement(0.474, 0.479, Direction::LowerBetter);
  double impr_atk = *improvement(27.0, 25.5, Direction::HigherBetter);
  ok &= std::abs(impr_f1 - 1.044) < 0.001;
  ok &= std::abs(impr_atk - 5.882) < 0.001;

  std::ostringstream d;
  d << instances << " randomized instances, all metrics within 1e-6 of the oracles; "
    << "anchored improvements " << impr_f1 << "% / " << impr_atk << "%";
  detail = d.str();
  return ok;
}

// ---------------------------------------------------------------------------
// 2. MMD property suite
// ---------------------------------------------------------------------------

bool criterion_mmd(std::string& detail) {
  bool ok = true;
  MmdKernel kernel;
  kernel.use_median_heuristic = false;
  kernel.fixed_bandwidths = {1.0};

  std::mt19937 rng(7);
  std::normal_distribution<double> gauss(0.0, 1.5);
  auto rand_set = [&](int n, int dim) {
    std::vector<Eigen::VectorXd> out;
    for (int i = 0; i < n; ++i) {
      Eigen::VectorXd v(dim);
      for (int j = 0; j < dim; ++j) v(j) = gauss(rng);
      out.push_back(v);
    }
    return out;
  };

  for (int trial = 0; trial < 20; ++trial) {
    auto a = rand_set(6, 3), b = rand_set(5, 3), c = rand_set(4, 3);
    ok &= mmd(a, a, kernel) <= 1e-6;                              // zero on identical
    ok &= mmd(a, b, kernel) == mmd(b, a, kernel);                 // exact symmetry
    ok &= mmd(a, b, kernel) >= 0.0;                               // nonnegativity
    ok &= mmd(a, c, kernel) <= mmd(a, b, kernel) + mmd(b, c, kernel) + 1e-6;  // triangle
  }

  Eigen::VectorXd x(1), y(1);
  x << 0.0;
  y << 2.0;
  double singleton = mmd({x}, {y}, kernel);
  double closed = std::sqrt(2.0 - 2.0 * std::exp(-2.0));
  ok &= std::abs(singleton - closed) < 1e-4 && std::abs(closed - 1.31504) < 1e-4;

  std::ostringstream d;
  d << "identical/symmetry/nonneg/triangle over 20 random set triples; singleton = "
    << singleton << " vs closed form " << closed;
  detail = d.str();
  return ok;
}

// ---------------------------------------------------------------------------
// 3. Attention / embedding suite
// ---------------------------------------------------------------------------

bool criterion_attention(std::string& detail) {
  using namespace seqattack::ad;
  bool ok = true;

  Var e1 = constant((Mat(1, 2) << 1.0, 0.0).finished());
  Var e2 = constant((Mat(1, 2) << 0.0, 1.0).finished());

  Var single = ConditionalGenerator::context_biased_embedding({e1}, {0.42});
  ok &= std::abs(single->value(0, 0) - 1.0) < 1e-12;  // T=1 identity

  Var uniform = ConditionalGenerator::context_biased_embedding({e1, e2}, {0.3, 0.3});
  ok &= std::abs(uniform->value(0, 0) - 0.5) < 1e-6;  // uniform-score mean

  Var s = ConditionalGenerator::context_biased_embedding({e1, e2}, {0.0, 1.0});
  ok &= std::abs(s->value(0, 0) - 0.26894) < 1e-5;
  ok &= std::abs(s->value(0, 1) - 0.73106) < 1e-5;

  // Softmax weights sum to one for random score vectors.
  std::mt19937 srng(4);
  std::uniform_real_distribution<double> sc(0.0, 1.0);
  for (int trial = 0; trial < 25; ++trial) {
    std::vector<double> scores(5);
    double mx = -1e30;
    for (auto& v : scores) { v = sc(srng); mx = std::max(mx, v); }
    double total = 0.0;
    for (double v : scores) total += std::exp(v - mx);
    double sum_w = 0.0;
    for (double v : scores) sum_w += std::exp(v - mx) / total;
    ok &= std::abs(sum_w - 1.0) < 1e-6;
  }

  // Gradient of s_u w.r.t. the scores on a dim-4 toy.
  Rng rng = make_rng(5);
  Mat e_vals = randn(4, 4, 1.0, rng);
  Mat proj = randn(4, 1, 1.0, rng);
  Var scores = param(randn(1, 4, 0.5, rng));
  auto build = [&] {
    return sum(mul(matmul(softmax_rows(scores), constant(e_vals)), constant(proj.transpose())));
  };
  backward(build());
  auto f = [&] {
    std::vector<Var> es;
    for (int t = 0; t < 4; ++t) es.push_back(constant(e_vals.row(t)));
    std::vector<double> scv(scores->value.data(), scores->value.data() + 4);
    return (ConditionalGenerator::context_biased_embedding(es, scv)->value * proj)(0, 0);
  };
  Mat ng = testutil::numeric_grad(f, scores->value);
  double rel = testutil::rel_error(scores->grad, ng);
  ok &= rel <= 1e-3;

  std::ostringstream d;
  d << "identity/mean/softmax cases exact; ds_u/da rel. error " << rel;
  detail = d.str();
  return ok;
}

// ---------------------------------------------------------------------------
// 4. Loss sanity suite
// ---------------------------------------------------------------------------

bool criterion_losses(std::string& detail) {
  bool ok = true;

  // Relativistic losses at discriminator indifference.
  auto rel_loss = [](double a, double b) { return -std::log(1.0 / (1.0 + std::exp(-(a - b)))); };
  ok &= std::abs(rel_loss(1.7, 1.7) - std::log(2.0)) < 1e-6;
  ok &= std::abs(rel_loss(-0.3, -0.3) - std::log(2.0)) < 1e-6;

  // Attack loss closed forms.
  ok &= std::abs(attack_loss_value(0.0, 1) - 0.0) < 1e-6;
  ok &= std::abs(attack_loss_value(1.0, 0) - 0.0) < 1e-6;
  ok &= std::abs(attack_loss_value(0.5, 1) - std::log(2.0)) < 1e-9;
  ok &= std::abs(attack_loss_value(0.5, 0) - std::log(2.0)) < 1e-9;
  ok &= std::abs(attack_loss_value(1.0, 1) + std::log(1e-7)) < 1e-9;  // capped divergence
  ok &= std::abs(attack_loss_value(0.0, 0) + std::log(1e-7)) < 1e-9;

  // Whole-post log-prob factorizes into per-step log-probs.
  Corpus corpus = preprocess(synthesize_corpus(16, 4, 100, 7, 11));
  corpus.vocab = build_vocabulary(corpus, 120);
  encode_corpus(corpus, 8, 8);
  VectorizerConfig vcfg;
  vcfg.n_topics = 4;
  vcfg.seed = 2;
  TopicVectorizer vec = fit_topic_model(corpus, vcfg);
  GeneratorConfig gcfg;
  gcfg.base_cell = "relmem";
  gcfg.token_embed = 8;
  gcfg.mem_slots = 1;
  gcfg.heads = 2;
  gcfg.head_dim = 4;
  gcfg.d = 8;
  ConditionalGenerator gen(corpus.vocab.size(), gcfg, 0, 6);
  double worst_gap = 0.0;
  for (int probe = 0; probe < 4; ++probe) {
    const UserRecord& u = corpus.users[static_cast<std::size_t>(probe)];
    GenerationResult r = gen.generate(u, vec, probe % 2 ? GenMode::Sample : GenMode::Greedy,
                                      static_cast<std::uint64_t>(probe));
    std::vector<std::vector<int>> ids;
    std::vector<std::string> ctxs;
    for (const auto& p : u.posts) {
      ids.push_back(p.tokens);
      ctxs.push_back(p.raw_context);
    }
    auto lps = gen.score_teacher_forced(ids, ctxs, u.next_post->raw_context, vec, r.tokens);
    double total = 0.0;
    for (const auto& lp : lps) total += ad::scalar(lp);
    worst_gap = std::max(worst_gap, std::abs(total - r.total_log_prob));
  }
  ok &= worst_gap <= 1e-5;

  std::ostringstream d;
  d << "ln2 at indifference, closed forms at F in {0,0.5,1}, factorization gap " << worst_gap;
  detail = d.str();
  return ok;
}

// ---------------------------------------------------------------------------
// Desk-scale experiment configuration shared by criteria 5-10
// ---------------------------------------------------------------------------

json desk_config_json(std::uint64_t seed) {
  json j = json::parse(R"({
    "dataset": {"synthetic": {"n_users": 200, "n_topics": 5, "vocab_size": 500,
                              "posts_per_user": 8}},
    "corpus": {"d": 16, "d_prime": 12, "vocab_size": 510, "folds": 5, "folds_limit": 1},
    "vectorizer": {"n_topics": 5, "gibbs_sweeps": 60, "infer_iters": 25},
    "classifier": {"kind": "hrnn", "token_embed": 32, "post_hidden": 32, "seq_hidden": 32,
                   "lr": 0.005, "batch_size": 16, "max_epochs": 30, "patience": 5},
    "generator": {"base_cell": "relmem", "token_embed": 32, "mem_slots": 1, "heads": 2,
                  "head_dim": 16, "gumbel_temperature": 0.8,
                  "lr": 0.01, "batch_size": 32, "mle_epochs": 8},
    "finetune": {"k_recent": 3, "steps_per_stage": 1, "lr": 0.01, "max_outer": 20,
                 "tol": 0.001, "batch_size": 32},
    "attacks": ["copycat", "petgen"],
    "box": "white",
    "seed": 0
  })");
  j["seed"] = seed;
  return j;
}

// ---------------------------------------------------------------------------
// 5. Classifier desk-scale training
// ---------------------------------------------------------------------------

bool criterion_classifier_training(std::string& detail) {
  Corpus corpus = preprocess(synthesize_corpus(200, 5, 500, 8, 7));
  corpus.vocab = build_vocabulary(corpus, 510);
  encode_corpus(corpus, 16, 12);
  FoldAssignment folds = make_folds(corpus, 5, 17);
  ClassifierConfig cfg;
  cfg.token_embed = 32;
  cfg.post_hidden = 32;
  cfg.seq_hidden = 32;
  cfg.lr = 0.005;
  cfg.batch_size = 16;
  cfg.max_epochs = 30;
  cfg.patience = 5;

  std::ostringstream d;
  bool ok = true;
  for (ClassifierKind kind : {ClassifierKind::HRNN, ClassifierKind::TIES}) {
    auto fold_models = train_classifier(kind, corpus, folds, cfg, 23);
    double mean_f1 = 0.0;
    for (const auto& fm : fold_models) mean_f1 += fm.heldout_f1;
    mean_f1 /= static_cast<double>(fold_models.size());
    d << to_string(kind) << " 5-fold mean F1 = " << mean_f1 << "  ";
    ok &= mean_f1 >= 0.9;
  }
  detail = d.str();
  return ok;
}

// ---------------------------------------------------------------------------
// 6. End-to-end white-box attack efficacy
// ---------------------------------------------------------------------------

bool criterion_whitebox(std::string& detail) {
  int petgen_wins = 0;
  double sum_drop = 0.0, sum_atk = 0.0;
  std::ostringstream d;
  bool ok = true;
  const std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  for (std::uint64_t seed : seeds) {
    ExperimentConfig cfg = ExperimentConfig::from_json(desk_config_json(seed));
    RunManifest m = run_experiment(cfg);
    json agg = m.aggregate();
    double f1_before = agg["f1_before"].get<double>();
    double f1_after = agg["reports"]["petgen"]["f1_after"].get<double>();
    double atk = agg["reports"]["petgen"]["atk"].is_null()
                     ? 0.0
                     : agg["reports"]["petgen"]["atk"].get<double>();
    double copycat_atk = agg["reports"]["copycat"]["atk"].is_null()
                             ? 0.0
                             : agg["reports"]["copycat"]["atk"].get<double>();
    sum_drop += f1_before - f1_after;
    sum_atk += atk;
    if (atk >= copycat_atk) ++petgen_wins;
    d << "[seed " << seed << ": drop " << (f1_before - f1_after) << ", atk " << atk
      << ", copycat " << copycat_atk << "] ";
  }
  double mean_drop = sum_drop / static_cast<double>(seeds.size());
  double mean_atk = sum_atk / static_cast<double>(seeds.size());
  ok &= mean_drop >= 0.05;
  ok &= mean_atk >= 10.0;
  ok &= petgen_wins >= 3;
  d << "=> mean drop " << mean_drop << ", mean atk " << mean_atk << ", petgen>=copycat in "
    << petgen_wins << "/5 seeds";
  detail = d.str();
  return ok;
}

// ---------------------------------------------------------------------------
// 7. Black-box protocol
// ---------------------------------------------------------------------------

bool criterion_blackbox(std::string& detail) {
  std::ostringstream d;
  bool ok = true;
  int bb_not_worse = 0;
  double agree_sum = 0.0, bb_atk_sum = 0.0;
  const std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  for (std::uint64_t seed : seeds) {
    json base = desk_config_json(seed);
    base["attacks"] = {"petgen"};
    ExperimentConfig white = ExperimentConfig::from_json(base);
    base["box"] = "black";
    ExperimentConfig black = ExperimentConfig::from_json(base);

    RunManifest mw = run_experiment(white);
    RunManifest mb = run_experiment(black);
    json aw = mw.aggregate(), ab = mb.aggregate();
    double drop_w = aw["f1_before"].get<double>() - aw["reports"]["petgen"]["f1_after"].get<double>();
    double drop_b = ab["f1_before"].get<double>() - ab["reports"]["petgen"]["f1_after"].get<double>();
    double atk_b = ab["reports"]["petgen"]["atk"].is_null()
                       ? 0.0
                       : ab["reports"]["petgen"]["atk"].get<double>();
    double agree = ab["surrogate_agreement"].get<double>();
    agree_sum += agree;
    bb_atk_sum += atk_b;
    if (drop_b <= drop_w) ++bb_not_worse;
    d << "[seed " << seed << ": agree " << agree << ", wb drop " << drop_w << ", bb drop "
      << drop_b << ", bb atk " << atk_b << "] ";
  }
  double mean_agree = agree_sum / static_cast<double>(seeds.size());
  double mean_bb_atk = bb_atk_sum / static_cast<double>(seeds.size());
  ok &= mean_agree >= 0.8;
  ok &= mean_bb_atk > 0.0;
  ok &= bb_not_worse >= 3;
  d << "=> mean agreement " << mean_agree << ", mean bb atk " << mean_bb_atk
    << ", bb drop <= wb drop in " << bb_not_worse << "/5 seeds";
  detail = d.str();
  return ok;
}

// ---------------------------------------------------------------------------
// 8. Ablation structure
// ---------------------------------------------------------------------------

bool criterion_ablation(std::string& detail) {
  std::ostringstream d;
  bool ok = true;
  double base_atk = 0.0, attack_only_atk = 0.0, base_rs = 0.0, recency_rs = 0.0;
  const std::vector<std::uint64_t> seeds = {11, 12, 13};
  std::size_t rows_seen = 0;
  for (std::uint64_t seed : seeds) {
    json j = desk_config_json(seed);
    j["finetune"]["max_outer"] = 15;
    ExperimentConfig cfg = ExperimentConfig::from_json(j);
    auto rows = run_ablation(cfg);
    rows_seen = rows.size();
    if (rows.size() != 9) { ok = false; break; }
    auto find = [&](const std::string& name) -> const AblationRow& {
      for (const auto& r : rows)
        if (r.variant == name) return r;
      throw ContractError("missing ablation row " + name);
    };
    base_atk += find("base").report.atk.value_or(0.0);
    attack_only_atk += find("attack_hrnn").report.atk.value_or(0.0);
    base_rs += find("base").report.rs;
    recency_rs += find("recency").report.rs;
  }
  base_atk /= 3.0;
  attack_only_atk /= 3.0;
  base_rs /= 3.0;
  recency_rs /= 3.0;
  ok &= rows_seen == 9;
  ok &= attack_only_atk > base_atk;
  ok &= recency_rs > base_rs;
  d << rows_seen << " rows; attack-only atk " << attack_only_atk << " vs base " << base_atk
    << "; recency rs " << recency_rs << " vs base " << base_rs << " (means over 3 seeds)";
  detail = d.str();
  return ok;
}

// ---------------------------------------------------------------------------
// 9. k-sweep structure
// ---------------------------------------------------------------------------

bool criterion_ksweep(std::string& detail) {
  json j = desk_config_json(21);
  j["attacks"] = {"petgen"};
  j["finetune"]["max_outer"] = 12;
  ExperimentConfig cfg = ExperimentConfig::from_json(j);
  auto rows = run_ksweep(cfg, {1, 2, 3, 4, 5});
  bool ok = rows.size() == 5;
  std::ostringstream d;
  d << "rows:";
  double min_rs = 1e30, max_rs = -1e30;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    ok &= rows[i].k == static_cast<int>(i) + 1;
    min_rs = std::min(min_rs, rows[i].rs);
    max_rs = std::max(max_rs, rows[i].rs);
    d << " k=" << rows[i].k << " rs=" << rows[i].rs;
  }
  ok &= max_rs - min_rs > 1e-9;  // non-constant RS column
  detail = d.str();
  return ok;
}

// ---------------------------------------------------------------------------
// 10. Determinism
// ---------------------------------------------------------------------------

bool criterion_determinism(std::string& detail) {
  json j = json::parse(R"({
    "dataset": {"synthetic": {"n_users": 30, "n_topics": 4, "vocab_size": 150,
                              "posts_per_user": 7}},
    "corpus": {"d": 10, "d_prime": 10, "vocab_size": 160, "folds": 3, "folds_limit": 1},
    "vectorizer": {"n_topics": 4, "gibbs_sweeps": 40, "infer_iters": 20},
    "classifier": {"kind": "hrnn", "token_embed": 12, "post_hidden": 12, "seq_hidden": 12,
                   "lr": 0.01, "batch_size": 8, "max_epochs": 5},
    "generator": {"base_cell": "relmem", "token_embed": 12, "mem_slots": 1, "heads": 2,
                  "head_dim": 6, "lr": 0.01, "batch_size": 8, "mle_epochs": 2},
    "finetune": {"k_recent": 2, "max_outer": 2, "batch_size": 8},
    "attacks": ["copycat", "hotflip", "unitrigger", "textbugger", "malcom", "petgen"],
    "box": "white",
    "seed": 99
  })");
  ExperimentConfig cfg = ExperimentConfig::from_json(j);
  RunManifest a = run_experiment(cfg);
  RunManifest b = run_experiment(cfg);
  std::string da = a.aggregate().dump(), db = b.aggregate().dump();
  bool ok = da == db && a.config_fingerprint == b.config_fingerprint;
  detail = ok ? "full six-attack pipeline re-run reproduced every number bit-identically"
              : "aggregates differ between identical runs";
  return ok;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<Criterion> criteria = {
      {1, "metric oracle suite", criterion_metrics},
      {2, "mmd property suite", criterion_mmd},
      {3, "attention/embedding suite", criterion_attention},
      {4, "loss sanity suite", criterion_losses},
      {5, "classifier desk-scale training", criterion_classifier_training},
      {6, "end-to-end white-box attack efficacy", criterion_whitebox},
      {7, "black-box protocol", criterion_blackbox},
      {8, "ablation structure", criterion_ablation},
      {9, "k-sweep structure", criterion_ksweep},
      {10, "determinism", criterion_determinism},
  };

  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) selected.push_back(std::atoi(argv[i]));

  int failures = 0;
  for (auto& c : criteria) {
    if (!selected.empty() &&
        std::find(selected.begin(), selected.end(), c.number) == selected.end())
      continue;
    std::string detail;
    bool pass = false;
    try {
      pass = c.run(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    std::printf("[%s] criterion %2d (%s): %s\n", pass ? "PASS" : "FAIL", c.number,
                c.name.c_str(), detail.c_str());
    std::fflush(stdout);
    if (!pass) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
