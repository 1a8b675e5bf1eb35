#include "seqattack/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace seqattack {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Salts for deterministic per-stage seed derivation. run_experiment and
// run_ablation must agree on these so identical configurations reproduce
// identical numbers through either entry point.
enum Salt : std::uint64_t {
  kSaltFold = 1000,
  kSaltClassifier = 10,  // + kind
  kSaltSurrogate = 20,
  kSaltVectorizer = 30,
  kSaltPetgen = 40,
  kSaltMalcom = 41,
  kSaltBasePretrain = 45,
  kSaltCopycat = 50,
};

std::uint64_t fold_seed(std::uint64_t seed, int fold) {
  return derive_seed(seed, kSaltFold + static_cast<std::uint64_t>(fold));
}

const std::vector<std::string> kKnownAttacks = {"copycat", "hotflip", "unitrigger",
                                                "textbugger", "malcom", "petgen"};

}  // namespace

std::string cache_root() {
  const char* env = std::getenv("SEQATTACK_CACHE");
  return env ? std::string(env) : std::string();
}

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config parse error in " + path + ": " + e.what());
  }
  return from_json(j);
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  ExperimentConfig c;
  if (j.contains("dataset")) {
    const auto& d = j["dataset"];
    if (d.contains("path")) c.dataset.path = d["path"].get<std::string>();
    if (d.contains("synthetic")) {
      const auto& s = d["synthetic"];
      SynthesisConfig sc;
      sc.n_users = s.value("n_users", sc.n_users);
      sc.n_topics = s.value("n_topics", sc.n_topics);
      sc.vocab_size = s.value("vocab_size", sc.vocab_size);
      sc.posts_per_user = s.value("posts_per_user", sc.posts_per_user);
      sc.min_post_len = s.value("min_post_len", sc.min_post_len);
      sc.max_post_len = s.value("max_post_len", sc.max_post_len);
      sc.context_len = s.value("context_len", sc.context_len);
      sc.malicious_topic_weight = s.value("malicious_topic_weight", sc.malicious_topic_weight);
      c.dataset.synthetic = sc;
    }
  }
  if (j.contains("corpus")) {
    const auto& cj = j["corpus"];
    c.corpus.min_posts = cj.value("min_posts", c.corpus.min_posts);
    c.corpus.min_tokens = cj.value("min_tokens", c.corpus.min_tokens);
    c.corpus.max_posts = cj.value("max_posts", c.corpus.max_posts);
    c.d = cj.value("d", c.d);
    c.d_prime = cj.value("d_prime", c.d_prime);
    c.vocab_size = cj.value("vocab_size", c.vocab_size);
    c.folds = cj.value("folds", c.folds);
    if (cj.contains("folds_limit") && !cj["folds_limit"].is_null())
      c.folds_limit = cj["folds_limit"].get<int>();
  }
  if (j.contains("vectorizer")) {
    const auto& v = j["vectorizer"];
    c.vectorizer.n_topics = v.value("n_topics", c.vectorizer.n_topics);
    c.vectorizer.fit_scope = v.value("fit_scope", c.vectorizer.fit_scope);
    c.vectorizer.alpha = v.value("alpha", c.vectorizer.alpha);
    c.vectorizer.beta = v.value("beta", c.vectorizer.beta);
    c.vectorizer.gibbs_sweeps = v.value("gibbs_sweeps", c.vectorizer.gibbs_sweeps);
    c.vectorizer.infer_iters = v.value("infer_iters", c.vectorizer.infer_iters);
  }
  if (j.contains("classifier")) {
    const auto& cl = j["classifier"];
    c.classifier_kind = classifier_kind_from_string(cl.value("kind", std::string("hrnn")));
    c.classifier.token_embed = cl.value("token_embed", c.classifier.token_embed);
    c.classifier.post_hidden = cl.value("post_hidden", c.classifier.post_hidden);
    c.classifier.seq_hidden = cl.value("seq_hidden", c.classifier.seq_hidden);
    c.classifier.lr = cl.value("lr", c.classifier.lr);
    c.classifier.batch_size = cl.value("batch_size", c.classifier.batch_size);
    c.classifier.max_epochs = cl.value("max_epochs", c.classifier.max_epochs);
    c.classifier.patience = cl.value("patience", c.classifier.patience);
    c.classifier.val_fraction = cl.value("val_fraction", c.classifier.val_fraction);
  }
  if (j.contains("generator")) {
    const auto& g = j["generator"];
    c.generator.base_cell = g.value("base_cell", c.generator.base_cell);
    c.generator.token_embed = g.value("token_embed", c.generator.token_embed);
    c.generator.mem_slots = g.value("mem_slots", c.generator.mem_slots);
    c.generator.heads = g.value("heads", c.generator.heads);
    c.generator.head_dim = g.value("head_dim", c.generator.head_dim);
    c.generator.gru_hidden = g.value("gru_hidden", c.generator.gru_hidden);
    c.generator.first_token = g.value("first_token", c.generator.first_token);
    c.generator.gumbel_temperature = g.value("gumbel_temperature", c.generator.gumbel_temperature);
    c.generator.lr = g.value("lr", c.generator.lr);
    c.generator.batch_size = g.value("batch_size", c.generator.batch_size);
    c.generator.mle_epochs = g.value("mle_epochs", c.generator.mle_epochs);
  }
  if (j.contains("finetune")) {
    const auto& f = j["finetune"];
    c.finetune.k_recent = f.value("k_recent", c.finetune.k_recent);
    c.finetune.steps_per_stage = f.value("steps_per_stage", c.finetune.steps_per_stage);
    c.finetune.lr = f.value("lr", c.finetune.lr);
    c.finetune.max_outer = f.value("max_outer", c.finetune.max_outer);
    c.finetune.tol = f.value("tol", c.finetune.tol);
    c.finetune.batch_size = f.value("batch_size", c.finetune.batch_size);
    if (f.contains("mmd_bandwidths"))
      c.finetune.kernel.bandwidth_factors = f["mmd_bandwidths"].get<std::vector<double>>();
    if (f.contains("loss_weights")) {
      const auto& w = f["loss_weights"];
      c.finetune.w_style = w.value("style", 1.0);
      c.finetune.w_attack = w.value("attack", 1.0);
      c.finetune.w_context = w.value("context", 1.0);
      c.finetune.w_recency = w.value("recency", 1.0);
    }
  }
  if (j.contains("attacks")) c.attacks = j["attacks"].get<std::vector<std::string>>();
  if (j.contains("attack_params")) {
    const auto& a = j["attack_params"];
    c.attack_params.n_flips = a.value("n_flips", c.attack_params.n_flips);
    c.attack_params.n_bugs = a.value("n_bugs", c.attack_params.n_bugs);
    c.attack_params.trigger_len = a.value("trigger_len", c.attack_params.trigger_len);
    c.attack_params.copycat_greedy = a.value("copycat_greedy", c.attack_params.copycat_greedy);
  }
  c.box = j.value("box", c.box);
  c.sentiment_lexicon = j.value("sentiment_lexicon", c.sentiment_lexicon);
  c.seed = j.value("seed", static_cast<std::uint64_t>(0));
  c.out_dir = j.value("out", std::string());
  c.finetune.mle_epochs = c.generator.mle_epochs;
  c.validate();
  return c;
}

json ExperimentConfig::to_json() const {
  json j;
  if (!dataset.path.empty()) j["dataset"]["path"] = dataset.path;
  if (dataset.synthetic) {
    const auto& s = *dataset.synthetic;
    j["dataset"]["synthetic"] = {{"n_users", s.n_users},
                                 {"n_topics", s.n_topics},
                                 {"vocab_size", s.vocab_size},
                                 {"posts_per_user", s.posts_per_user},
                                 {"min_post_len", s.min_post_len},
                                 {"max_post_len", s.max_post_len},
                                 {"context_len", s.context_len},
                                 {"malicious_topic_weight", s.malicious_topic_weight}};
  }
  j["corpus"] = {{"min_posts", corpus.min_posts}, {"min_tokens", corpus.min_tokens},
                 {"max_posts", corpus.max_posts}, {"d", d},
                 {"d_prime", d_prime},           {"vocab_size", vocab_size},
                 {"folds", folds}};
  if (folds_limit) j["corpus"]["folds_limit"] = *folds_limit;
  j["vectorizer"] = {{"n_topics", vectorizer.n_topics}, {"fit_scope", vectorizer.fit_scope},
                     {"alpha", vectorizer.alpha},       {"beta", vectorizer.beta},
                     {"gibbs_sweeps", vectorizer.gibbs_sweeps},
                     {"infer_iters", vectorizer.infer_iters}};
  j["classifier"] = {{"kind", to_string(classifier_kind)},
                     {"token_embed", classifier.token_embed},
                     {"post_hidden", classifier.post_hidden},
                     {"seq_hidden", classifier.seq_hidden},
                     {"lr", classifier.lr},
                     {"batch_size", classifier.batch_size},
                     {"max_epochs", classifier.max_epochs},
                     {"patience", classifier.patience},
                     {"val_fraction", classifier.val_fraction}};
  j["generator"] = {{"base_cell", generator.base_cell},
                    {"token_embed", generator.token_embed},
                    {"mem_slots", generator.mem_slots},
                    {"heads", generator.heads},
                    {"head_dim", generator.head_dim},
                    {"gru_hidden", generator.gru_hidden},
                    {"first_token", generator.first_token},
                    {"gumbel_temperature", generator.gumbel_temperature},
                    {"lr", generator.lr},
                    {"batch_size", generator.batch_size},
                    {"mle_epochs", generator.mle_epochs}};
  j["finetune"] = {{"k_recent", finetune.k_recent},
                   {"steps_per_stage", finetune.steps_per_stage},
                   {"lr", finetune.lr},
                   {"max_outer", finetune.max_outer},
                   {"tol", finetune.tol},
                   {"batch_size", finetune.batch_size},
                   {"mmd_bandwidths", finetune.kernel.bandwidth_factors},
                   {"loss_weights", {{"style", finetune.w_style},
                                     {"attack", finetune.w_attack},
                                     {"context", finetune.w_context},
                                     {"recency", finetune.w_recency}}}};
  j["attacks"] = attacks;
  j["attack_params"] = {{"n_flips", attack_params.n_flips},
                        {"n_bugs", attack_params.n_bugs},
                        {"trigger_len", attack_params.trigger_len},
                        {"copycat_greedy", attack_params.copycat_greedy}};
  j["box"] = box;
  j["sentiment_lexicon"] = sentiment_lexicon;
  j["seed"] = seed;
  return j;
}

std::string ExperimentConfig::fingerprint() const {
  return hex64(fnv1a(to_json().dump()));
}

void ExperimentConfig::validate() const {
  if (dataset.path.empty() && !dataset.synthetic)
    throw ConfigError("config: dataset needs a path or a synthetic spec");
  if (box != "white" && box != "black") throw ConfigError("config: box must be white or black");
  if (folds < 2) throw ConfigError("config: need at least 2 folds");
  if (d < 1 || d_prime < 1) throw ConfigError("config: d and d_prime must be positive");
  if (finetune.k_recent < 1) throw ConfigError("config: k_recent must be >= 1");
  for (const auto& a : attacks)
    if (std::find(kKnownAttacks.begin(), kKnownAttacks.end(), a) == kKnownAttacks.end())
      throw ConfigError("config: unknown attack \"" + a + "\"");
}

// ---------------------------------------------------------------------------
// Reports <-> JSON
// ---------------------------------------------------------------------------

namespace {
json opt_to_json(const std::optional<double>& v) {
  return v ? json(*v) : json(nullptr);
}
std::optional<double> opt_from_json(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}
}  // namespace

json attack_report_to_json(const AttackReport& r) {
  json j;
  j["attack"] = r.attack;
  j["f1_before"] = r.f1_before;
  j["f1_after"] = r.f1_after;
  j["atk"] = opt_to_json(r.atk);
  j["bleu"] = r.bleu;
  j["tcs"] = r.tcs;
  j["rs"] = r.rs;
  j["cps"] = r.cps;
  j["sentiment_consistency"] = opt_to_json(r.sentiment_consistency);
  json impr = json::object();
  for (const auto& [name, pair] : r.improvements)
    impr[name] = {{"f1_impr_pct", opt_to_json(pair.first)}, {"atk_impr_pct", opt_to_json(pair.second)}};
  j["improvements"] = impr;
  j["config_fingerprint"] = r.config_fingerprint;
  return j;
}

AttackReport attack_report_from_json(const json& j) {
  AttackReport r;
  r.attack = j.value("attack", "");
  r.f1_before = j.value("f1_before", 0.0);
  r.f1_after = j.value("f1_after", 0.0);
  r.atk = opt_from_json(j.at("atk"));
  r.bleu = j.value("bleu", 0.0);
  r.tcs = j.value("tcs", 0.0);
  r.rs = j.value("rs", 0.0);
  r.cps = j.value("cps", 0.0);
  r.sentiment_consistency = opt_from_json(j.at("sentiment_consistency"));
  if (j.contains("improvements"))
    for (const auto& [name, v] : j["improvements"].items())
      r.improvements[name] = {opt_from_json(v.at("f1_impr_pct")), opt_from_json(v.at("atk_impr_pct"))};
  r.config_fingerprint = j.value("config_fingerprint", "");
  return r;
}

// ---------------------------------------------------------------------------
// Pipeline pieces
// ---------------------------------------------------------------------------

namespace {

Corpus prepare_corpus(const ExperimentConfig& cfg, Corpus* raw_out = nullptr) {
  Corpus raw;
  if (!cfg.dataset.path.empty()) {
    raw = load_dataset(cfg.dataset.path);
  } else {
    SynthesisConfig sc = *cfg.dataset.synthetic;
    sc.seed = derive_seed(cfg.seed, 0x5eed);
    raw = synthesize_corpus(sc);
  }
  Corpus prepared = preprocess(raw, cfg.corpus);
  if (prepared.users.empty()) throw ContractError("corpus is empty after preprocessing");
  prepared.vocab = build_vocabulary(prepared, cfg.vocab_size);
  encode_corpus(prepared, cfg.d, cfg.d_prime);
  if (raw_out) *raw_out = std::move(raw);
  return prepared;
}

struct FoldArtifacts {
  int fold = 0;
  std::vector<std::string> train_ids, test_ids;
  TopicVectorizer vectorizer;
  std::shared_ptr<SequenceClassifier> target;        // evaluated classifier, frozen
  std::shared_ptr<SequenceClassifier> attack_model;  // target (white) or surrogate (black)
  std::optional<double> surrogate_agreement;
  std::map<std::string, std::string> checkpoints;
};

const UserRecord& find_user(const Corpus& corpus, const std::string& id) {
  for (const auto& u : corpus.users)
    if (u.user_id == id) return u;
  throw ContractError("unknown user id: " + id);
}

std::string classifier_cache_key(const ExperimentConfig& cfg, ClassifierKind kind, int fold,
                                 bool surrogate) {
  std::uint64_t h = fnv1a(cfg.fingerprint());
  h = fnv1a(to_string(kind), h);
  h = fnv1a(surrogate ? "surrogate" : "target", h);
  h = fnv1a(std::to_string(fold), h);
  h = fnv1a(std::to_string(cfg.seed), h);
  return std::string(surrogate ? "surrogate_" : "classifier_") + hex64(h) + ".json";
}

std::shared_ptr<SequenceClassifier> cached_train(
    const ExperimentConfig& cfg, ClassifierKind kind, const Corpus& corpus,
    const std::vector<std::string>& train_ids, std::uint64_t seed, int fold,
    const SequenceClassifier* teacher, std::map<std::string, std::string>& checkpoints) {
  std::string root = cache_root();
  std::string key = classifier_cache_key(cfg, kind, fold, teacher != nullptr);
  fs::path path;
  if (!root.empty()) {
    fs::create_directories(root);
    path = fs::path(root) / key;
    if (fs::exists(path)) {
      auto m = SequenceClassifier::load(path.string());
      m->freeze();
      checkpoints[teacher ? "surrogate" : "classifier"] = path.string();
      return m;
    }
  }
  std::shared_ptr<SequenceClassifier> m;
  if (teacher) {
    m = train_surrogate(*teacher, corpus, train_ids, cfg.classifier, seed);
  } else {
    m = train_classifier_on_users(kind, corpus, train_ids, cfg.classifier, seed);
  }
  if (!root.empty()) {
    m->save(path.string());
    checkpoints[teacher ? "surrogate" : "classifier"] = path.string();
  }
  return m;
}

FoldArtifacts build_fold(const ExperimentConfig& cfg, const Corpus& corpus,
                         const FoldAssignment& folds, int fold, ClassifierKind kind) {
  FoldArtifacts art;
  art.fold = fold;
  art.train_ids = folds.users_not_in_fold(fold);
  art.test_ids = folds.users_in_fold(fold);
  std::uint64_t fs_ = fold_seed(cfg.seed, fold);

  VectorizerConfig vcfg = cfg.vectorizer;
  vcfg.seed = derive_seed(fs_, kSaltVectorizer);
  art.vectorizer = cfg.vectorizer.fit_scope == "all"
                       ? fit_topic_model(corpus, vcfg)
                       : fit_topic_model(corpus, vcfg, art.train_ids);

  // Models also land in the run's output directory so the manifest always
  // carries checkpoint paths, with or without the environment cache.
  auto persist = [&](const SequenceClassifier& m, const std::string& name) {
    if (cfg.out_dir.empty()) return;
    fs::path dir = fs::path(cfg.out_dir) / ("fold_" + std::to_string(fold));
    fs::create_directories(dir);
    std::string path = (dir / (name + ".json")).string();
    m.save(path);
    art.checkpoints[name] = path;
  };

  std::uint64_t cls_seed = derive_seed(fs_, kSaltClassifier + static_cast<std::uint64_t>(kind));
  art.target = cached_train(cfg, kind, corpus, art.train_ids, cls_seed, fold, nullptr,
                            art.checkpoints);
  persist(*art.target, "classifier");
  if (cfg.box == "black") {
    std::uint64_t sur_seed = derive_seed(fs_, kSaltSurrogate);
    art.attack_model = cached_train(cfg, ClassifierKind::HRNN, corpus, art.train_ids, sur_seed,
                                    fold, art.target.get(), art.checkpoints);
    persist(*art.attack_model, "surrogate");
    int agree = 0;
    for (const auto& id : art.test_ids) {
      const UserRecord& u = find_user(corpus, id);
      auto seq = user_post_ids(u);
      if (art.target->predict_label(seq) == art.attack_model->predict_label(seq)) ++agree;
    }
    art.surrogate_agreement =
        art.test_ids.empty() ? 0.0
                             : static_cast<double>(agree) / static_cast<double>(art.test_ids.size());
  } else {
    art.attack_model = art.target;
  }
  return art;
}

struct GeneratedAttack {
  std::string name;
  std::vector<std::vector<int>> tokens;  // one attack post per test user
  std::vector<std::string> texts;
};

struct PetgenVariantSpec {
  bool use_attention = true;
  bool style = true, attack = true, context = true, recency = true;
  std::uint64_t salt = kSaltPetgen;
};

struct PetgenOutcome {
  std::shared_ptr<ConditionalGenerator> gen;
  FinetuneResult fin;
};

// Builds + trains a generator variant. When `pretrained` is non-null the MLE
// stage is skipped and the snapshot is loaded instead (the snapshot must come
// from the same salt so the downstream sampling streams line up).
PetgenOutcome train_generator_variant(const ExperimentConfig& cfg, const Corpus& corpus,
                                      const FoldArtifacts& art, const PetgenVariantSpec& spec,
                                      const std::vector<double>* pretrained) {
  std::uint64_t S = derive_seed(fold_seed(cfg.seed, art.fold), spec.salt);
  GeneratorConfig gcfg = cfg.generator;
  gcfg.d = cfg.d;
  gcfg.use_attention = spec.use_attention;
  auto gen = std::make_shared<ConditionalGenerator>(corpus.vocab.size(), gcfg,
                                                    corpus.vocab.fingerprint(), derive_seed(S, 2));
  Discriminator disc(corpus.vocab.size(), cfg.finetune.discriminator, derive_seed(S, 3));

  FinetuneConfig fcfg = cfg.finetune;
  fcfg.enable_style = spec.style;
  fcfg.enable_attack = spec.attack;
  fcfg.enable_context = spec.context;
  fcfg.enable_recency = spec.recency;

  PetgenOutcome out;
  out.gen = gen;
  if (pretrained) {
    gen->params().unflatten(*pretrained);
    out.fin = petgen_train(*gen, disc, *art.attack_model, corpus, art.train_ids, art.vectorizer,
                           fcfg, S, /*skip_mle=*/true);
  } else {
    out.fin = petgen_train(*gen, disc, *art.attack_model, corpus, art.train_ids, art.vectorizer,
                           fcfg, S, /*skip_mle=*/false);
  }
  return out;
}

GeneratedAttack generate_with(const ConditionalGenerator& gen, const std::string& name,
                              const Corpus& corpus, const FoldArtifacts& art) {
  GeneratedAttack ga;
  ga.name = name;
  for (const auto& id : art.test_ids) {
    const UserRecord& u = find_user(corpus, id);
    GenerationResult r = gen.generate(u, art.vectorizer, GenMode::Greedy, 0);
    ga.tokens.push_back(r.tokens);
    ga.texts.push_back(r.text(corpus.vocab));
  }
  return ga;
}

GeneratedAttack run_baseline_attack(const ExperimentConfig& cfg, const std::string& name,
                                    const Corpus& corpus, const FoldArtifacts& art,
                                    const TokenNeighbors& neighbors) {
  GeneratedAttack ga;
  ga.name = name;
  std::uint64_t fs_ = fold_seed(cfg.seed, art.fold);
  for (const auto& id : art.test_ids) {
    const UserRecord& u = find_user(corpus, id);
    std::uint64_t user_seed = derive_seed(fs_, kSaltCopycat + fnv1a(id));
    AttackPost base = copycat(u, art.vectorizer, user_seed, cfg.attack_params.copycat_greedy);
    AttackPost post;
    if (name == "copycat") {
      post = base;
    } else if (name == "hotflip") {
      post = hotflip(base, *art.attack_model, u, corpus.vocab, cfg.attack_params.n_flips);
    } else if (name == "unitrigger") {
      post = unitrigger(base, art.vectorizer, u.next_post->raw_context, corpus.vocab,
                        cfg.attack_params.trigger_len);
    } else if (name == "textbugger") {
      post = textbugger(base, *art.attack_model, u, corpus.vocab, neighbors,
                        cfg.attack_params.n_bugs);
    } else {
      throw ConfigError("unknown baseline attack: " + name);
    }
    ga.tokens.push_back(post.tokens);
    ga.texts.push_back(post.raw_text);
  }
  return ga;
}

AttackReport score_attack(const ExperimentConfig& cfg, const GeneratedAttack& ga,
                          const Corpus& corpus, const FoldArtifacts& art, double f1_before,
                          const SentimentScorer& scorer) {
  AttackReport r;
  r.attack = ga.name;
  r.f1_before = f1_before;
  r.config_fingerprint = cfg.fingerprint();

  std::vector<int> pre_preds, post_preds, truth;
  std::vector<std::string> gen_texts = ga.texts, target_contexts, originals;
  std::vector<std::vector<std::string>> histories;
  std::vector<std::vector<double>> attn;
  std::vector<std::string> references;
  for (std::size_t i = 0; i < art.test_ids.size(); ++i) {
    const UserRecord& u = find_user(corpus, art.test_ids[i]);
    auto seq = user_post_ids(u);
    pre_preds.push_back(art.target->predict_label(seq));
    seq.push_back(ga.tokens[i]);
    post_preds.push_back(art.target->predict_label(seq));
    truth.push_back(u.label);
    target_contexts.push_back(u.next_post->raw_context);
    originals.push_back(u.next_post->raw_text);
    references.push_back(u.next_post->raw_text);
    std::vector<std::string> hist, contexts;
    for (const auto& p : u.posts) {
      hist.push_back(p.raw_text);
      contexts.push_back(p.raw_context);
    }
    histories.push_back(hist);
    attn.push_back(attention_scores(art.vectorizer, u.next_post->raw_context, contexts));
  }
  r.f1_after = f1_score(post_preds, truth);
  r.atk = attack_rate(pre_preds, post_preds, truth);
  r.bleu = bleu(gen_texts, references);
  r.tcs = target_context_similarity(gen_texts, target_contexts, art.vectorizer);
  r.rs = recent_post_similarity(gen_texts, histories, cfg.finetune.k_recent, art.vectorizer);
  r.cps = context_post_similarity(gen_texts, histories, attn, art.vectorizer);
  r.sentiment_consistency = sentiment_consistency(gen_texts, originals, scorer);
  return r;
}

SentimentScorer make_scorer(const ExperimentConfig& cfg) {
  if (cfg.sentiment_lexicon == "builtin") return SentimentScorer::builtin();
  return SentimentScorer::load(cfg.sentiment_lexicon);
}

std::string timestamp_now() {
  auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

int folds_to_run(const ExperimentConfig& cfg) {
  int n = cfg.folds;
  if (cfg.folds_limit) n = std::min(n, *cfg.folds_limit);
  return n;
}

double fold_f1_before(const Corpus& corpus, const FoldArtifacts& art) {
  std::vector<int> preds, truth;
  for (const auto& id : art.test_ids) {
    const UserRecord& u = find_user(corpus, id);
    preds.push_back(art.target->predict_label(user_post_ids(u)));
    truth.push_back(u.label);
  }
  return f1_score(preds, truth);
}

void persist_fold_outputs(const ExperimentConfig& cfg, int fold,
                          const std::vector<GeneratedAttack>& attacks,
                          const std::vector<StageLossEntry>* stage_log,
                          const std::vector<std::string>& test_ids) {
  if (cfg.out_dir.empty()) return;
  fs::path dir = fs::path(cfg.out_dir) / ("fold_" + std::to_string(fold));
  fs::create_directories(dir);
  for (const auto& ga : attacks) {
    std::ofstream out(dir / (ga.name + "_posts.jsonl"));
    for (std::size_t i = 0; i < ga.texts.size(); ++i) {
      json line = {{"user_id", test_ids[i]}, {"generated_text", ga.texts[i]}, {"mode", ga.name}};
      out << line.dump() << "\n";
    }
  }
  if (stage_log) write_stage_log_csv(*stage_log, (dir / "stage_losses.csv").string());
}

}  // namespace

// ---------------------------------------------------------------------------
// run_experiment
// ---------------------------------------------------------------------------

RunManifest run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  RunManifest manifest;
  manifest.config_fingerprint = cfg.fingerprint();
  manifest.config = cfg.to_json();
  manifest.created_at = timestamp_now();
  manifest.box = cfg.box;

  SentimentScorer scorer = make_scorer(cfg);
  Corpus corpus = prepare_corpus(cfg);
  FoldAssignment folds = make_folds(corpus, cfg.folds, derive_seed(cfg.seed, 0xf01d));

  bool wants_baseline = false, wants_petgen = false;
  for (const auto& a : cfg.attacks) {
    if (a == "petgen") wants_petgen = true;
    else if (a != "malcom") wants_baseline = true;
  }

  try {
    for (int fold = 0; fold < folds_to_run(cfg); ++fold) {
      FoldArtifacts art = build_fold(cfg, corpus, folds, fold, cfg.classifier_kind);
      std::uint64_t target_fp = art.target->fingerprint();

      FoldOutcome outcome;
      outcome.fold = fold;
      outcome.train_ids = art.train_ids;
      outcome.test_ids = art.test_ids;
      outcome.surrogate_agreement = art.surrogate_agreement;
      outcome.checkpoints = art.checkpoints;
      {
        std::unordered_set<std::string> train_set(art.train_ids.begin(), art.train_ids.end());
        outcome.id_audit_ok = std::none_of(art.test_ids.begin(), art.test_ids.end(),
                                           [&](const std::string& id) { return train_set.count(id); });
      }
      outcome.f1_before = fold_f1_before(corpus, art);

      // Token neighborhoods for textbugger come from a config-seeded generator
      // embedding so baseline runs do not depend on whether petgen also runs.
      TokenNeighbors neighbors;
      if (wants_baseline) {
        GeneratorConfig gcfg = cfg.generator;
        gcfg.d = cfg.d;
        ConditionalGenerator nb_gen(corpus.vocab.size(), gcfg, corpus.vocab.fingerprint(),
                                    derive_seed(fold_seed(cfg.seed, fold), 2));
        neighbors = TokenNeighbors::build(nb_gen.token_embedding()->value);
      }

      std::vector<GeneratedAttack> generated;
      std::vector<StageLossEntry> stage_log;
      for (const auto& name : cfg.attacks) {
        if (name == "petgen") {
          PetgenVariantSpec spec;  // attention + all four tasks
          auto out = train_generator_variant(cfg, corpus, art, spec, nullptr);
          stage_log = out.fin.stage_log;
          generated.push_back(generate_with(*out.gen, "petgen", corpus, art));
        } else if (name == "malcom") {
          PetgenVariantSpec spec;
          spec.use_attention = false;
          spec.style = false;
          spec.recency = false;
          spec.salt = kSaltMalcom;
          auto out = train_generator_variant(cfg, corpus, art, spec, nullptr);
          generated.push_back(generate_with(*out.gen, "malcom", corpus, art));
        } else {
          generated.push_back(run_baseline_attack(cfg, name, corpus, art, neighbors));
        }
      }

      for (const auto& ga : generated)
        outcome.reports[ga.name] = score_attack(cfg, ga, corpus, art, outcome.f1_before, scorer);

      // Improvement columns of the petgen row against every baseline present.
      if (wants_petgen) {
        AttackReport& pg = outcome.reports.at("petgen");
        for (auto& [name, rep] : outcome.reports) {
          if (name == "petgen") continue;
          std::optional<double> f1i = improvement(pg.f1_after, rep.f1_after, Direction::LowerBetter);
          std::optional<double> atki =
              (pg.atk && rep.atk) ? improvement(*pg.atk, *rep.atk, Direction::HigherBetter)
                                  : std::nullopt;
          pg.improvements[name] = {f1i, atki};
        }
      }

      if (art.target->fingerprint() != target_fp)
        throw ContractError("frozen classifier parameters changed during the attack run");
      persist_fold_outputs(cfg, fold, generated, stage_log.empty() ? nullptr : &stage_log,
                           art.test_ids);
      manifest.folds.push_back(std::move(outcome));
    }
  } catch (const std::exception& e) {
    manifest.error = e.what();  // keep partial results
    if (!cfg.out_dir.empty()) {
      fs::create_directories(cfg.out_dir);
      manifest.save((fs::path(cfg.out_dir) / "manifest.json").string());
    }
    throw;
  }

  if (!cfg.out_dir.empty()) {
    fs::create_directories(cfg.out_dir);
    manifest.save((fs::path(cfg.out_dir) / "manifest.json").string());
    write_text_file((fs::path(cfg.out_dir) / "report.txt").string(), render_report_table(manifest));
  }
  return manifest;
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

namespace {

json fold_to_json(const FoldOutcome& f) {
  json j;
  j["fold"] = f.fold;
  j["f1_before"] = f.f1_before;
  j["surrogate_agreement"] = opt_to_json(f.surrogate_agreement);
  j["train_ids"] = f.train_ids;
  j["test_ids"] = f.test_ids;
  j["checkpoints"] = f.checkpoints;
  j["id_audit_ok"] = f.id_audit_ok;
  json reports = json::object();
  for (const auto& [name, r] : f.reports) reports[name] = attack_report_to_json(r);
  j["reports"] = reports;
  return j;
}

std::optional<double> mean_opt(const std::vector<std::optional<double>>& vals) {
  double total = 0.0;
  int n = 0;
  for (const auto& v : vals)
    if (v) { total += *v; ++n; }
  if (n == 0) return std::nullopt;
  return total / n;
}

}  // namespace

json RunManifest::aggregate() const {
  json agg;
  if (folds.empty()) return agg;
  double f1b = 0.0;
  std::vector<std::optional<double>> agrees;
  for (const auto& f : folds) {
    f1b += f.f1_before;
    agrees.push_back(f.surrogate_agreement);
  }
  agg["f1_before"] = f1b / static_cast<double>(folds.size());
  agg["surrogate_agreement"] = opt_to_json(mean_opt(agrees));
  agg["n_folds"] = folds.size();

  json reports = json::object();
  for (const auto& [name, _] : folds.front().reports) {
    AttackReport m;
    m.attack = name;
    std::vector<std::optional<double>> atks, sents;
    for (const auto& f : folds) {
      const AttackReport& r = f.reports.at(name);
      m.f1_before += r.f1_before;
      m.f1_after += r.f1_after;
      m.bleu += r.bleu;
      m.tcs += r.tcs;
      m.rs += r.rs;
      m.cps += r.cps;
      atks.push_back(r.atk);
      sents.push_back(r.sentiment_consistency);
    }
    auto n = static_cast<double>(folds.size());
    m.f1_before /= n; m.f1_after /= n; m.bleu /= n; m.tcs /= n; m.rs /= n; m.cps /= n;
    m.atk = mean_opt(atks);
    m.sentiment_consistency = mean_opt(sents);
    reports[name] = attack_report_to_json(m);
  }
  // Improvements over the fold-averaged numbers, mirroring the table layout.
  if (reports.contains("petgen")) {
    json& pg = reports["petgen"];
    json impr = json::object();
    for (auto& [name, rep] : reports.items()) {
      if (name == "petgen") continue;
      std::optional<double> f1i = improvement(pg["f1_after"].get<double>(),
                                              rep["f1_after"].get<double>(), Direction::LowerBetter);
      std::optional<double> atki;
      if (!pg["atk"].is_null() && !rep["atk"].is_null())
        atki = improvement(pg["atk"].get<double>(), rep["atk"].get<double>(),
                           Direction::HigherBetter);
      impr[name] = {{"f1_impr_pct", opt_to_json(f1i)}, {"atk_impr_pct", opt_to_json(atki)}};
    }
    pg["improvements"] = impr;
  }
  agg["reports"] = reports;
  return agg;
}

json RunManifest::to_json() const {
  json j;
  j["format"] = "seqattack.manifest";
  j["version"] = 1;
  j["config_fingerprint"] = config_fingerprint;
  j["config"] = config;
  j["created_at"] = created_at;
  j["box"] = box;
  if (error) j["error"] = *error;
  json fl = json::array();
  for (const auto& f : folds) fl.push_back(fold_to_json(f));
  j["folds"] = fl;
  j["aggregate"] = aggregate();
  return j;
}

void RunManifest::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write manifest: " + path);
  out << to_json().dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// Ablation grid
// ---------------------------------------------------------------------------

std::vector<AblationRow> run_ablation(const ExperimentConfig& cfg) {
  cfg.validate();
  SentimentScorer scorer = make_scorer(cfg);
  Corpus corpus = prepare_corpus(cfg);
  FoldAssignment folds = make_folds(corpus, cfg.folds, derive_seed(cfg.seed, 0xf01d));

  struct VariantDef {
    std::string name;
    bool attention;
    bool style, attack, context, recency;
    ClassifierKind eval_kind;
    std::uint64_t salt;
  };
  const std::vector<VariantDef> defs = {
      {"base", false, false, false, false, false, ClassifierKind::HRNN, kSaltBasePretrain},
      {"style", false, true, false, false, false, ClassifierKind::HRNN, kSaltBasePretrain},
      {"attack_ties", false, false, true, false, false, ClassifierKind::TIES, kSaltBasePretrain},
      {"attack_hrnn", false, false, true, false, false, ClassifierKind::HRNN, kSaltBasePretrain},
      {"recency", false, false, false, false, true, ClassifierKind::HRNN, kSaltBasePretrain},
      {"target_context", false, false, false, true, false, ClassifierKind::HRNN, kSaltBasePretrain},
      {"contextual_post", true, false, false, false, false, ClassifierKind::HRNN, kSaltPetgen},
      {"petgen_hrnn", true, true, true, true, true, ClassifierKind::HRNN, kSaltPetgen},
      {"petgen_ties", true, true, true, true, true, ClassifierKind::TIES, kSaltPetgen},
  };

  std::vector<AblationRow> rows(defs.size());
  for (std::size_t i = 0; i < defs.size(); ++i) rows[i].variant = defs[i].name;

  int n_folds = folds_to_run(cfg);
  std::vector<int> rows_counted(defs.size(), 0);
  for (int fold = 0; fold < n_folds; ++fold) {
    // One artifact set per classifier kind; vectorizer and splits shared.
    std::map<ClassifierKind, FoldArtifacts> arts;
    for (ClassifierKind kind : {ClassifierKind::HRNN, ClassifierKind::TIES}) {
      ExperimentConfig kc = cfg;
      kc.classifier_kind = kind;
      arts.emplace(kind, build_fold(kc, corpus, folds, fold, kind));
    }

    // MLE snapshots shared across variants with the same attention flag.
    std::map<std::pair<bool, std::uint64_t>, std::vector<double>> snapshots;
    auto snapshot_for = [&](bool attention, std::uint64_t salt,
                            const FoldArtifacts& art) -> const std::vector<double>& {
      auto key = std::make_pair(attention, salt);
      auto it = snapshots.find(key);
      if (it != snapshots.end()) return it->second;
      PetgenVariantSpec spec;
      spec.use_attention = attention;
      spec.style = spec.attack = spec.context = spec.recency = false;
      spec.salt = salt;
      auto out = train_generator_variant(cfg, corpus, art, spec, nullptr);
      return snapshots.emplace(key, out.gen->params().flatten()).first->second;
    };

    for (std::size_t i = 0; i < defs.size(); ++i) {
      const VariantDef& d = defs[i];
      const FoldArtifacts& art = arts.at(d.eval_kind);
      PetgenVariantSpec spec;
      spec.use_attention = d.attention;
      spec.style = d.style;
      spec.attack = d.attack;
      spec.context = d.context;
      spec.recency = d.recency;
      spec.salt = d.salt;
      // Branch every variant off the shared MLE snapshot; the stage sampling
      // stream is derived from the same salt, so the full rows stay
      // bit-identical to a standalone run_experiment.
      const auto& snap = snapshot_for(d.attention, d.salt, art);
      PetgenOutcome out = train_generator_variant(cfg, corpus, art, spec, &snap);
      GeneratedAttack ga = generate_with(*out.gen, d.name, corpus, art);
      double f1b = fold_f1_before(corpus, art);
      AttackReport rep = score_attack(cfg, ga, corpus, art, f1b, scorer);
      AblationRow& row = rows[i];
      if (rows_counted[i] == 0) {
        row.f1_before = f1b;
        row.report = rep;
      } else {
        auto n = static_cast<double>(rows_counted[i]);
        auto blend = [n](double acc, double v) { return (acc * n + v) / (n + 1.0); };
        row.f1_before = blend(row.f1_before, f1b);
        row.report.f1_after = blend(row.report.f1_after, rep.f1_after);
        row.report.bleu = blend(row.report.bleu, rep.bleu);
        row.report.tcs = blend(row.report.tcs, rep.tcs);
        row.report.rs = blend(row.report.rs, rep.rs);
        row.report.cps = blend(row.report.cps, rep.cps);
        if (row.report.atk && rep.atk) row.report.atk = blend(*row.report.atk, *rep.atk);
        else if (rep.atk) row.report.atk = rep.atk;
        if (row.report.sentiment_consistency && rep.sentiment_consistency)
          row.report.sentiment_consistency =
              blend(*row.report.sentiment_consistency, *rep.sentiment_consistency);
      }
      ++rows_counted[i];
    }
  }

  if (!cfg.out_dir.empty()) {
    fs::create_directories(cfg.out_dir);
    write_text_file((fs::path(cfg.out_dir) / "ablation.csv").string(), render_ablation_csv(rows));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// k-sweep
// ---------------------------------------------------------------------------

std::vector<KSweepRow> run_ksweep(const ExperimentConfig& cfg, std::vector<int> k_values) {
  cfg.validate();
  SentimentScorer scorer = make_scorer(cfg);
  Corpus corpus = prepare_corpus(cfg);
  FoldAssignment folds = make_folds(corpus, cfg.folds, derive_seed(cfg.seed, 0xf01d));

  int min_T = std::numeric_limits<int>::max();
  for (const auto& u : corpus.users) min_T = std::min(min_T, static_cast<int>(u.posts.size()));
  for (int k : k_values)
    if (k > min_T)
      throw ConfigError("run_ksweep: k=" + std::to_string(k) + " exceeds the minimum user T=" +
                        std::to_string(min_T));

  std::vector<KSweepRow> rows;
  int n_folds = folds_to_run(cfg);
  std::vector<FoldArtifacts> arts;
  std::vector<std::vector<double>> snapshots;  // MLE state per fold, shared across k
  for (int fold = 0; fold < n_folds; ++fold) {
    arts.push_back(build_fold(cfg, corpus, folds, fold, cfg.classifier_kind));
    PetgenVariantSpec spec;
    spec.style = spec.attack = spec.context = spec.recency = false;
    auto out = train_generator_variant(cfg, corpus, arts.back(), spec, nullptr);
    snapshots.push_back(out.gen->params().flatten());
  }

  for (int k : k_values) {
    KSweepRow row;
    row.k = k;
    double f1 = 0.0, rs = 0.0;
    std::vector<std::optional<double>> atks;
    for (int fold = 0; fold < n_folds; ++fold) {
      const FoldArtifacts& art = arts[static_cast<std::size_t>(fold)];
      ExperimentConfig kc = cfg;
      kc.finetune.k_recent = k;
      PetgenVariantSpec spec;  // full pipeline at this k
      auto out = train_generator_variant(kc, corpus, art, spec,
                                         &snapshots[static_cast<std::size_t>(fold)]);
      GeneratedAttack ga = generate_with(*out.gen, "petgen", corpus, art);
      double f1b = fold_f1_before(corpus, art);
      AttackReport rep = score_attack(kc, ga, corpus, art, f1b, scorer);
      f1 += rep.f1_after;
      rs += rep.rs;
      atks.push_back(rep.atk);
    }
    row.f1 = f1 / n_folds;
    row.rs = rs / n_folds;
    row.atk = mean_opt(atks);
    rows.push_back(row);
  }

  if (!cfg.out_dir.empty()) {
    fs::create_directories(cfg.out_dir);
    write_text_file((fs::path(cfg.out_dir) / "ksweep.csv").string(), render_ksweep_csv(rows));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

namespace {
std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}
std::string fmt_opt(const std::optional<double>& v) { return v ? fmt(*v) : std::string("-"); }
std::string fmt_opt(const json& v) {
  return v.is_null() ? std::string("-") : fmt(v.get<double>());
}
}  // namespace

std::string render_report_table(const RunManifest& manifest) {
  json agg = manifest.aggregate();
  std::ostringstream out;
  out << "box=" << manifest.box << "  folds=" << manifest.folds.size()
      << "  config=" << manifest.config_fingerprint << "\n";
  out << std::left;
  auto line = [&](const std::string& name, const std::string& f1, const std::string& atk,
                  const std::string& bleu_s, const std::string& tcs, const std::string& rs,
                  const std::string& cps, const std::string& sent) {
    out << "  ";
    out.width(16); out << name;
    out.width(10); out << f1;
    out.width(10); out << atk;
    out.width(10); out << bleu_s;
    out.width(10); out << tcs;
    out.width(10); out << rs;
    out.width(10); out << cps;
    out.width(10); out << sent;
    out << "\n";
  };
  line("attack", "F1v", "Atk^", "BLEU^", "TCS^", "RS^", "CPS^", "Sent");
  if (agg.contains("f1_before"))
    line("without-attack", fmt(agg["f1_before"].get<double>()), "-", "-", "-", "-", "-", "-");
  if (agg.contains("reports")) {
    for (const auto& [name, r] : agg["reports"].items()) {
      line(name, fmt(r["f1_after"].get<double>()), fmt_opt(r["atk"]), fmt(r["bleu"].get<double>()),
           fmt(r["tcs"].get<double>()), fmt(r["rs"].get<double>()), fmt(r["cps"].get<double>()),
           fmt_opt(r["sentiment_consistency"]));
    }
    if (agg["reports"].contains("petgen") && agg["reports"]["petgen"].contains("improvements")) {
      out << "  petgen improvement over baselines (f1% / atk%):\n";
      for (const auto& [name, v] : agg["reports"]["petgen"]["improvements"].items())
        out << "    " << name << ": " << fmt_opt(v["f1_impr_pct"]) << "% / "
            << fmt_opt(v["atk_impr_pct"]) << "%\n";
    }
  }
  if (!manifest.folds.empty() && manifest.folds.front().surrogate_agreement)
    out << "  surrogate agreement (mean): " << fmt_opt(agg["surrogate_agreement"]) << "\n";
  return out.str();
}

std::string render_ablation_csv(const std::vector<AblationRow>& rows) {
  std::ostringstream out;
  out << "variant,f1_before,f1_after,atk,bleu,tcs,rs,cps\n";
  for (const auto& r : rows)
    out << r.variant << "," << r.f1_before << "," << r.report.f1_after << ","
        << fmt_opt(r.report.atk) << "," << r.report.bleu << "," << r.report.tcs << ","
        << r.report.rs << "," << r.report.cps << "\n";
  return out.str();
}

std::string render_ksweep_csv(const std::vector<KSweepRow>& rows) {
  std::ostringstream out;
  out << "k,f1,atk,rs\n";
  for (const auto& r : rows)
    out << r.k << "," << r.f1 << "," << fmt_opt(r.atk) << "," << r.rs << "\n";
  return out.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write file: " + path);
  out << content;
}

}  // namespace seqattack
