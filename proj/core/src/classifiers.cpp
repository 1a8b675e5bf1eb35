#include "seqattack/classifiers.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_map>

#include <json.hpp>

#include "seqattack/evalsuite.hpp"

namespace seqattack {

using namespace ad;
using nlohmann::json;

std::string to_string(ClassifierKind k) { return k == ClassifierKind::HRNN ? "hrnn" : "ties"; }

ClassifierKind classifier_kind_from_string(const std::string& s) {
  if (s == "hrnn" || s == "HRNN") return ClassifierKind::HRNN;
  if (s == "ties" || s == "TIES") return ClassifierKind::TIES;
  throw ConfigError("unknown classifier kind: " + s);
}

SequenceClassifier::SequenceClassifier(ClassifierKind kind, int vocab_size,
                                       const ClassifierConfig& cfg,
                                       std::uint64_t vocab_fingerprint, std::uint64_t seed)
    : kind_(kind), vocab_size_(vocab_size), cfg_(cfg), vocab_fingerprint_(vocab_fingerprint) {
  if (vocab_size < Vocabulary::kNumSpecials)
    throw ConfigError("classifier: vocab_size too small");
  Rng rng = make_rng(seed);
  embed_ = params_.add("embed", glorot(vocab_size, cfg.token_embed, rng));
  if (kind_ == ClassifierKind::HRNN) {
    post_gru_ = GruCell::create(params_, "post_gru", cfg.token_embed, cfg.post_hidden, rng);
  } else {
    post_ff_w_ = params_.add("post_ff.w", glorot(cfg.token_embed, cfg.post_hidden, rng));
    post_ff_b_ = params_.add("post_ff.b", Mat::Zero(1, cfg.post_hidden));
  }
  seq_gru_ = GruCell::create(params_, "seq_gru", cfg.post_hidden, cfg.seq_hidden, rng);
  head_w_ = params_.add("head.w", glorot(cfg.seq_hidden, 1, rng));
  head_b_ = params_.add("head.b", Mat::Zero(1, 1));
}

Var SequenceClassifier::encode_post(const PostTokens& post) const {
  Var x;  // [d x token_embed]
  if (std::holds_alternative<std::vector<int>>(post)) {
    const auto& ids = std::get<std::vector<int>>(post);
    if (ids.empty()) throw ContractError("classifier: empty post");
    for (int id : ids)
      if (id < 0 || id >= vocab_size_)
        throw ContractError("classifier: token id " + std::to_string(id) + " out of vocab range");
    x = gather_rows(embed_, ids);
  } else {
    const Var& dist = std::get<Var>(post);
    if (dist->value.cols() != vocab_size_)
      throw ContractError("classifier: relaxed post has wrong vocab dimension");
    x = matmul(dist, embed_);
  }
  if (kind_ == ClassifierKind::HRNN) {
    Var h = post_gru_.initial_state();
    for (int i = 0; i < x->value.rows(); ++i) h = post_gru_.step(row(x, i), h);
    return h;
  }
  // TIES-style: pooled token embedding through a feedforward event encoder.
  return tanh_(add_rowvec(matmul(mean_rows(x), post_ff_w_), post_ff_b_));
}

Var SequenceClassifier::forward_logit(const std::vector<PostTokens>& posts) const {
  if (posts.empty()) throw ContractError("classifier: sequence must contain at least one post");
  Var h = seq_gru_.initial_state();
  for (const auto& p : posts) h = seq_gru_.step(encode_post(p), h);
  return add_rowvec(matmul(h, head_w_), head_b_);
}

Var SequenceClassifier::forward(const std::vector<PostTokens>& posts) const {
  return sigmoid(forward_logit(posts));
}

double SequenceClassifier::predict_prob(const std::vector<std::vector<int>>& posts) const {
  std::vector<PostTokens> in(posts.begin(), posts.end());
  return scalar(forward(in));
}

int SequenceClassifier::predict_label(const std::vector<std::vector<int>>& posts,
                                      double threshold) const {
  return predict_prob(posts) > threshold ? 1 : 0;
}

void SequenceClassifier::freeze() {
  frozen_ = true;
  params_.set_requires_grad(false);
}

void SequenceClassifier::save(const std::string& path) const {
  json j;
  j["format"] = "seqattack.classifier";
  j["version"] = 1;
  j["kind"] = to_string(kind_);
  j["vocab_size"] = vocab_size_;
  j["vocab_fingerprint"] = hex64(vocab_fingerprint_);
  j["config"] = {{"token_embed", cfg_.token_embed}, {"post_hidden", cfg_.post_hidden},
                 {"seq_hidden", cfg_.seq_hidden}};
  j["params"] = params_.flatten();
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write checkpoint: " + path);
  out << j.dump();
}

std::shared_ptr<SequenceClassifier> SequenceClassifier::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open checkpoint: " + path);
  json j = json::parse(in);
  if (j.value("format", "") != "seqattack.classifier")
    throw SchemaError("not a classifier checkpoint: " + path);
  ClassifierConfig cfg;
  cfg.token_embed = j["config"]["token_embed"].get<int>();
  cfg.post_hidden = j["config"]["post_hidden"].get<int>();
  cfg.seq_hidden = j["config"]["seq_hidden"].get<int>();
  auto model = std::make_shared<SequenceClassifier>(
      classifier_kind_from_string(j["kind"].get<std::string>()), j["vocab_size"].get<int>(), cfg,
      std::stoull(j["vocab_fingerprint"].get<std::string>(), nullptr, 16), /*seed=*/0);
  model->params_.unflatten(j["params"].get<std::vector<double>>());
  return model;
}

std::vector<std::vector<int>> user_post_ids(const UserRecord& u) {
  std::vector<std::vector<int>> out;
  out.reserve(u.posts.size());
  for (const auto& p : u.posts) {
    if (p.tokens.empty()) throw ContractError("user " + u.user_id + " has unencoded posts");
    out.push_back(p.tokens);
  }
  return out;
}

namespace {

struct Example {
  const UserRecord* user;
  int label;
};

std::shared_ptr<SequenceClassifier> train_from_examples(
    ClassifierKind kind, const Corpus& corpus, std::vector<Example> examples,
    const ClassifierConfig& cfg, std::uint64_t seed, TrainLog* log) {
  if (examples.empty()) throw ContractError("classifier training: no training users");
  int n_pos = 0;
  for (const auto& e : examples) n_pos += e.label;
  if (n_pos == 0 || n_pos == static_cast<int>(examples.size()))
    throw ContractError("classifier training: single-class training data");

  auto model = std::make_shared<SequenceClassifier>(kind, corpus.vocab.size(), cfg,
                                                    corpus.vocab.fingerprint(),
                                                    derive_seed(seed, 1));
  Rng rng = make_rng(derive_seed(seed, 2));
  std::shuffle(examples.begin(), examples.end(), rng);
  std::size_t n_val = std::min(examples.size() - 1,
      static_cast<std::size_t>(std::ceil(cfg.val_fraction * static_cast<double>(examples.size()))));
  std::vector<Example> val(examples.end() - static_cast<std::ptrdiff_t>(n_val), examples.end());
  examples.resize(examples.size() - n_val);

  auto bce = [&](const Example& e) {
    std::vector<PostTokens> in;
    for (const auto& p : e.user->posts) in.emplace_back(p.tokens);
    Var z = model->forward_logit(in);
    // -log sigma(z) = softplus(-z); -log(1 - sigma(z)) = softplus(z).
    return e.label == 1 ? softplus(neg(z)) : softplus(z);
  };

  Adam opt(cfg.lr);
  auto param_vars = model->params().vars();
  double best_val = std::numeric_limits<double>::infinity();
  std::vector<double> best_params = model->params().flatten();
  int bad_epochs = 0;
  TrainLog local;
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    std::shuffle(examples.begin(), examples.end(), rng);
    double epoch_loss = 0.0;
    std::size_t at = 0;
    while (at < examples.size()) {
      std::size_t hi = std::min(at + static_cast<std::size_t>(cfg.batch_size), examples.size());
      std::vector<Var> losses;
      for (std::size_t i = at; i < hi; ++i) losses.push_back(bce(examples[i]));
      Var batch_loss = mean(concat_rows(losses));
      backward(batch_loss);
      opt.step(param_vars);
      epoch_loss += scalar(batch_loss) * static_cast<double>(hi - at);
      at = hi;
    }
    epoch_loss /= static_cast<double>(examples.size());
    local.epoch_train_loss.push_back(epoch_loss);

    double val_loss = 0.0;
    if (!val.empty()) {
      for (const auto& e : val) val_loss += scalar(bce(e));
      val_loss /= static_cast<double>(val.size());
    } else {
      val_loss = epoch_loss;
    }
    local.epoch_val_loss.push_back(val_loss);
    if (val_loss < best_val - 1e-6) {
      best_val = val_loss;
      best_params = model->params().flatten();
      bad_epochs = 0;
    } else if (++bad_epochs >= cfg.patience) {
      local.stopped_epoch = epoch + 1;
      break;
    }
  }
  if (local.stopped_epoch == 0) local.stopped_epoch = static_cast<int>(local.epoch_train_loss.size());
  model->params().unflatten(best_params);
  model->freeze();
  if (log) *log = local;
  return model;
}

}  // namespace

std::shared_ptr<SequenceClassifier> train_classifier_on_users(
    ClassifierKind kind, const Corpus& corpus, const std::vector<std::string>& train_user_ids,
    const ClassifierConfig& cfg, std::uint64_t seed, TrainLog* log) {
  std::unordered_map<std::string, const UserRecord*> by_id;
  for (const auto& u : corpus.users) by_id[u.user_id] = &u;
  std::vector<Example> examples;
  for (const auto& id : train_user_ids) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw ContractError("unknown train user id: " + id);
    examples.push_back({it->second, it->second->label});
  }
  return train_from_examples(kind, corpus, std::move(examples), cfg, seed, log);
}

std::vector<FoldModel> train_classifier(ClassifierKind kind, const Corpus& corpus,
                                        const FoldAssignment& folds, const ClassifierConfig& cfg,
                                        std::uint64_t seed) {
  std::unordered_map<std::string, const UserRecord*> by_id;
  for (const auto& u : corpus.users) by_id[u.user_id] = &u;
  std::vector<FoldModel> out;
  for (int fold = 0; fold < folds.n_folds; ++fold) {
    FoldModel fm;
    fm.fold = fold;
    fm.model = train_classifier_on_users(kind, corpus, folds.users_not_in_fold(fold), cfg,
                                         derive_seed(seed, static_cast<std::uint64_t>(fold)),
                                         &fm.log);
    std::vector<int> preds, truth;
    for (const auto& id : folds.users_in_fold(fold)) {
      const UserRecord* u = by_id.at(id);
      preds.push_back(fm.model->predict_label(user_post_ids(*u)));
      truth.push_back(u->label);
    }
    fm.heldout_f1 = f1_score(preds, truth);
    out.push_back(std::move(fm));
  }
  return out;
}

std::shared_ptr<SequenceClassifier> train_surrogate(
    const SequenceClassifier& target, const Corpus& corpus,
    const std::vector<std::string>& train_user_ids, const ClassifierConfig& cfg,
    std::uint64_t seed, TrainLog* log) {
  if (!target.frozen()) throw ContractError("train_surrogate: target classifier must be frozen");
  std::unordered_map<std::string, const UserRecord*> by_id;
  for (const auto& u : corpus.users) by_id[u.user_id] = &u;
  std::vector<Example> examples;
  for (const auto& id : train_user_ids) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw ContractError("unknown train user id: " + id);
    // Teacher's hard prediction, never the ground-truth label.
    int pseudo = target.predict_label(user_post_ids(*it->second));
    examples.push_back({it->second, pseudo});
  }
  return train_from_examples(ClassifierKind::HRNN, corpus, std::move(examples), cfg, seed, log);
}

}  // namespace seqattack
