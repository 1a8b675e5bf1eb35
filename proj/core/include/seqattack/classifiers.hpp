#pragma once

#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "seqattack/autodiff.hpp"
#include "seqattack/cells.hpp"
#include "seqattack/corpus.hpp"

namespace seqattack {

enum class ClassifierKind { HRNN, TIES };

std::string to_string(ClassifierKind k);
ClassifierKind classifier_kind_from_string(const std::string& s);

struct ClassifierConfig {
  int token_embed = 64;
  int post_hidden = 64;
  int seq_hidden = 64;
  double lr = 1e-5;
  int batch_size = 64;
  int max_epochs = 60;
  int patience = 5;          // early stop on held-out-loss plateau
  double val_fraction = 0.1;
};

// A post fed to the classifier: hard token ids, or a relaxed [d x V] row-
// stochastic matrix (one distribution per step) for gradient-based attacks.
using PostTokens = std::variant<std::vector<int>, ad::Var>;

class SequenceClassifier {
public:
  SequenceClassifier(ClassifierKind kind, int vocab_size, const ClassifierConfig& cfg,
                     std::uint64_t vocab_fingerprint, std::uint64_t seed);

  // Malicious probability as a graph node, strictly in (0,1). Differentiable
  // w.r.t. any relaxed posts in the sequence.
  ad::Var forward(const std::vector<PostTokens>& posts) const;
  // Pre-sigmoid score; losses built on this stay numerically stable where the
  // probability saturates in double precision.
  ad::Var forward_logit(const std::vector<PostTokens>& posts) const;

  double predict_prob(const std::vector<std::vector<int>>& posts) const;
  int predict_label(const std::vector<std::vector<int>>& posts, double threshold = 0.5) const;

  void freeze();
  bool frozen() const { return frozen_; }
  ClassifierKind kind() const { return kind_; }
  int vocab_size() const { return vocab_size_; }
  std::uint64_t vocab_fingerprint() const { return vocab_fingerprint_; }
  std::uint64_t fingerprint() const { return params_.fingerprint(); }
  const ClassifierConfig& config() const { return cfg_; }

  ad::ParamSet& params() { return params_; }
  const ad::ParamSet& params() const { return params_; }

  void save(const std::string& path) const;
  static std::shared_ptr<SequenceClassifier> load(const std::string& path);

private:
  ad::Var encode_post(const PostTokens& post) const;

  ClassifierKind kind_;
  int vocab_size_;
  ClassifierConfig cfg_;
  std::uint64_t vocab_fingerprint_;
  bool frozen_ = false;

  ad::ParamSet params_;
  ad::Var embed_;            // [V x token_embed]
  GruCell post_gru_;         // HRNN post encoder
  ad::Var post_ff_w_, post_ff_b_;  // TIES post encoder
  GruCell seq_gru_;          // temporal aggregation
  ad::Var head_w_, head_b_;
};

struct TrainLog {
  std::vector<double> epoch_train_loss;
  std::vector<double> epoch_val_loss;
  int stopped_epoch = 0;
};

struct FoldModel {
  int fold = 0;
  std::shared_ptr<SequenceClassifier> model;
  double heldout_f1 = 0.0;
  TrainLog log;
};

// Trains on the given user ids (BCE, Adam, mini-batches); the model comes back
// frozen. Throws ContractError when the training labels are single-class.
std::shared_ptr<SequenceClassifier> train_classifier_on_users(
    ClassifierKind kind, const Corpus& corpus, const std::vector<std::string>& train_user_ids,
    const ClassifierConfig& cfg, std::uint64_t seed, TrainLog* log = nullptr);

// Per-fold training: train on everything outside the fold, report F1 on it.
std::vector<FoldModel> train_classifier(ClassifierKind kind, const Corpus& corpus,
                                        const FoldAssignment& folds, const ClassifierConfig& cfg,
                                        std::uint64_t seed);

// Black-box surrogate: an HRNN trained on the teacher's hard predictions over
// the train users. Ground-truth labels are never read.
std::shared_ptr<SequenceClassifier> train_surrogate(
    const SequenceClassifier& target, const Corpus& corpus,
    const std::vector<std::string>& train_user_ids, const ClassifierConfig& cfg,
    std::uint64_t seed, TrainLog* log = nullptr);

// Token-id sequences of a user's retained posts.
std::vector<std::vector<int>> user_post_ids(const UserRecord& u);

}  // namespace seqattack
