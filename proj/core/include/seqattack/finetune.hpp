#pragma once

#include <memory>
#include <string>
#include <vector>

#include "seqattack/classifiers.hpp"
#include "seqattack/generator.hpp"

namespace seqattack {

// Multi-representation text discriminator: parallel embedding branches, each
// with small convolutional feature extractors, pooled and scored; the branch
// scores are averaged into one pre-sigmoid logit.
class Discriminator {
public:
  struct Config {
    int branches = 2;
    int embed_dim = 32;
    std::vector<int> kernel_sizes = {2, 3};
    int filters = 16;
  };

  Discriminator(int vocab_size, const Config& cfg, std::uint64_t seed);

  ad::Var score(const PostTokens& post) const;  // [1 x 1] logit

  ad::ParamSet& params() { return params_; }
  const ad::ParamSet& params() const { return params_; }
  std::uint64_t fingerprint() const { return params_.fingerprint(); }

private:
  int vocab_size_;
  Config cfg_;
  ad::ParamSet params_;
  struct Branch {
    ad::Var embed;                 // [V x embed_dim]
    std::vector<ad::Var> conv_w;   // per kernel size
    ad::Var head_w, head_b;
  };
  std::vector<Branch> branches_;
};

struct MmdKernel {
  std::string kind = "rbf";
  // Actual bandwidths are factors x the median pairwise distance of the batch.
  std::vector<double> bandwidth_factors = {0.5, 1.0, 2.0};
  bool use_median_heuristic = true;
  std::vector<double> fixed_bandwidths = {1.0};  // used when the heuristic is off

  std::vector<double> bandwidths_for(const std::vector<Eigen::VectorXd>& a,
                                     const std::vector<Eigen::VectorXd>& b) const;
};

// Biased MMD estimate between two vector sets: sqrt(max(0, mean k(a,a') +
// mean k(b,b') - 2 mean k(a,b))). The kernel is the mean of RBF kernels over
// the bandwidth list, so k(x,x) = 1.
double mmd(const std::vector<Eigen::VectorXd>& a, const std::vector<Eigen::VectorXd>& b,
           const MmdKernel& kernel);

// Graph version over stacked row sets ([n x dim], [m x dim]) with fixed
// bandwidths (compute them from values first to keep gradients simple).
ad::Var mmd_loss(const ad::Var& a_rows, const ad::Var& b_rows,
                 const std::vector<double>& bandwidths);

struct FinetuneConfig {
  int k_recent = 3;
  int steps_per_stage = 1;
  double lr = 1e-5;
  int max_outer = 200;
  double tol = 1e-3;            // relative change of summed G losses
  int batch_size = 64;
  MmdKernel kernel;
  // Eq-13-style unweighted sum by default.
  double w_style = 1.0, w_attack = 1.0, w_context = 1.0, w_recency = 1.0;
  bool enable_style = true, enable_attack = true, enable_context = true, enable_recency = true;
  Discriminator::Config discriminator;
  int mle_epochs = 20;
};

struct StageLossEntry {
  int outer_iter;          // -1 for the MLE stage
  std::string stage;       // "mle" | "style" | "attack" | "context" | "recency"
  double loss;
};

struct FinetuneBatch {
  std::vector<const UserRecord*> users;
};

// One alternating relativistic-GAN update; returns {L_G_STY, L_D}.
std::pair<double, double> style_step(ConditionalGenerator& gen, Discriminator& disc,
                                     const FinetuneBatch& batch, const TopicVectorizer& vec,
                                     const FinetuneConfig& cfg, ad::Adam& opt_g, ad::Adam& opt_d,
                                     Rng& rng);

// Evasion loss against the frozen classifier; one step on the generator.
double attack_step(ConditionalGenerator& gen, const SequenceClassifier& classifier,
                   const FinetuneBatch& batch, const TopicVectorizer& vec,
                   const FinetuneConfig& cfg, ad::Adam& opt_g, Rng& rng);

// MMD between target-context representations and generated-post representations.
double context_relevance_step(ConditionalGenerator& gen, const FinetuneBatch& batch,
                              const TopicVectorizer& vec, const FinetuneConfig& cfg,
                              ad::Adam& opt_g, Rng& rng);

// MMD between the users' recent-k post representations and generated posts.
double recency_step(ConditionalGenerator& gen, const FinetuneBatch& batch,
                    const TopicVectorizer& vec, const FinetuneConfig& cfg, ad::Adam& opt_g,
                    Rng& rng);

// Per-user attack loss value for a fixed classifier output, matching the
// closed forms used in tests (0 at full success, ln 2 at indifference,
// capped at -ln(1e-7) in the divergent limit).
double attack_loss_value(double classifier_prob, int label);

struct FinetuneResult {
  std::vector<StageLossEntry> stage_log;
  std::vector<double> mle_curve;
  int outer_iters_run = 0;
  bool converged = false;
};

// Algorithm: MLE pretraining, then the style -> attack -> context -> recency
// stage loop until the summed generator losses stop moving.
FinetuneResult petgen_train(ConditionalGenerator& gen, Discriminator& disc,
                            const SequenceClassifier& classifier, const Corpus& corpus,
                            const std::vector<std::string>& train_user_ids,
                            const TopicVectorizer& vec, const FinetuneConfig& cfg,
                            std::uint64_t seed, bool skip_mle = false);

void write_stage_log_csv(const std::vector<StageLossEntry>& log, const std::string& path);

}  // namespace seqattack
