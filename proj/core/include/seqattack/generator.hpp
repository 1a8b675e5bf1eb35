#pragma once

#include <memory>
#include <string>
#include <vector>

#include "seqattack/autodiff.hpp"
#include "seqattack/cells.hpp"
#include "seqattack/corpus.hpp"
#include "seqattack/vectorizer.hpp"

namespace seqattack {

struct GeneratorConfig {
  std::string base_cell = "relmem";  // "relmem" | "gru"
  int token_embed = 64;
  int mem_slots = 1;
  int heads = 2;
  int head_dim = 32;
  int gru_hidden = 64;
  int d = 30;                        // generated post length
  std::string first_token = "bos";   // "bos" | "random"
  double gumbel_temperature = 1.0;
  bool use_attention = true;         // contextual attention over the history
  double lr = 1e-5;
  int batch_size = 64;
  int mle_epochs = 20;
};

enum class GenMode { Greedy, Sample, Gumbel };

GenMode gen_mode_from_string(const std::string& s);
std::string to_string(GenMode m);

struct GenerationResult {
  std::vector<int> tokens;           // length d; argmax of each step in gumbel mode
  double total_log_prob = 0.0;       // greedy/sample: sum of chosen-token log-probs
  std::vector<double> step_log_probs;
  std::vector<ad::Var> step_dists;   // gumbel mode: per-step soft one-hots [1 x V]
  ad::Var soft_post;                 // gumbel mode: [d x V]

  std::string text(const Vocabulary& vocab) const;  // specials stripped
};

// softmax((logits + Gumbel noise) / temperature); differentiable w.r.t. logits.
ad::Var gumbel_sample(const ad::Var& logits, double temperature, Rng& rng);

class ConditionalGenerator {
public:
  ConditionalGenerator(int vocab_size, const GeneratorConfig& cfg, std::uint64_t vocab_fingerprint,
                       std::uint64_t seed);

  // e_u^t: final core state after running over each post's tokens.
  std::vector<ad::Var> embed_posts(const std::vector<std::vector<int>>& posts) const;

  // s_u = sum_t softmax(scores)_t * e_t.
  static ad::Var context_biased_embedding(const std::vector<ad::Var>& post_embeddings,
                                          const std::vector<double>& scores);

  // Attention scores for a user's history against the target context; uniform
  // when attention is disabled in the config.
  std::vector<double> history_scores(const std::vector<std::string>& contexts,
                                     const std::string& target_context,
                                     const TopicVectorizer& vec) const;

  GenerationResult generate(const std::vector<std::vector<int>>& post_ids,
                            const std::vector<std::string>& contexts,
                            const std::string& target_context, const TopicVectorizer& vec,
                            GenMode mode, std::uint64_t seed) const;
  GenerationResult generate(const UserRecord& user, const TopicVectorizer& vec, GenMode mode,
                            std::uint64_t seed) const;

  // Teacher-forced per-step log-prob nodes of `target` (length d).
  std::vector<ad::Var> score_teacher_forced(const std::vector<std::vector<int>>& post_ids,
                                            const std::vector<std::string>& contexts,
                                            const std::string& target_context,
                                            const TopicVectorizer& vec,
                                            const std::vector<int>& target) const;

  // Sum of negative per-step log-probs as a scalar node.
  ad::Var nll(const UserRecord& user, const TopicVectorizer& vec) const;

  // Teacher-forced MLE on the detached ground-truth next posts. Returns the
  // full-corpus mean NLL evaluated before each epoch plus once at the end
  // (curve[0] is the untrained loss).
  std::vector<double> mle_pretrain(const Corpus& corpus, const TopicVectorizer& vec,
                                   const std::vector<std::string>& train_user_ids, int epochs,
                                   std::uint64_t seed);

  const GeneratorConfig& config() const { return cfg_; }
  int vocab_size() const { return vocab_size_; }
  ad::ParamSet& params() { return params_; }
  const ad::ParamSet& params() const { return params_; }
  std::uint64_t fingerprint() const { return params_.fingerprint(); }
  const ad::Var& token_embedding() const { return embed_; }
  void set_use_attention(bool on) { cfg_.use_attention = on; }

  // Mean token embedding of a post, the shared representation for kernel
  // losses: hard ids or a relaxed [d x V] post.
  ad::Var pooled_repr(const std::vector<int>& ids) const;
  ad::Var pooled_repr(const ad::Var& soft_post) const;

  void save(const std::string& path) const;
  static std::shared_ptr<ConditionalGenerator> load(const std::string& path);

private:
  ad::Var step_input(const ad::Var& s_proj, const ad::Var& token_embed) const;
  ad::Var logits_from(const ad::Var& core_out) const;

  int vocab_size_;
  GeneratorConfig cfg_;
  std::uint64_t vocab_fingerprint_;

  ad::ParamSet params_;
  ad::Var embed_;                  // [V x token_embed]
  RecurrentCore core_;
  ad::Var ff_w_, ff_b_;            // s_u -> token_embed adapter
  ad::Var ln_gamma_, ln_beta_;
  ad::Var out_w_, out_b_;          // core out -> vocab logits
};

}  // namespace seqattack
