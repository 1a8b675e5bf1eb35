#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "seqattack/vectorizer.hpp"

namespace seqattack {

// F1 for the malicious class; 0.0 when there are no true positives.
double f1_score(const std::vector<int>& preds, const std::vector<int>& truth);

// Percent of previously-correct users flipped by the attack; nullopt when the
// classifier got nothing right before the attack.
std::optional<double> attack_rate(const std::vector<int>& pre_preds,
                                  const std::vector<int>& post_preds,
                                  const std::vector<int>& truth);

struct BleuConfig {
  int max_n = 4;
  double smoothing_epsilon = 1e-9;  // added to zero n-gram match counts
};

// Corpus-level BLEU of candidates against a shared reference pool, with
// brevity penalty and clipped n-gram counts.
double bleu(const std::vector<std::string>& candidates, const std::vector<std::string>& references,
            const BleuConfig& cfg = {});

double target_context_similarity(const std::vector<std::string>& gen_posts,
                                 const std::vector<std::string>& target_contexts,
                                 const TopicVectorizer& vec);

// (1/N) sum_u sum_{t in last k} cosine(Vect(p_u^t), Vect(gen_u)); the inner sum
// is deliberately not divided by k, so values may exceed 1.
double recent_post_similarity(const std::vector<std::string>& gen_posts,
                              const std::vector<std::vector<std::string>>& user_posts, int k,
                              const TopicVectorizer& vec, bool normalized = false);

double context_post_similarity(const std::vector<std::string>& gen_posts,
                               const std::vector<std::vector<std::string>>& user_posts,
                               const std::vector<std::vector<double>>& attn_scores,
                               const TopicVectorizer& vec);

// Lexicon-based sentiment with a VADER-style compound score.
class SentimentScorer {
public:
  static SentimentScorer load(const std::string& lexicon_path);
  static SentimentScorer from_entries(const std::vector<std::pair<std::string, double>>& entries);
  static SentimentScorer builtin();  // compiled-in subset of a valence lexicon

  double compound(const std::string& text) const;
  // +1 / 0 / -1 by the +-0.05 compound-score convention.
  int sign(const std::string& text) const;

private:
  std::map<std::string, double> valence_;
};

double sentiment_consistency(const std::vector<std::string>& gen_posts,
                             const std::vector<std::string>& original_posts,
                             const SentimentScorer& scorer);

enum class Direction { LowerBetter, HigherBetter };

// Percent improvement of `ours` over `baseline`; nullopt on a zero baseline.
std::optional<double> improvement(double ours, double baseline, Direction direction);

struct AttackReport {
  std::string attack;
  double f1_before = 0.0;
  double f1_after = 0.0;
  std::optional<double> atk;
  double bleu = 0.0;
  double tcs = 0.0;
  double rs = 0.0;
  double cps = 0.0;
  std::optional<double> sentiment_consistency;
  // baseline name -> {f1_impr_pct, atk_impr_pct}
  std::map<std::string, std::pair<std::optional<double>, std::optional<double>>> improvements;
  std::string config_fingerprint;
};

}  // namespace seqattack
