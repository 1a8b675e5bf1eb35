#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

#include "seqattack/corpus.hpp"

namespace seqattack {

struct VectorizerConfig {
  int n_topics = 20;
  std::string fit_scope = "train";  // "train" or "all"
  double alpha = 0.1;               // document-topic prior
  double beta = 0.01;               // topic-word prior
  int gibbs_sweeps = 150;
  int infer_iters = 50;
  std::uint64_t seed = 0;
};

// LDA-backed text vectorizer. Fit once (collapsed Gibbs), then vect() runs a
// deterministic fixed-point fold-in so identical text always yields the
// identical topic mixture.
class TopicVectorizer {
public:
  TopicVectorizer() = default;

  int n_topics() const { return static_cast<int>(topic_word_.rows()); }
  bool fitted() const { return topic_word_.size() > 0; }
  const Eigen::MatrixXd& topic_word() const { return topic_word_; }
  std::uint64_t fitted_on() const { return corpus_fingerprint_; }

  // Posterior topic mixture of the text; uniform for empty / all-unknown text.
  Eigen::VectorXd vect(const std::string& text) const;

  // Most probable words of one topic, most probable first.
  std::vector<std::string> top_words(int topic, int n) const;
  int dominant_topic(const std::string& text) const;

  void save(const std::string& path) const;
  static TopicVectorizer load(const std::string& path);

  friend TopicVectorizer fit_topic_model(const std::vector<std::string>& documents,
                                         const VectorizerConfig& cfg);

private:
  Eigen::MatrixXd topic_word_;  // [n_topics x vocab_words], rows sum to 1
  std::vector<std::string> word_list_;
  std::map<std::string, int> word_index_;
  double alpha_ = 0.1;
  int infer_iters_ = 50;
  std::uint64_t corpus_fingerprint_ = 0;
};

TopicVectorizer fit_topic_model(const std::vector<std::string>& documents,
                                const VectorizerConfig& cfg);

// Gathers post + context text (and the detached targets) from `corpus`,
// restricted to `user_ids` when non-empty, and fits on it.
TopicVectorizer fit_topic_model(const Corpus& corpus, const VectorizerConfig& cfg,
                                const std::vector<std::string>& user_ids = {});

// u.v / (|u||v|); zero vector on either side yields 0.0 rather than NaN.
double cosine(const Eigen::VectorXd& u, const Eigen::VectorXd& v);

// a_u^t = cosine(Vect(target), Vect(context_t)), clamped to [0, 1].
std::vector<double> attention_scores(const TopicVectorizer& vec, const std::string& target_context,
                                     const std::vector<std::string>& contexts);

}  // namespace seqattack
