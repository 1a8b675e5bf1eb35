#pragma once

#include <string>
#include <tuple>
#include <vector>

#include "seqattack/classifiers.hpp"
#include "seqattack/vectorizer.hpp"

namespace seqattack {

struct AttackPost {
  std::vector<int> tokens;  // exactly d ids
  std::string raw_text;
  std::string provenance;   // copycat | hotflip | unitrigger | textbugger | petgen | malcom
  std::vector<std::tuple<int, int, int>> edits;  // (position, old id, new id)
};

// Top-k nearest tokens in an embedding space; specials have no neighbors.
class TokenNeighbors {
public:
  static TokenNeighbors build(const Eigen::MatrixXd& embedding, int top_k = 10);
  const std::vector<int>& of(int token) const;

private:
  std::vector<std::vector<int>> neighbors_;
  std::vector<int> empty_;
};

// Picks one historical post with probability proportional to its attention
// score against the target context (argmax with seeded tie-break in greedy mode).
AttackPost copycat(const UserRecord& user, const TopicVectorizer& vec, std::uint64_t seed,
                   bool greedy = false);

// Gradient-guided single-token swaps on the attack post: position by gradient
// magnitude, substitute by best first-order loss decrease.
AttackPost hotflip(const AttackPost& base, const SequenceClassifier& classifier,
                   const UserRecord& user, const Vocabulary& vocab, int n_flips = 1);

// One hotflip decision given the loss gradient w.r.t. the post's one-hots:
// the position with the largest gradient row norm among real tokens, then the
// substitute with the best (negative) first-order loss change. nullopt when no
// substitute decreases the loss.
std::optional<std::tuple<int, int, int>> hotflip_choice(const Eigen::MatrixXd& grad,
                                                        const std::vector<int>& tokens,
                                                        int vocab_size);

// Prepends the top words of the target context's dominant topic, then
// truncates back to d tokens.
AttackPost unitrigger(const AttackPost& base, const TopicVectorizer& topic_model,
                      const std::string& target_context, const Vocabulary& vocab,
                      int trigger_len = 3);

// Greedy character/word bugs (delete, swap-adjacent-chars, neighbor substitute)
// applied to the raw text, re-encoding after each accepted bug.
AttackPost textbugger(const AttackPost& base, const SequenceClassifier& classifier,
                      const UserRecord& user, const Vocabulary& vocab,
                      const TokenNeighbors& neighbors, int n_bugs = 1);

// Decode ids to text, skipping special tokens.
std::string decode_tokens(const std::vector<int>& tokens, const Vocabulary& vocab);

}  // namespace seqattack
