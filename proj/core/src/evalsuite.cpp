#include "seqattack/evalsuite.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace seqattack {

double f1_score(const std::vector<int>& preds, const std::vector<int>& truth) {
  if (preds.size() != truth.size()) throw ContractError("f1: length mismatch");
  if (preds.empty()) throw ContractError("f1: empty inputs");
  int tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] == 1 && truth[i] == 1) ++tp;
    else if (preds[i] == 1 && truth[i] == 0) ++fp;
    else if (preds[i] == 0 && truth[i] == 1) ++fn;
  }
  if (tp == 0) return 0.0;
  double precision = static_cast<double>(tp) / (tp + fp);
  double recall = static_cast<double>(tp) / (tp + fn);
  return 2.0 * precision * recall / (precision + recall);
}

std::optional<double> attack_rate(const std::vector<int>& pre_preds,
                                  const std::vector<int>& post_preds,
                                  const std::vector<int>& truth) {
  if (pre_preds.size() != post_preds.size() || pre_preds.size() != truth.size())
    throw ContractError("attack_rate: length mismatch");
  int correct_before = 0, flipped = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (pre_preds[i] == truth[i]) {
      ++correct_before;
      if (post_preds[i] != truth[i]) ++flipped;
    }
  }
  if (correct_before == 0) return std::nullopt;
  return 100.0 * static_cast<double>(flipped) / static_cast<double>(correct_before);
}

namespace {

using Ngram = std::vector<std::string>;

std::map<Ngram, int> ngram_counts(const std::vector<std::string>& tokens, int n) {
  std::map<Ngram, int> counts;
  if (static_cast<int>(tokens.size()) < n) return counts;
  for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= tokens.size(); ++i)
    ++counts[Ngram(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                   tokens.begin() + static_cast<std::ptrdiff_t>(i + static_cast<std::size_t>(n)))];
  return counts;
}

}  // namespace

double bleu(const std::vector<std::string>& candidates, const std::vector<std::string>& references,
            const BleuConfig& cfg) {
  if (candidates.empty() || references.empty())
    throw ContractError("bleu: empty candidate or reference corpus");

  std::vector<std::vector<std::string>> cand_tokens, ref_tokens;
  for (const auto& c : candidates) cand_tokens.push_back(tokenize(c));
  for (const auto& r : references) ref_tokens.push_back(tokenize(r));

  // Max reference count per n-gram across the shared reference pool.
  std::vector<std::map<Ngram, int>> ref_max(static_cast<std::size_t>(cfg.max_n) + 1);
  for (int n = 1; n <= cfg.max_n; ++n)
    for (const auto& rt : ref_tokens)
      for (const auto& [g, c] : ngram_counts(rt, n)) {
        int& slot = ref_max[static_cast<std::size_t>(n)][g];
        slot = std::max(slot, c);
      }

  std::vector<double> matched(static_cast<std::size_t>(cfg.max_n) + 1, 0.0);
  std::vector<double> total(static_cast<std::size_t>(cfg.max_n) + 1, 0.0);
  long cand_len = 0, eff_ref_len = 0;
  for (const auto& ct : cand_tokens) {
    cand_len += static_cast<long>(ct.size());
    // Closest reference length (ties toward the shorter).
    long best_ref = static_cast<long>(ref_tokens.front().size());
    for (const auto& rt : ref_tokens) {
      long len = static_cast<long>(rt.size());
      long cur = std::labs(len - static_cast<long>(ct.size()));
      long best = std::labs(best_ref - static_cast<long>(ct.size()));
      if (cur < best || (cur == best && len < best_ref)) best_ref = len;
    }
    eff_ref_len += best_ref;
    for (int n = 1; n <= cfg.max_n; ++n) {
      auto counts = ngram_counts(ct, n);
      for (const auto& [g, c] : counts) {
        auto it = ref_max[static_cast<std::size_t>(n)].find(g);
        int clip = it == ref_max[static_cast<std::size_t>(n)].end() ? 0 : it->second;
        matched[static_cast<std::size_t>(n)] += std::min(c, clip);
        total[static_cast<std::size_t>(n)] += c;
      }
    }
  }
  if (cand_len == 0) return 0.0;

  double log_prec_sum = 0.0;
  for (int n = 1; n <= cfg.max_n; ++n) {
    double m = matched[static_cast<std::size_t>(n)];
    double t = total[static_cast<std::size_t>(n)];
    if (t == 0.0) return 0.0;  // candidates shorter than n everywhere
    if (m == 0.0) m = cfg.smoothing_epsilon;
    log_prec_sum += std::log(m / t);
  }
  double bp = cand_len >= eff_ref_len
                  ? 1.0
                  : std::exp(1.0 - static_cast<double>(eff_ref_len) / static_cast<double>(cand_len));
  return bp * std::exp(log_prec_sum / cfg.max_n);
}

double target_context_similarity(const std::vector<std::string>& gen_posts,
                                 const std::vector<std::string>& target_contexts,
                                 const TopicVectorizer& vec) {
  if (gen_posts.size() != target_contexts.size())
    throw ContractError("target_context_similarity: count mismatch");
  if (gen_posts.empty()) throw ContractError("target_context_similarity: empty inputs");
  double total = 0.0;
  for (std::size_t i = 0; i < gen_posts.size(); ++i)
    total += cosine(vec.vect(target_contexts[i]), vec.vect(gen_posts[i]));
  return total / static_cast<double>(gen_posts.size());
}

double recent_post_similarity(const std::vector<std::string>& gen_posts,
                              const std::vector<std::vector<std::string>>& user_posts, int k,
                              const TopicVectorizer& vec, bool normalized) {
  if (gen_posts.size() != user_posts.size())
    throw ContractError("recent_post_similarity: count mismatch");
  if (gen_posts.empty()) throw ContractError("recent_post_similarity: empty inputs");
  if (k < 1) throw ContractError("recent_post_similarity: k must be >= 1");
  double total = 0.0;
  for (std::size_t u = 0; u < gen_posts.size(); ++u) {
    if (static_cast<int>(user_posts[u].size()) < k)
      throw ContractError("recent_post_similarity: user has fewer than k posts");
    Eigen::VectorXd g = vec.vect(gen_posts[u]);
    double inner = 0.0;
    for (std::size_t t = user_posts[u].size() - static_cast<std::size_t>(k);
         t < user_posts[u].size(); ++t)
      inner += cosine(vec.vect(user_posts[u][t]), g);
    total += normalized ? inner / k : inner;
  }
  return total / static_cast<double>(gen_posts.size());
}

double context_post_similarity(const std::vector<std::string>& gen_posts,
                               const std::vector<std::vector<std::string>>& user_posts,
                               const std::vector<std::vector<double>>& attn_scores,
                               const TopicVectorizer& vec) {
  if (gen_posts.size() != user_posts.size() || gen_posts.size() != attn_scores.size())
    throw ContractError("context_post_similarity: count mismatch");
  if (gen_posts.empty()) throw ContractError("context_post_similarity: empty inputs");
  double total = 0.0;
  for (std::size_t u = 0; u < gen_posts.size(); ++u) {
    if (user_posts[u].size() != attn_scores[u].size())
      throw ContractError("context_post_similarity: scores/posts length mismatch");
    Eigen::VectorXd g = vec.vect(gen_posts[u]);
    double inner = 0.0;
    for (std::size_t t = 0; t < user_posts[u].size(); ++t)
      inner += attn_scores[u][t] * cosine(vec.vect(user_posts[u][t]), g);
    total += inner;
  }
  return total / static_cast<double>(gen_posts.size());
}

SentimentScorer SentimentScorer::load(const std::string& lexicon_path) {
  std::ifstream in(lexicon_path);
  if (!in) throw ConfigError("cannot open sentiment lexicon: " + lexicon_path);
  SentimentScorer s;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string word;
    double valence;
    if (ls >> word >> valence) s.valence_[word] = valence;
  }
  if (s.valence_.empty()) throw ConfigError("sentiment lexicon is empty: " + lexicon_path);
  return s;
}

SentimentScorer SentimentScorer::from_entries(
    const std::vector<std::pair<std::string, double>>& entries) {
  SentimentScorer s;
  for (const auto& [w, v] : entries) s.valence_[w] = v;
  return s;
}

SentimentScorer SentimentScorer::builtin() {
  // Trimmed word-valence table in the style of the usual social-media lexicons.
  static const std::vector<std::pair<std::string, double>> kTable = {
      {"good", 1.9},       {"great", 3.1},     {"excellent", 2.7}, {"amazing", 2.8},
      {"awesome", 3.1},    {"fantastic", 2.6}, {"wonderful", 2.7}, {"love", 3.2},
      {"loved", 2.9},      {"like", 1.5},      {"liked", 1.6},     {"best", 3.2},
      {"better", 1.9},     {"nice", 1.8},      {"happy", 2.7},     {"glad", 2.0},
      {"enjoy", 2.2},      {"enjoyed", 2.3},   {"perfect", 2.7},   {"pleasant", 2.3},
      {"delicious", 2.9},  {"tasty", 2.2},     {"fresh", 1.3},     {"friendly", 2.2},
      {"helpful", 1.9},    {"recommend", 1.7}, {"recommended", 1.8}, {"favorite", 2.0},
      {"win", 2.8},        {"winner", 2.8},    {"beautiful", 2.9}, {"clean", 1.7},
      {"fast", 1.2},       {"impressive", 2.3}, {"superb", 3.0},   {"fine", 0.8},
      {"satisfied", 1.9},  {"worth", 0.9},     {"polite", 1.9},    {"cozy", 1.7},
      {"bad", -2.5},       {"terrible", -2.1}, {"awful", -2.0},    {"horrible", -2.5},
      {"worst", -3.1},     {"worse", -2.1},    {"hate", -2.7},     {"hated", -2.6},
      {"disgusting", -2.4}, {"dirty", -1.8},   {"rude", -2.0},     {"slow", -1.2},
      {"poor", -2.1},      {"disappointing", -2.2}, {"disappointed", -2.1}, {"nasty", -2.3},
      {"gross", -1.9},     {"bland", -1.3},    {"stale", -1.5},    {"overpriced", -1.7},
      {"avoid", -1.6},     {"never", -1.1},    {"broken", -1.6},   {"mess", -1.5},
      {"fail", -2.3},      {"failed", -2.2},   {"problem", -1.4},  {"problems", -1.5},
      {"wrong", -1.6},     {"angry", -2.3},    {"annoying", -1.9}, {"scam", -2.6},
      {"fake", -1.9},      {"fraud", -2.7},    {"cheap", -0.7},    {"cold", -0.8},
      {"waste", -2.0},     {"wasted", -2.1},   {"sad", -2.1},      {"unhappy", -2.2},
  };
  return from_entries(kTable);
}

double SentimentScorer::compound(const std::string& text) const {
  double total = 0.0;
  for (const auto& tok : tokenize(text)) {
    auto it = valence_.find(tok);
    if (it != valence_.end()) total += it->second;
  }
  // VADER-style normalization to (-1, 1).
  return total / std::sqrt(total * total + 15.0);
}

int SentimentScorer::sign(const std::string& text) const {
  double c = compound(text);
  if (c >= 0.05) return 1;
  if (c <= -0.05) return -1;
  return 0;
}

double sentiment_consistency(const std::vector<std::string>& gen_posts,
                             const std::vector<std::string>& original_posts,
                             const SentimentScorer& scorer) {
  if (gen_posts.size() != original_posts.size())
    throw ContractError("sentiment_consistency: count mismatch");
  if (gen_posts.empty()) throw ContractError("sentiment_consistency: empty inputs");
  int agree = 0;
  for (std::size_t i = 0; i < gen_posts.size(); ++i)
    if (scorer.sign(gen_posts[i]) == scorer.sign(original_posts[i])) ++agree;
  return static_cast<double>(agree) / static_cast<double>(gen_posts.size());
}

std::optional<double> improvement(double ours, double baseline, Direction direction) {
  if (baseline == 0.0) return std::nullopt;
  if (direction == Direction::LowerBetter) return 100.0 * (baseline - ours) / baseline;
  return 100.0 * (ours - baseline) / baseline;
}

}  // namespace seqattack
