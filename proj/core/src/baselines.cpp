#include "seqattack/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "seqattack/finetune.hpp"

namespace seqattack {

using namespace ad;

std::string decode_tokens(const std::vector<int>& tokens, const Vocabulary& vocab) {
  std::string out;
  for (int id : tokens) {
    if (id < Vocabulary::kNumSpecials || id >= vocab.size()) continue;
    if (!out.empty()) out += ' ';
    out += vocab.id_to_token[static_cast<std::size_t>(id)];
  }
  return out;
}

TokenNeighbors TokenNeighbors::build(const Eigen::MatrixXd& embedding, int top_k) {
  TokenNeighbors tn;
  auto v = static_cast<int>(embedding.rows());
  tn.neighbors_.resize(static_cast<std::size_t>(v));
  for (int i = Vocabulary::kNumSpecials; i < v; ++i) {
    std::vector<std::pair<double, int>> dists;
    for (int j = Vocabulary::kNumSpecials; j < v; ++j) {
      if (j == i) continue;
      dists.emplace_back((embedding.row(i) - embedding.row(j)).squaredNorm(), j);
    }
    std::partial_sort(dists.begin(),
                      dists.begin() + std::min<std::ptrdiff_t>(top_k, static_cast<std::ptrdiff_t>(dists.size())),
                      dists.end());
    for (int k = 0; k < top_k && k < static_cast<int>(dists.size()); ++k)
      tn.neighbors_[static_cast<std::size_t>(i)].push_back(dists[static_cast<std::size_t>(k)].second);
  }
  return tn;
}

const std::vector<int>& TokenNeighbors::of(int token) const {
  if (token < 0 || token >= static_cast<int>(neighbors_.size())) return empty_;
  return neighbors_[static_cast<std::size_t>(token)];
}

AttackPost copycat(const UserRecord& user, const TopicVectorizer& vec, std::uint64_t seed,
                   bool greedy) {
  if (user.posts.empty()) throw ContractError("copycat: user has no posts");
  if (!user.next_post) throw ContractError("copycat: user has no target context");
  std::vector<std::string> contexts;
  for (const auto& p : user.posts) contexts.push_back(p.raw_context);
  std::vector<double> scores = attention_scores(vec, user.next_post->raw_context, contexts);

  Rng rng = make_rng(seed);
  std::size_t chosen = 0;
  if (greedy) {
    double best = *std::max_element(scores.begin(), scores.end());
    std::vector<std::size_t> ties;
    for (std::size_t t = 0; t < scores.size(); ++t)
      if (scores[t] >= best - 1e-12) ties.push_back(t);
    chosen = ties[std::uniform_int_distribution<std::size_t>(0, ties.size() - 1)(rng)];
  } else {
    double total = std::accumulate(scores.begin(), scores.end(), 0.0);
    if (total <= 0.0) {
      chosen = std::uniform_int_distribution<std::size_t>(0, scores.size() - 1)(rng);
    } else {
      double r = std::uniform_real_distribution<double>(0.0, total)(rng), acc = 0.0;
      chosen = scores.size() - 1;
      for (std::size_t t = 0; t < scores.size(); ++t) {
        acc += scores[t];
        if (r <= acc) { chosen = t; break; }
      }
    }
  }
  AttackPost out;
  out.tokens = user.posts[chosen].tokens;
  out.raw_text = user.posts[chosen].raw_text;
  out.provenance = "copycat";
  return out;
}

namespace {


double evasion_loss(const SequenceClassifier& classifier, const UserRecord& user,
                    const std::vector<int>& attack_tokens) {
  std::vector<std::vector<int>> seq = user_post_ids(user);
  seq.push_back(attack_tokens);
  return attack_loss_value(classifier.predict_prob(seq), user.label);
}

Mat onehot_matrix(const std::vector<int>& ids, int vocab_size) {
  Mat m = Mat::Zero(static_cast<Eigen::Index>(ids.size()), vocab_size);
  for (std::size_t i = 0; i < ids.size(); ++i) m(static_cast<Eigen::Index>(i), ids[i]) = 1.0;
  return m;
}

}  // namespace

std::optional<std::tuple<int, int, int>> hotflip_choice(const Eigen::MatrixXd& grad,
                                                        const std::vector<int>& tokens,
                                                        int vocab_size) {
  // Most important position: largest gradient magnitude among real tokens.
  int best_pos = -1;
  double best_mag = -1.0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] < Vocabulary::kNumSpecials) continue;
    double mag = grad.row(static_cast<Eigen::Index>(i)).norm();
    if (mag > best_mag) { best_mag = mag; best_pos = static_cast<int>(i); }
  }
  if (best_pos < 0) return std::nullopt;

  // Substitute with the best first-order loss decrease.
  int orig = tokens[static_cast<std::size_t>(best_pos)];
  double g_orig = grad(best_pos, orig);
  int best_sub = -1;
  double best_delta = 0.0;
  for (int w = Vocabulary::kNumSpecials; w < vocab_size; ++w) {
    if (w == orig) continue;
    double delta = grad(best_pos, w) - g_orig;
    if (delta < best_delta) { best_delta = delta; best_sub = w; }
  }
  if (best_sub < 0) return std::nullopt;  // no loss-decreasing substitute
  return std::make_tuple(best_pos, orig, best_sub);
}

AttackPost hotflip(const AttackPost& base, const SequenceClassifier& classifier,
                   const UserRecord& user, const Vocabulary& vocab, int n_flips) {
  if (!classifier.frozen()) throw ContractError("hotflip: classifier must be frozen");
  AttackPost out = base;
  out.provenance = "hotflip";
  out.edits.clear();
  const int v = classifier.vocab_size();

  for (int flip = 0; flip < n_flips; ++flip) {
    // Gradient of the evasion loss w.r.t. the attack post's one-hots.
    Var soft = param(onehot_matrix(out.tokens, v));
    std::vector<PostTokens> seq;
    for (const auto& p : user.posts) seq.emplace_back(p.tokens);
    seq.emplace_back(soft);
    Var z = classifier.forward_logit(seq);
    Var loss = user.label == 1 ? softplus(z) : softplus(neg(z));
    backward(loss);

    auto choice = hotflip_choice(soft->grad, out.tokens, v);
    if (!choice) break;
    auto [pos, orig, sub] = *choice;
    out.tokens[static_cast<std::size_t>(pos)] = sub;
    out.edits.emplace_back(pos, orig, sub);
  }
  out.raw_text = decode_tokens(out.tokens, vocab);
  return out;
}

AttackPost unitrigger(const AttackPost& base, const TopicVectorizer& topic_model,
                      const std::string& target_context, const Vocabulary& vocab,
                      int trigger_len) {
  if (!topic_model.fitted()) throw ContractError("unitrigger: topic model not fitted");
  AttackPost out;
  out.provenance = "unitrigger";
  if (trigger_len <= 0) {
    out.tokens = base.tokens;
    out.raw_text = base.raw_text;
    return out;
  }
  int topic = topic_model.dominant_topic(target_context);
  std::vector<std::string> trigger = topic_model.top_words(topic, trigger_len);

  const int d = static_cast<int>(base.tokens.size());
  std::vector<int> tokens;
  std::string text;
  for (const auto& w : trigger) {
    tokens.push_back(vocab.id_of(w));
    if (!text.empty()) text += ' ';
    text += w;
  }
  for (int id : base.tokens) {
    if (static_cast<int>(tokens.size()) == d) break;
    tokens.push_back(id);
  }
  while (static_cast<int>(tokens.size()) < d) tokens.push_back(Vocabulary::kPad);
  if (!base.raw_text.empty()) text += (text.empty() ? "" : " ") + base.raw_text;

  out.tokens = tokens;
  out.raw_text = text;
  for (std::size_t i = 0; i < out.tokens.size(); ++i)
    if (out.tokens[i] != base.tokens[i])
      out.edits.emplace_back(static_cast<int>(i), base.tokens[i], out.tokens[i]);
  return out;
}

namespace {

std::vector<std::string> bug_candidates(const std::vector<std::string>& words, std::size_t pos,
                                        const Vocabulary& vocab, const TokenNeighbors& neighbors) {
  std::vector<std::string> out;
  auto joined_without = [&](std::size_t skip) {
    std::string s;
    for (std::size_t i = 0; i < words.size(); ++i) {
      if (i == skip) continue;
      if (!s.empty()) s += ' ';
      s += words[i];
    }
    return s;
  };
  auto joined_with = [&](std::size_t at, const std::string& repl) {
    std::string s;
    for (std::size_t i = 0; i < words.size(); ++i) {
      if (!s.empty()) s += ' ';
      s += (i == at) ? repl : words[i];
    }
    return s;
  };

  out.push_back(joined_without(pos));  // delete
  const std::string& w = words[pos];
  if (w.size() >= 2) {                 // swap the middle adjacent pair
    std::string sw = w;
    std::size_t i0 = w.size() >= 4 ? w.size() / 2 - 1 : 0;
    std::swap(sw[i0], sw[i0 + 1]);
    if (sw != w) out.push_back(joined_with(pos, sw));
  }
  int id = vocab.id_of(w);
  if (id >= Vocabulary::kNumSpecials) {
    for (int nb : neighbors.of(id))
      out.push_back(joined_with(pos, vocab.id_to_token[static_cast<std::size_t>(nb)]));
  }
  return out;
}

}  // namespace

AttackPost textbugger(const AttackPost& base, const SequenceClassifier& classifier,
                      const UserRecord& user, const Vocabulary& vocab,
                      const TokenNeighbors& neighbors, int n_bugs) {
  if (!classifier.frozen()) throw ContractError("textbugger: classifier must be frozen");
  const int d = static_cast<int>(base.tokens.size());
  AttackPost out;
  out.provenance = "textbugger";
  out.raw_text = base.raw_text;
  out.tokens = base.tokens;

  std::string text = base.raw_text;
  double cur_loss = evasion_loss(classifier, user, out.tokens);
  for (int bug = 0; bug < n_bugs; ++bug) {
    std::vector<std::string> words = tokenize(text);
    if (words.empty()) break;
    std::string best_text;
    std::vector<int> best_tokens;
    double best_loss = cur_loss;
    for (std::size_t pos = 0; pos < words.size(); ++pos) {
      for (const auto& cand : bug_candidates(words, pos, vocab, neighbors)) {
        std::vector<int> toks = encode_text(cand, vocab, d);
        double loss = evasion_loss(classifier, user, toks);
        if (loss < best_loss - 1e-12) {
          best_loss = loss;
          best_text = cand;
          best_tokens = toks;
        }
      }
    }
    if (best_tokens.empty()) break;  // no strictly improving bug
    text = best_text;
    out.tokens = best_tokens;
    cur_loss = best_loss;
  }
  out.raw_text = text;
  for (std::size_t i = 0; i < out.tokens.size(); ++i)
    if (out.tokens[i] != base.tokens[i])
      out.edits.emplace_back(static_cast<int>(i), base.tokens[i], out.tokens[i]);
  return out;
}

}  // namespace seqattack
