#include "seqattack/vectorizer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <unordered_set>

#include <json.hpp>

namespace seqattack {

using nlohmann::json;

TopicVectorizer fit_topic_model(const std::vector<std::string>& documents,
                                const VectorizerConfig& cfg) {
  if (cfg.n_topics < 2)
    throw ConfigError("fit_topic_model: n_topics must be >= 2, got " + std::to_string(cfg.n_topics));
  if (documents.empty()) throw ConfigError("fit_topic_model: empty corpus");

  TopicVectorizer tv;
  tv.alpha_ = cfg.alpha;
  tv.infer_iters_ = cfg.infer_iters;

  // Build the word index over all documents.
  std::vector<std::vector<int>> docs;
  docs.reserve(documents.size());
  {
    std::map<std::string, int> index;
    for (const auto& text : documents) {
      std::vector<int> ids;
      for (const auto& tok : tokenize(text)) {
        auto [it, inserted] = index.emplace(tok, static_cast<int>(index.size()));
        ids.push_back(it->second);
      }
      docs.push_back(std::move(ids));
    }
    tv.word_index_ = std::move(index);
    tv.word_list_.resize(tv.word_index_.size());
    for (const auto& [w, i] : tv.word_index_) tv.word_list_[static_cast<std::size_t>(i)] = w;
  }
  const int K = cfg.n_topics;
  const int V = static_cast<int>(tv.word_list_.size());
  if (V == 0) throw ConfigError("fit_topic_model: corpus has no tokens");

  // Collapsed Gibbs sampling.
  Rng rng = make_rng(cfg.seed);
  Eigen::MatrixXd n_kw = Eigen::MatrixXd::Zero(K, V);
  Eigen::MatrixXd n_dk = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(docs.size()), K);
  Eigen::VectorXd n_k = Eigen::VectorXd::Zero(K);
  std::vector<std::vector<int>> z(docs.size());
  std::uniform_int_distribution<int> topic_dist(0, K - 1);
  for (std::size_t d = 0; d < docs.size(); ++d) {
    z[d].resize(docs[d].size());
    for (std::size_t i = 0; i < docs[d].size(); ++i) {
      int k = topic_dist(rng);
      z[d][i] = k;
      n_kw(k, docs[d][i]) += 1.0;
      n_dk(static_cast<Eigen::Index>(d), k) += 1.0;
      n_k(k) += 1.0;
    }
  }
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Eigen::VectorXd probs(K);
  for (int sweep = 0; sweep < cfg.gibbs_sweeps; ++sweep) {
    for (std::size_t d = 0; d < docs.size(); ++d) {
      for (std::size_t i = 0; i < docs[d].size(); ++i) {
        int w = docs[d][i];
        int old = z[d][i];
        n_kw(old, w) -= 1.0;
        n_dk(static_cast<Eigen::Index>(d), old) -= 1.0;
        n_k(old) -= 1.0;
        double total = 0.0;
        for (int k = 0; k < K; ++k) {
          double p = (n_kw(k, w) + cfg.beta) / (n_k(k) + cfg.beta * V) *
                     (n_dk(static_cast<Eigen::Index>(d), k) + cfg.alpha);
          probs(k) = p;
          total += p;
        }
        double r = unit(rng) * total, acc = 0.0;
        int picked = K - 1;
        for (int k = 0; k < K; ++k) {
          acc += probs(k);
          if (r <= acc) { picked = k; break; }
        }
        z[d][i] = picked;
        n_kw(picked, w) += 1.0;
        n_dk(static_cast<Eigen::Index>(d), picked) += 1.0;
        n_k(picked) += 1.0;
      }
    }
  }

  tv.topic_word_ = Eigen::MatrixXd(K, V);
  for (int k = 0; k < K; ++k)
    tv.topic_word_.row(k) = ((n_kw.row(k).array() + cfg.beta) / (n_k(k) + cfg.beta * V)).matrix();
  // Renormalize exactly so each row sums to 1.
  for (int k = 0; k < K; ++k) tv.topic_word_.row(k) /= tv.topic_word_.row(k).sum();

  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& doc : documents) h = fnv1a(doc, h);
  tv.corpus_fingerprint_ = h;
  return tv;
}

TopicVectorizer fit_topic_model(const Corpus& corpus, const VectorizerConfig& cfg,
                                const std::vector<std::string>& user_ids) {
  std::unordered_set<std::string> keep(user_ids.begin(), user_ids.end());
  std::vector<std::string> docs;
  for (const auto& u : corpus.users) {
    if (!keep.empty() && !keep.count(u.user_id)) continue;
    for (const auto& p : u.posts) {
      docs.push_back(p.raw_text);
      docs.push_back(p.raw_context);
    }
    if (u.next_post) {
      docs.push_back(u.next_post->raw_text);
      docs.push_back(u.next_post->raw_context);
    }
  }
  return fit_topic_model(docs, cfg);
}

Eigen::VectorXd TopicVectorizer::vect(const std::string& text) const {
  if (!fitted()) throw ContractError("vect: vectorizer not fitted");
  const int K = n_topics();
  std::vector<int> words;
  for (const auto& tok : tokenize(text)) {
    auto it = word_index_.find(tok);
    if (it != word_index_.end()) words.push_back(it->second);  // unknown words carry no signal
  }
  Eigen::VectorXd theta = Eigen::VectorXd::Constant(K, 1.0 / K);
  if (words.empty()) return theta;  // uniform prior fallback

  // Deterministic CVB0-style fold-in with topic_word fixed.
  const auto n = static_cast<Eigen::Index>(words.size());
  Eigen::MatrixXd gamma(n, K);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::VectorXd g = topic_word_.col(words[static_cast<std::size_t>(i)]);
    gamma.row(i) = (g / g.sum()).transpose();
  }
  for (int iter = 0; iter < infer_iters_; ++iter) {
    Eigen::RowVectorXd totals = gamma.colwise().sum();
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::RowVectorXd others = totals - gamma.row(i);
      Eigen::RowVectorXd g(K);
      for (int k = 0; k < K; ++k)
        g(k) = topic_word_(k, words[static_cast<std::size_t>(i)]) * (alpha_ + others(k));
      g /= g.sum();
      totals += g - gamma.row(i);
      gamma.row(i) = g;
    }
  }
  Eigen::VectorXd counts = gamma.colwise().sum().transpose();
  theta = (counts.array() + alpha_) / (static_cast<double>(n) + alpha_ * K);
  theta /= theta.sum();
  return theta;
}

std::vector<std::string> TopicVectorizer::top_words(int topic, int n) const {
  if (!fitted()) throw ContractError("top_words: vectorizer not fitted");
  if (topic < 0 || topic >= n_topics()) throw ContractError("top_words: bad topic index");
  std::vector<int> order(word_list_.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return topic_word_(topic, a) > topic_word_(topic, b);
  });
  std::vector<std::string> out;
  for (int i = 0; i < n && i < static_cast<int>(order.size()); ++i)
    out.push_back(word_list_[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])]);
  return out;
}

int TopicVectorizer::dominant_topic(const std::string& text) const {
  Eigen::VectorXd v = vect(text);
  Eigen::Index best = 0;
  v.maxCoeff(&best);
  return static_cast<int>(best);
}

void TopicVectorizer::save(const std::string& path) const {
  json j;
  j["format"] = "seqattack.topic_vectorizer";
  j["version"] = 1;
  j["alpha"] = alpha_;
  j["infer_iters"] = infer_iters_;
  j["fitted_on"] = hex64(corpus_fingerprint_);
  j["words"] = word_list_;
  std::vector<std::vector<double>> rows;
  for (Eigen::Index k = 0; k < topic_word_.rows(); ++k) {
    std::vector<double> r(static_cast<std::size_t>(topic_word_.cols()));
    for (Eigen::Index w = 0; w < topic_word_.cols(); ++w) r[static_cast<std::size_t>(w)] = topic_word_(k, w);
    rows.push_back(std::move(r));
  }
  j["topic_word"] = rows;
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write vectorizer file: " + path);
  out << j.dump();
}

TopicVectorizer TopicVectorizer::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open vectorizer file: " + path);
  json j = json::parse(in);
  if (j.value("format", "") != "seqattack.topic_vectorizer")
    throw SchemaError("not a vectorizer file: " + path);
  TopicVectorizer tv;
  tv.alpha_ = j["alpha"].get<double>();
  tv.infer_iters_ = j["infer_iters"].get<int>();
  tv.corpus_fingerprint_ = std::stoull(j["fitted_on"].get<std::string>(), nullptr, 16);
  tv.word_list_ = j["words"].get<std::vector<std::string>>();
  for (std::size_t i = 0; i < tv.word_list_.size(); ++i)
    tv.word_index_[tv.word_list_[i]] = static_cast<int>(i);
  auto rows = j["topic_word"].get<std::vector<std::vector<double>>>();
  tv.topic_word_ = Eigen::MatrixXd(static_cast<Eigen::Index>(rows.size()),
                                   static_cast<Eigen::Index>(tv.word_list_.size()));
  for (std::size_t k = 0; k < rows.size(); ++k)
    for (std::size_t w = 0; w < rows[k].size(); ++w)
      tv.topic_word_(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(w)) = rows[k][w];
  return tv;
}

double cosine(const Eigen::VectorXd& u, const Eigen::VectorXd& v) {
  if (u.size() != v.size()) throw ContractError("cosine: dimension mismatch");
  double nu = u.norm(), nv = v.norm();
  if (nu == 0.0 || nv == 0.0) return 0.0;
  return u.dot(v) / (nu * nv);
}

std::vector<double> attention_scores(const TopicVectorizer& vec, const std::string& target_context,
                                     const std::vector<std::string>& contexts) {
  if (!vec.fitted()) throw ContractError("attention_scores: vectorizer not fitted");
  if (contexts.empty()) throw ContractError("attention_scores: empty context list");
  Eigen::VectorXd b = vec.vect(target_context);
  std::vector<double> scores;
  scores.reserve(contexts.size());
  for (const auto& c : contexts) {
    double a = cosine(b, vec.vect(c));
    scores.push_back(std::clamp(a, 0.0, 1.0));
  }
  return scores;
}

}  // namespace seqattack
