#pragma once

// Brute-force reference implementations of every metric, written directly from
// the definitions and kept independent of the library code paths they check.

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "seqattack/vectorizer.hpp"

namespace oracle {

inline double f1(const std::vector<int>& preds, const std::vector<int>& truth) {
  double tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    tp += (preds[i] == 1 && truth[i] == 1);
    fp += (preds[i] == 1 && truth[i] == 0);
    fn += (preds[i] == 0 && truth[i] == 1);
  }
  if (tp == 0) return 0.0;
  double p = tp / (tp + fp), r = tp / (tp + fn);
  return 2 * p * r / (p + r);
}

inline std::optional<double> attack_rate(const std::vector<int>& pre, const std::vector<int>& post,
                                         const std::vector<int>& truth) {
  int denom = 0, num = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (pre[i] != truth[i]) continue;
    ++denom;
    if (post[i] != truth[i]) ++num;
  }
  if (denom == 0) return std::nullopt;
  return 100.0 * num / denom;
}

// Corpus BLEU recomputed from scratch with nested loops over token vectors.
inline double bleu(const std::vector<std::vector<std::string>>& cands,
                   const std::vector<std::vector<std::string>>& refs, int max_n = 4,
                   double eps = 1e-9) {
  long cand_len = 0, ref_len = 0;
  std::vector<double> matched(static_cast<std::size_t>(max_n) + 1, 0.0),
      total(static_cast<std::size_t>(max_n) + 1, 0.0);
  for (const auto& c : cands) {
    cand_len += static_cast<long>(c.size());
    long best = refs.empty() ? 0 : static_cast<long>(refs[0].size());
    for (const auto& r : refs) {
      long len = static_cast<long>(r.size());
      if (std::labs(len - static_cast<long>(c.size())) < std::labs(best - static_cast<long>(c.size())) ||
          (std::labs(len - static_cast<long>(c.size())) == std::labs(best - static_cast<long>(c.size())) &&
           len < best))
        best = len;
    }
    ref_len += best;
    for (int n = 1; n <= max_n; ++n) {
      std::map<std::vector<std::string>, int> cc;
      for (std::size_t i = 0; i + n <= c.size(); ++i)
        ++cc[std::vector<std::string>(c.begin() + i, c.begin() + i + n)];
      for (const auto& [g, cnt] : cc) {
        int clip = 0;
        for (const auto& r : refs) {
          int rc = 0;
          for (std::size_t i = 0; i + n <= r.size(); ++i)
            if (std::equal(g.begin(), g.end(), r.begin() + i)) ++rc;
          clip = std::max(clip, rc);
        }
        matched[static_cast<std::size_t>(n)] += std::min(cnt, clip);
        total[static_cast<std::size_t>(n)] += cnt;
      }
    }
  }
  if (cand_len == 0) return 0.0;
  double logsum = 0.0;
  for (int n = 1; n <= max_n; ++n) {
    if (total[static_cast<std::size_t>(n)] == 0) return 0.0;
    double m = matched[static_cast<std::size_t>(n)];
    if (m == 0) m = eps;
    logsum += std::log(m / total[static_cast<std::size_t>(n)]);
  }
  double bp = cand_len >= ref_len ? 1.0 : std::exp(1.0 - double(ref_len) / double(cand_len));
  return bp * std::exp(logsum / max_n);
}

inline double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  double na = a.norm(), nb = b.norm();
  if (na == 0 || nb == 0) return 0.0;
  return a.dot(b) / (na * nb);
}

inline double tcs(const std::vector<std::string>& gen, const std::vector<std::string>& ctx,
                  const seqattack::TopicVectorizer& vec) {
  double s = 0;
  for (std::size_t u = 0; u < gen.size(); ++u) s += cosine(vec.vect(ctx[u]), vec.vect(gen[u]));
  return s / static_cast<double>(gen.size());
}

inline double rs(const std::vector<std::string>& gen,
                 const std::vector<std::vector<std::string>>& hist, int k,
                 const seqattack::TopicVectorizer& vec) {
  double s = 0;
  for (std::size_t u = 0; u < gen.size(); ++u)
    for (std::size_t t = hist[u].size() - static_cast<std::size_t>(k); t < hist[u].size(); ++t)
      s += cosine(vec.vect(hist[u][t]), vec.vect(gen[u]));
  return s / static_cast<double>(gen.size());
}

inline double cps(const std::vector<std::string>& gen,
                  const std::vector<std::vector<std::string>>& hist,
                  const std::vector<std::vector<double>>& attn,
                  const seqattack::TopicVectorizer& vec) {
  double s = 0;
  for (std::size_t u = 0; u < gen.size(); ++u)
    for (std::size_t t = 0; t < hist[u].size(); ++t)
      s += attn[u][t] * cosine(vec.vect(hist[u][t]), vec.vect(gen[u]));
  return s / static_cast<double>(gen.size());
}

inline std::optional<double> improvement(double ours, double baseline, bool lower_better) {
  if (baseline == 0.0) return std::nullopt;
  return lower_better ? 100.0 * (baseline - ours) / baseline : 100.0 * (ours - baseline) / baseline;
}

// Plain double-loop multi-bandwidth RBF MMD.
inline double mmd(const std::vector<Eigen::VectorXd>& a, const std::vector<Eigen::VectorXd>& b,
                  const std::vector<double>& bws) {
  auto kern = [&](const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
    double k = 0;
    for (double s : bws) k += std::exp(-(x - y).squaredNorm() / (2 * s * s));
    return k / static_cast<double>(bws.size());
  };
  double kaa = 0, kbb = 0, kab = 0;
  for (const auto& x : a)
    for (const auto& y : a) kaa += kern(x, y);
  for (const auto& x : b)
    for (const auto& y : b) kbb += kern(x, y);
  for (const auto& x : a)
    for (const auto& y : b) kab += kern(x, y);
  double n = static_cast<double>(a.size()), m = static_cast<double>(b.size());
  return std::sqrt(std::max(0.0, kaa / (n * n) + kbb / (m * m) - 2 * kab / (n * m)));
}

}  // namespace oracle
