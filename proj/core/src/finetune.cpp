#include "seqattack/finetune.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_map>

namespace seqattack {

using namespace ad;

namespace {
constexpr double kProbClamp = 1e-7;
}

Discriminator::Discriminator(int vocab_size, const Config& cfg, std::uint64_t seed)
    : vocab_size_(vocab_size), cfg_(cfg) {
  if (cfg.branches < 1 || cfg.filters < 1) throw ConfigError("discriminator: bad config");
  Rng rng = make_rng(seed);
  for (int b = 0; b < cfg.branches; ++b) {
    Branch br;
    std::string prefix = "branch" + std::to_string(b);
    br.embed = params_.add(prefix + ".embed", glorot(vocab_size, cfg.embed_dim, rng));
    for (int k : cfg.kernel_sizes)
      br.conv_w.push_back(params_.add(prefix + ".conv" + std::to_string(k),
                                      glorot(k * cfg.embed_dim, cfg.filters, rng)));
    int feat = cfg.filters * static_cast<int>(cfg.kernel_sizes.size());
    br.head_w = params_.add(prefix + ".head.w", glorot(feat, 1, rng));
    br.head_b = params_.add(prefix + ".head.b", Mat::Zero(1, 1));
    branches_.push_back(std::move(br));
  }
}

Var Discriminator::score(const PostTokens& post) const {
  std::vector<Var> scores;
  for (const auto& br : branches_) {
    Var x;  // [d x embed_dim]
    if (std::holds_alternative<std::vector<int>>(post)) {
      const auto& ids = std::get<std::vector<int>>(post);
      if (ids.empty()) throw ContractError("discriminator: empty post");
      x = gather_rows(br.embed, ids);
    } else {
      const Var& dist = std::get<Var>(post);
      if (dist->value.cols() != vocab_size_)
        throw ContractError("discriminator: relaxed post has wrong vocab dimension");
      x = matmul(dist, br.embed);
    }
    std::vector<Var> feats;
    for (std::size_t i = 0; i < br.conv_w.size(); ++i) {
      int k = cfg_.kernel_sizes[i];
      if (x->value.rows() < k)
        throw ContractError("discriminator: post shorter than kernel size");
      feats.push_back(max_rows(relu(conv1d_rows(x, br.conv_w[i], k))));
    }
    Var pooled = transpose(concat_rows([&] {
      std::vector<Var> cols;
      for (auto& f : feats) cols.push_back(transpose(f));
      return cols;
    }()));
    scores.push_back(add_rowvec(matmul(pooled, br.head_w), br.head_b));
  }
  return mean(concat_rows(scores));
}

std::vector<double> MmdKernel::bandwidths_for(const std::vector<Eigen::VectorXd>& a,
                                              const std::vector<Eigen::VectorXd>& b) const {
  if (kind != "rbf") throw ConfigError("mmd: only the rbf kernel is supported");
  if (!use_median_heuristic) return fixed_bandwidths;
  std::vector<const Eigen::VectorXd*> all;
  for (const auto& v : a) all.push_back(&v);
  for (const auto& v : b) all.push_back(&v);
  std::vector<double> dists;
  for (std::size_t i = 0; i < all.size(); ++i)
    for (std::size_t j = i + 1; j < all.size(); ++j)
      dists.push_back((*all[i] - *all[j]).norm());
  double median = 1.0;
  if (!dists.empty()) {
    std::sort(dists.begin(), dists.end());
    median = dists[dists.size() / 2];
  }
  if (median < 1e-8) median = 1e-8;  // degenerate batch: everything identical
  std::vector<double> out;
  for (double f : bandwidth_factors) out.push_back(f * median);
  return out;
}

namespace {

double rbf_multi(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                 const std::vector<double>& bandwidths) {
  double d2 = (x - y).squaredNorm();
  double k = 0.0;
  for (double s : bandwidths) k += std::exp(-d2 / (2.0 * s * s));
  return k / static_cast<double>(bandwidths.size());
}

}  // namespace

double mmd(const std::vector<Eigen::VectorXd>& a, const std::vector<Eigen::VectorXd>& b,
           const MmdKernel& kernel) {
  if (a.empty() || b.empty()) throw ContractError("mmd: empty set");
  for (const auto& v : a)
    if (v.size() != a[0].size()) throw ContractError("mmd: ragged dimensions in A");
  for (const auto& v : b)
    if (v.size() != a[0].size()) throw ContractError("mmd: dimension mismatch between sets");
  auto bw = kernel.bandwidths_for(a, b);
  double kaa = 0.0, kbb = 0.0;
  for (const auto& x : a)
    for (const auto& y : a) kaa += rbf_multi(x, y, bw);
  for (const auto& x : b)
    for (const auto& y : b) kbb += rbf_multi(x, y, bw);
  // Cross term averaged over both loop orders so mmd(a,b) == mmd(b,a) exactly
  // in floating point, not just mathematically.
  double kab_am = 0.0, kab_bm = 0.0;
  for (const auto& x : a)
    for (const auto& y : b) kab_am += rbf_multi(x, y, bw);
  for (const auto& y : b)
    for (const auto& x : a) kab_bm += rbf_multi(y, x, bw);
  double kab = (kab_am + kab_bm) / 2.0;
  double n = static_cast<double>(a.size()), m = static_cast<double>(b.size());
  double mmd2 = kaa / (n * n) + kbb / (m * m) - 2.0 * kab / (n * m);
  return std::sqrt(std::max(mmd2, 0.0));
}

Var mmd_loss(const Var& a_rows, const Var& b_rows, const std::vector<double>& bandwidths) {
  if (a_rows->value.cols() != b_rows->value.cols())
    throw ContractError("mmd_loss: dimension mismatch");
  if (bandwidths.empty()) throw ContractError("mmd_loss: no bandwidths");
  auto pair_sq = [](const Var& x, const Var& y) {
    // ||x_i - y_j||^2 = |x_i|^2 + |y_j|^2 - 2 x_i . y_j
    Var xx = rows_sqnorm(x);  // [n x 1]
    Var yy = rows_sqnorm(y);  // [m x 1]
    Var ones_m = constant(Mat::Ones(1, y->value.rows()));
    Var ones_n = constant(Mat::Ones(x->value.rows(), 1));
    Var cross = scale(matmul(x, transpose(y)), -2.0);
    return add(add(matmul(xx, ones_m), matmul(ones_n, transpose(yy))), cross);
  };
  auto kernel_mean = [&](const Var& x, const Var& y) {
    Var d2 = pair_sq(x, y);
    Var acc;
    for (std::size_t i = 0; i < bandwidths.size(); ++i) {
      Var k = exp_(scale(d2, -1.0 / (2.0 * bandwidths[i] * bandwidths[i])));
      acc = i == 0 ? k : add(acc, k);
    }
    return mean(scale(acc, 1.0 / static_cast<double>(bandwidths.size())));
  };
  Var mmd2 = sub(add(kernel_mean(a_rows, a_rows), kernel_mean(b_rows, b_rows)),
                 scale(kernel_mean(a_rows, b_rows), 2.0));
  return sqrt_(mmd2, 1e-12);
}

double attack_loss_value(double classifier_prob, int label) {
  double p = std::clamp(classifier_prob, kProbClamp, 1.0 - kProbClamp);
  return label == 1 ? -std::log(1.0 - p) : -std::log(p);
}

namespace {

GenerationResult gumbel_generate(const ConditionalGenerator& gen, const UserRecord& u,
                                 const TopicVectorizer& vec, Rng& rng) {
  return gen.generate(u, vec, GenMode::Gumbel, rng());
}

}  // namespace

std::pair<double, double> style_step(ConditionalGenerator& gen, Discriminator& disc,
                                     const FinetuneBatch& batch, const TopicVectorizer& vec,
                                     const FinetuneConfig& /*cfg*/, ad::Adam& opt_g, ad::Adam& opt_d,
                                     Rng& rng) {
  if (batch.users.empty()) throw ContractError("style_step: empty batch");

  auto build = [&](Rng& r, bool for_generator) {
    std::vector<Var> diffs;
    for (const auto* u : batch.users) {
      std::uniform_int_distribution<std::size_t> pick(0, u->posts.size() - 1);
      const auto& real_ids = u->posts[pick(r)].tokens;  // any historical post
      GenerationResult fake = gumbel_generate(gen, *u, vec, r);
      Var d_real = disc.score(real_ids);
      Var d_fake = disc.score(fake.soft_post);
      diffs.push_back(for_generator ? sub(d_real, d_fake) : sub(d_fake, d_real));
    }
    // -log sigma(diff) = softplus(-diff), stable where sigma saturates.
    return mean(softplus(neg(concat_rows(diffs))));
  };

  // Alternating refinement: generator first, then the discriminator on a
  // fresh forward pass. Identical sampling streams keep the pairing stable.
  Rng rng_g = rng, rng_d = rng;
  disc.params().set_requires_grad(false);
  Var loss_g = build(rng_g, /*for_generator=*/true);
  backward(loss_g);
  opt_g.step(gen.params().vars());
  disc.params().set_requires_grad(true);

  gen.params().set_requires_grad(false);
  Var loss_d = build(rng_d, /*for_generator=*/false);
  backward(loss_d);
  opt_d.step(disc.params().vars());
  gen.params().set_requires_grad(true);
  rng = rng_d;  // advance the caller's stream

  return {scalar(loss_g), scalar(loss_d)};
}

double attack_step(ConditionalGenerator& gen, const SequenceClassifier& classifier,
                   const FinetuneBatch& batch, const TopicVectorizer& vec,
                   const FinetuneConfig& /*cfg*/, ad::Adam& opt_g, Rng& rng) {
  if (batch.users.empty()) throw ContractError("attack_step: empty batch");
  if (!classifier.frozen())
    throw ContractError("attack_step: classifier must be frozen before the attack task");
  std::vector<Var> losses;
  for (const auto* u : batch.users) {
    GenerationResult fake = gumbel_generate(gen, *u, vec, rng);
    std::vector<PostTokens> seq;
    for (const auto& p : u->posts) seq.emplace_back(p.tokens);
    seq.emplace_back(fake.soft_post);
    // Flip objective: push F([P, p_hat]) toward 1 - y_u. Built on the logit so
    // gradients survive where the probability saturates.
    Var z = classifier.forward_logit(seq);
    losses.push_back(u->label == 1 ? softplus(z) : softplus(neg(z)));
  }
  Var total = mean(concat_rows(losses));
  backward(total);
  opt_g.step(gen.params().vars());
  return scalar(total);
}

namespace {

// Shared body of the two MMD relevance stages.
double mmd_stage(ConditionalGenerator& gen, const FinetuneBatch& batch, const TopicVectorizer& vec,
                 const FinetuneConfig& cfg, ad::Adam& opt_g, Rng& rng, bool recency) {
  if (batch.users.empty()) throw ContractError("mmd stage: empty batch");
  std::vector<Var> target_reprs, gen_reprs;
  for (const auto* u : batch.users) {
    if (recency) {
      if (static_cast<int>(u->posts.size()) < cfg.k_recent)
        throw ConfigError("recency_step: user " + u->user_id + " has fewer than k posts");
      for (std::size_t t = u->posts.size() - static_cast<std::size_t>(cfg.k_recent);
           t < u->posts.size(); ++t)
        target_reprs.push_back(gen.pooled_repr(u->posts[t].tokens));
    } else {
      if (!u->next_post) throw ContractError("context_relevance_step: missing target context");
      target_reprs.push_back(gen.pooled_repr(u->next_post->context_tokens));
    }
    GenerationResult fake = gumbel_generate(gen, *u, vec, rng);
    gen_reprs.push_back(gen.pooled_repr(fake.soft_post));
  }
  Var a_rows = concat_rows(target_reprs);
  Var b_rows = concat_rows(gen_reprs);
  std::vector<Eigen::VectorXd> a_vals, b_vals;
  for (Eigen::Index i = 0; i < a_rows->value.rows(); ++i)
    a_vals.push_back(a_rows->value.row(i).transpose());
  for (Eigen::Index i = 0; i < b_rows->value.rows(); ++i)
    b_vals.push_back(b_rows->value.row(i).transpose());
  Var loss = mmd_loss(a_rows, b_rows, cfg.kernel.bandwidths_for(a_vals, b_vals));
  backward(loss);
  opt_g.step(gen.params().vars());
  return scalar(loss);
}

}  // namespace

double context_relevance_step(ConditionalGenerator& gen, const FinetuneBatch& batch,
                              const TopicVectorizer& vec, const FinetuneConfig& cfg,
                              ad::Adam& opt_g, Rng& rng) {
  return mmd_stage(gen, batch, vec, cfg, opt_g, rng, /*recency=*/false);
}

double recency_step(ConditionalGenerator& gen, const FinetuneBatch& batch,
                    const TopicVectorizer& vec, const FinetuneConfig& cfg, ad::Adam& opt_g,
                    Rng& rng) {
  return mmd_stage(gen, batch, vec, cfg, opt_g, rng, /*recency=*/true);
}

FinetuneResult petgen_train(ConditionalGenerator& gen, Discriminator& disc,
                            const SequenceClassifier& classifier, const Corpus& corpus,
                            const std::vector<std::string>& train_user_ids,
                            const TopicVectorizer& vec, const FinetuneConfig& cfg,
                            std::uint64_t seed, bool skip_mle) {
  if (!classifier.frozen()) throw ContractError("petgen_train: classifier must be frozen");
  if (cfg.k_recent < 1) throw ConfigError("petgen_train: k_recent must be >= 1");
  std::unordered_map<std::string, const UserRecord*> by_id;
  for (const auto& u : corpus.users) by_id[u.user_id] = &u;
  std::vector<const UserRecord*> users;
  for (const auto& id : train_user_ids) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw ContractError("petgen_train: unknown user id " + id);
    if (cfg.enable_recency && static_cast<int>(it->second->posts.size()) < cfg.k_recent)
      throw ConfigError("petgen_train: k_recent=" + std::to_string(cfg.k_recent) +
                        " exceeds T for user " + id);
    users.push_back(it->second);
  }
  if (users.empty()) throw ContractError("petgen_train: no training users");

  FinetuneResult res;
  if (!skip_mle) {
    res.mle_curve = gen.mle_pretrain(corpus, vec, train_user_ids, cfg.mle_epochs,
                                     derive_seed(seed, 0));
    for (double v : res.mle_curve) res.stage_log.push_back({-1, "mle", v});
  }

  Adam opt_g(cfg.lr), opt_d(cfg.lr);
  Rng rng = make_rng(derive_seed(seed, 1));

  auto next_batch = [&](Rng& r) {
    FinetuneBatch batch;
    if (static_cast<int>(users.size()) <= cfg.batch_size) {
      batch.users = users;
    } else {
      std::vector<const UserRecord*> pool = users;
      std::shuffle(pool.begin(), pool.end(), r);
      pool.resize(static_cast<std::size_t>(cfg.batch_size));
      batch.users = std::move(pool);
    }
    return batch;
  };

  double prev_sum = std::numeric_limits<double>::infinity();
  for (int outer = 0; outer < cfg.max_outer; ++outer) {
    double sum_losses = 0.0;
    if (cfg.enable_style) {
      for (int s = 0; s < cfg.steps_per_stage; ++s) {
        auto [lg, ld] = style_step(gen, disc, next_batch(rng), vec, cfg, opt_g, opt_d, rng);
        res.stage_log.push_back({outer, "style", lg});
        res.stage_log.push_back({outer, "style_d", ld});
        sum_losses += cfg.w_style * lg;
      }
    }
    if (cfg.enable_attack) {
      for (int s = 0; s < cfg.steps_per_stage; ++s) {
        double l = attack_step(gen, classifier, next_batch(rng), vec, cfg, opt_g, rng);
        res.stage_log.push_back({outer, "attack", l});
        sum_losses += cfg.w_attack * l;
      }
    }
    if (cfg.enable_context) {
      for (int s = 0; s < cfg.steps_per_stage; ++s) {
        double l = context_relevance_step(gen, next_batch(rng), vec, cfg, opt_g, rng);
        res.stage_log.push_back({outer, "context", l});
        sum_losses += cfg.w_context * l;
      }
    }
    if (cfg.enable_recency) {
      for (int s = 0; s < cfg.steps_per_stage; ++s) {
        double l = recency_step(gen, next_batch(rng), vec, cfg, opt_g, rng);
        res.stage_log.push_back({outer, "recency", l});
        sum_losses += cfg.w_recency * l;
      }
    }
    res.outer_iters_run = outer + 1;
    if (!cfg.enable_style && !cfg.enable_attack && !cfg.enable_context && !cfg.enable_recency)
      break;  // nothing to optimize
    double denom = std::max(std::abs(prev_sum), 1e-12);
    if (std::isfinite(prev_sum) && std::abs(prev_sum - sum_losses) / denom < cfg.tol) {
      res.converged = true;
      break;
    }
    prev_sum = sum_losses;
  }
  return res;
}

void write_stage_log_csv(const std::vector<StageLossEntry>& log, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write stage log: " + path);
  out << "outer_iter,stage,loss\n";
  for (const auto& e : log) out << e.outer_iter << "," << e.stage << "," << e.loss << "\n";
}

}  // namespace seqattack
