#include "seqattack/generator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_map>

#include <json.hpp>

namespace seqattack {

using namespace ad;
using nlohmann::json;

GenMode gen_mode_from_string(const std::string& s) {
  if (s == "greedy") return GenMode::Greedy;
  if (s == "sample") return GenMode::Sample;
  if (s == "gumbel") return GenMode::Gumbel;
  throw ConfigError("unknown generation mode: " + s);
}

std::string to_string(GenMode m) {
  switch (m) {
    case GenMode::Greedy: return "greedy";
    case GenMode::Sample: return "sample";
    default: return "gumbel";
  }
}

std::string GenerationResult::text(const Vocabulary& vocab) const {
  std::string out;
  for (int id : tokens) {
    if (id < Vocabulary::kNumSpecials) continue;
    if (!out.empty()) out += ' ';
    out += vocab.id_to_token[static_cast<std::size_t>(id)];
  }
  return out;
}

Var gumbel_sample(const Var& logits, double temperature, Rng& rng) {
  if (temperature <= 0.0) throw ConfigError("gumbel_sample: temperature must be positive");
  Var noise = constant(gumbel_noise(static_cast<int>(logits->value.rows()),
                                    static_cast<int>(logits->value.cols()), rng));
  return softmax_rows(scale(add(logits, noise), 1.0 / temperature));
}

ConditionalGenerator::ConditionalGenerator(int vocab_size, const GeneratorConfig& cfg,
                                           std::uint64_t vocab_fingerprint, std::uint64_t seed)
    : vocab_size_(vocab_size), cfg_(cfg), vocab_fingerprint_(vocab_fingerprint) {
  if (vocab_size < Vocabulary::kNumSpecials + 1)
    throw ConfigError("generator: vocab too small");
  if (cfg.d < 1) throw ConfigError("generator: d must be positive");
  Rng rng = make_rng(seed);
  embed_ = params_.add("embed", glorot(vocab_size, cfg.token_embed, rng));
  if (cfg.base_cell == "gru") {
    core_.kind = RecurrentCore::Kind::Gru;
    core_.gru = GruCell::create(params_, "core", cfg.token_embed, cfg.gru_hidden, rng);
  } else if (cfg.base_cell == "relmem") {
    core_.kind = RecurrentCore::Kind::RelMem;
    core_.relmem = RelMemCell::create(params_, "core", cfg.token_embed, cfg.mem_slots, cfg.heads,
                                      cfg.head_dim, rng);
  } else {
    throw ConfigError("generator: base_cell must be relmem or gru, got " + cfg.base_cell);
  }
  ff_w_ = params_.add("ff.w", glorot(core_.out_dim(), cfg.token_embed, rng));
  ff_b_ = params_.add("ff.b", Mat::Zero(1, cfg.token_embed));
  ln_gamma_ = params_.add("ln.gamma", Mat::Ones(1, cfg.token_embed));
  ln_beta_ = params_.add("ln.beta", Mat::Zero(1, cfg.token_embed));
  out_w_ = params_.add("out.w", glorot(core_.out_dim(), vocab_size, rng));
  out_b_ = params_.add("out.b", Mat::Zero(1, vocab_size));
}

std::vector<Var> ConditionalGenerator::embed_posts(
    const std::vector<std::vector<int>>& posts) const {
  if (posts.empty()) throw ContractError("embed_posts: need at least one post");
  std::vector<Var> out;
  out.reserve(posts.size());
  for (const auto& ids : posts) {
    if (ids.empty()) throw ContractError("embed_posts: empty post");
    Var x = gather_rows(embed_, ids);
    Var state = core_.initial_state();
    Var o;
    for (int i = 0; i < x->value.rows(); ++i) {
      auto [oo, ss] = core_.step(row(x, i), state);
      o = oo;
      state = ss;
    }
    out.push_back(o);
  }
  return out;
}

Var ConditionalGenerator::context_biased_embedding(const std::vector<Var>& post_embeddings,
                                                   const std::vector<double>& scores) {
  if (post_embeddings.empty()) throw ContractError("context_biased_embedding: empty inputs");
  if (post_embeddings.size() != scores.size())
    throw ContractError("context_biased_embedding: length mismatch (" +
                        std::to_string(post_embeddings.size()) + " embeddings vs " +
                        std::to_string(scores.size()) + " scores)");
  Mat a(1, static_cast<Eigen::Index>(scores.size()));
  for (std::size_t i = 0; i < scores.size(); ++i) a(0, static_cast<Eigen::Index>(i)) = scores[i];
  Var weights = softmax_rows(constant(a));                       // [1 x T]
  return matmul(weights, concat_rows(post_embeddings));          // [1 x out_dim]
}

std::vector<double> ConditionalGenerator::history_scores(const std::vector<std::string>& contexts,
                                                         const std::string& target_context,
                                                         const TopicVectorizer& vec) const {
  if (!cfg_.use_attention) return std::vector<double>(contexts.size(), 0.0);
  return attention_scores(vec, target_context, contexts);
}

Var ConditionalGenerator::step_input(const Var& s_proj, const Var& token_embed) const {
  return layer_norm(add(s_proj, token_embed), ln_gamma_, ln_beta_);
}

Var ConditionalGenerator::logits_from(const Var& core_out) const {
  return add_rowvec(matmul(core_out, out_w_), out_b_);
}

namespace {
int first_token_id(const GeneratorConfig& cfg, int vocab_size, Rng& rng) {
  if (cfg.first_token == "random") {
    std::uniform_int_distribution<int> dist(Vocabulary::kNumSpecials, vocab_size - 1);
    return dist(rng);
  }
  return Vocabulary::kBos;
}
}  // namespace

GenerationResult ConditionalGenerator::generate(const std::vector<std::vector<int>>& post_ids,
                                                const std::vector<std::string>& contexts,
                                                const std::string& target_context,
                                                const TopicVectorizer& vec, GenMode mode,
                                                std::uint64_t seed) const {
  if (!vec.fitted()) throw ContractError("generate: vectorizer not fitted");
  if (post_ids.size() != contexts.size())
    throw ContractError("generate: posts/contexts length mismatch");
  std::vector<double> scores = history_scores(contexts, target_context, vec);
  Var s_u = context_biased_embedding(embed_posts(post_ids), scores);
  Var s_proj = add_rowvec(matmul(s_u, ff_w_), ff_b_);

  Rng rng = make_rng(seed);
  GenerationResult res;
  Var state = core_.initial_state();
  Var prev_embed = row(embed_, first_token_id(cfg_, vocab_size_, rng));
  for (int step = 0; step < cfg_.d; ++step) {
    auto [out, next_state] = core_.step(step_input(s_proj, prev_embed), state);
    state = next_state;
    Var logits = logits_from(out);
    if (mode == GenMode::Gumbel) {
      Var y = gumbel_sample(logits, cfg_.gumbel_temperature, rng);
      res.step_dists.push_back(y);
      Eigen::Index argmax = 0;
      y->value.row(0).maxCoeff(&argmax);
      res.tokens.push_back(static_cast<int>(argmax));
      prev_embed = matmul(y, embed_);  // soft feed keeps the chain differentiable
    } else {
      Var probs = softmax_rows(logits);
      int chosen;
      if (mode == GenMode::Greedy) {
        Eigen::Index argmax = 0;
        probs->value.row(0).maxCoeff(&argmax);
        chosen = static_cast<int>(argmax);
      } else {
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        double r = unit(rng), acc = 0.0;
        chosen = vocab_size_ - 1;
        for (int v = 0; v < vocab_size_; ++v) {
          acc += probs->value(0, v);
          if (r <= acc) { chosen = v; break; }
        }
      }
      double lp = std::log(std::max(probs->value(0, chosen), 1e-300));
      res.tokens.push_back(chosen);
      res.step_log_probs.push_back(lp);
      res.total_log_prob += lp;
      prev_embed = row(embed_, chosen);
    }
  }
  if (mode == GenMode::Gumbel) res.soft_post = concat_rows(res.step_dists);
  return res;
}

GenerationResult ConditionalGenerator::generate(const UserRecord& user, const TopicVectorizer& vec,
                                                GenMode mode, std::uint64_t seed) const {
  if (!user.next_post) throw ContractError("generate: user has no target context (run preprocess)");
  std::vector<std::vector<int>> post_ids;
  std::vector<std::string> contexts;
  for (const auto& p : user.posts) {
    post_ids.push_back(p.tokens);
    contexts.push_back(p.raw_context);
  }
  return generate(post_ids, contexts, user.next_post->raw_context, vec, mode, seed);
}

std::vector<Var> ConditionalGenerator::score_teacher_forced(
    const std::vector<std::vector<int>>& post_ids, const std::vector<std::string>& contexts,
    const std::string& target_context, const TopicVectorizer& vec,
    const std::vector<int>& target) const {
  if (static_cast<int>(target.size()) != cfg_.d)
    throw ContractError("score_teacher_forced: target must have exactly d tokens");
  std::vector<double> scores = history_scores(contexts, target_context, vec);
  Var s_u = context_biased_embedding(embed_posts(post_ids), scores);
  Var s_proj = add_rowvec(matmul(s_u, ff_w_), ff_b_);

  std::vector<Var> log_probs;
  Var state = core_.initial_state();
  int prev = Vocabulary::kBos;
  for (int step = 0; step < cfg_.d; ++step) {
    auto [out, next_state] = core_.step(step_input(s_proj, row(embed_, prev)), state);
    state = next_state;
    Var probs = softmax_rows(logits_from(out));
    Var p = clamp(row(transpose(probs), target[static_cast<std::size_t>(step)]), 1e-12, 1.0);
    log_probs.push_back(log_(p));
    prev = target[static_cast<std::size_t>(step)];
  }
  return log_probs;
}

Var ConditionalGenerator::nll(const UserRecord& user, const TopicVectorizer& vec) const {
  if (!user.next_post || user.next_post->tokens.empty())
    throw ContractError("nll: user has no encoded ground-truth next post");
  std::vector<std::vector<int>> post_ids;
  std::vector<std::string> contexts;
  for (const auto& p : user.posts) {
    post_ids.push_back(p.tokens);
    contexts.push_back(p.raw_context);
  }
  auto lps = score_teacher_forced(post_ids, contexts, user.next_post->raw_context, vec,
                                  user.next_post->tokens);
  Var total = lps[0];
  for (std::size_t i = 1; i < lps.size(); ++i) total = add(total, lps[i]);
  return neg(total);
}

std::vector<double> ConditionalGenerator::mle_pretrain(const Corpus& corpus,
                                                       const TopicVectorizer& vec,
                                                       const std::vector<std::string>& train_user_ids,
                                                       int epochs, std::uint64_t seed) {
  std::unordered_map<std::string, const UserRecord*> by_id;
  for (const auto& u : corpus.users) by_id[u.user_id] = &u;
  std::vector<const UserRecord*> users;
  for (const auto& id : train_user_ids) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw ContractError("mle_pretrain: unknown user id " + id);
    users.push_back(it->second);
  }
  if (users.empty()) throw ContractError("mle_pretrain: no training users");

  auto corpus_mean_nll = [&] {
    double total = 0.0;
    for (const auto* u : users) total += scalar(nll(*u, vec));
    return total / static_cast<double>(users.size());
  };

  std::vector<double> curve;
  Adam opt(cfg_.lr);
  auto param_vars = params_.vars();
  Rng rng = make_rng(derive_seed(seed, 0x6d6c65));
  for (int epoch = 0; epoch < epochs; ++epoch) {
    curve.push_back(corpus_mean_nll());
    std::shuffle(users.begin(), users.end(), rng);
    std::size_t at = 0;
    while (at < users.size()) {
      std::size_t hi = std::min(at + static_cast<std::size_t>(cfg_.batch_size), users.size());
      std::vector<Var> losses;
      for (std::size_t i = at; i < hi; ++i) losses.push_back(nll(*users[i], vec));
      backward(mean(concat_rows(losses)));
      opt.step(param_vars);
      at = hi;
    }
  }
  curve.push_back(corpus_mean_nll());
  return curve;
}

Var ConditionalGenerator::pooled_repr(const std::vector<int>& ids) const {
  if (ids.empty()) throw ContractError("pooled_repr: empty post");
  return mean_rows(gather_rows(embed_, ids));
}

Var ConditionalGenerator::pooled_repr(const Var& soft_post) const {
  if (soft_post->value.cols() != vocab_size_)
    throw ContractError("pooled_repr: relaxed post has wrong vocab dimension");
  return mean_rows(matmul(soft_post, embed_));
}

void ConditionalGenerator::save(const std::string& path) const {
  json j;
  j["format"] = "seqattack.generator";
  j["version"] = 1;
  j["vocab_size"] = vocab_size_;
  j["vocab_fingerprint"] = hex64(vocab_fingerprint_);
  j["config"] = {{"base_cell", cfg_.base_cell},   {"token_embed", cfg_.token_embed},
                 {"mem_slots", cfg_.mem_slots},   {"heads", cfg_.heads},
                 {"head_dim", cfg_.head_dim},     {"gru_hidden", cfg_.gru_hidden},
                 {"d", cfg_.d},                   {"first_token", cfg_.first_token},
                 {"gumbel_temperature", cfg_.gumbel_temperature},
                 {"use_attention", cfg_.use_attention}};
  j["params"] = params_.flatten();
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write checkpoint: " + path);
  out << j.dump();
}

std::shared_ptr<ConditionalGenerator> ConditionalGenerator::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open checkpoint: " + path);
  json j = json::parse(in);
  if (j.value("format", "") != "seqattack.generator")
    throw SchemaError("not a generator checkpoint: " + path);
  GeneratorConfig cfg;
  const auto& c = j["config"];
  cfg.base_cell = c["base_cell"].get<std::string>();
  cfg.token_embed = c["token_embed"].get<int>();
  cfg.mem_slots = c["mem_slots"].get<int>();
  cfg.heads = c["heads"].get<int>();
  cfg.head_dim = c["head_dim"].get<int>();
  cfg.gru_hidden = c["gru_hidden"].get<int>();
  cfg.d = c["d"].get<int>();
  cfg.first_token = c["first_token"].get<std::string>();
  cfg.gumbel_temperature = c["gumbel_temperature"].get<double>();
  cfg.use_attention = c["use_attention"].get<bool>();
  auto gen = std::make_shared<ConditionalGenerator>(
      j["vocab_size"].get<int>(), cfg,
      std::stoull(j["vocab_fingerprint"].get<std::string>(), nullptr, 16), /*seed=*/0);
  gen->params_.unflatten(j["params"].get<std::vector<double>>());
  return gen;
}

}  // namespace seqattack
