#include "seqattack/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

namespace seqattack {

using nlohmann::json;

int Vocabulary::id_of(const std::string& token) const {
  auto it = token_to_id.find(token);
  return it == token_to_id.end() ? kUnk : it->second;
}

std::uint64_t Vocabulary::fingerprint() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  const char sep = '\x1f';
  for (const auto& t : id_to_token) {
    h = fnv1a(t, h);
    h = fnv1a(&sep, 1, h);
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return s;
}

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : text) {
    bool is_delim = std::isspace(c) || std::ispunct(c);
    if (is_delim) {
      if (!cur.empty()) { out.push_back(cur); cur.clear(); }
    } else {
      cur.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

std::vector<int> encode_text(const std::string& text, const Vocabulary& vocab, int d) {
  std::vector<int> ids;
  ids.reserve(static_cast<std::size_t>(d));
  for (const auto& tok : tokenize(text)) {
    if (static_cast<int>(ids.size()) == d) break;
    ids.push_back(vocab.id_of(tok));
  }
  while (static_cast<int>(ids.size()) < d) ids.push_back(Vocabulary::kPad);
  return ids;
}

namespace {

UserRecord parse_user_line(const json& j, std::size_t line_no) {
  auto fail = [line_no](const std::string& what) -> SchemaError {
    return SchemaError("line " + std::to_string(line_no) + ": " + what);
  };
  if (!j.is_object()) throw fail("expected a JSON object");
  if (!j.contains("user_id") || !j["user_id"].is_string()) throw fail("missing string \"user_id\"");
  if (!j.contains("label")) throw fail("missing \"label\"");
  if (!j["label"].is_number_integer()) throw fail("\"label\" must be 0 or 1");
  int label = j["label"].get<int>();
  if (label != 0 && label != 1) throw fail("\"label\" must be 0 or 1, got " + std::to_string(label));
  if (!j.contains("posts") || !j["posts"].is_array()) throw fail("missing array \"posts\"");

  UserRecord u;
  u.user_id = j["user_id"].get<std::string>();
  u.label = label;
  for (const auto& pj : j["posts"]) {
    if (!pj.is_object() || !pj.contains("text") || !pj["text"].is_string())
      throw fail("post missing string \"text\"");
    Post p;
    p.raw_text = pj["text"].get<std::string>();
    p.raw_context = pj.value("context", std::string{});
    p.timestamp = pj.value("timestamp", static_cast<std::int64_t>(0));
    u.posts.push_back(std::move(p));
  }
  return u;
}

Corpus parse_jsonl(std::istream& in) {
  Corpus corpus;
  std::unordered_map<std::string, bool> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw SchemaError("line " + std::to_string(line_no) + ": JSON parse error: " + e.what());
    }
    UserRecord u = parse_user_line(j, line_no);
    if (seen.count(u.user_id))
      throw SchemaError("line " + std::to_string(line_no) + ": duplicate user_id " + u.user_id);
    seen[u.user_id] = true;
    // Chronological order within a user; ordering keys must be distinct.
    std::stable_sort(u.posts.begin(), u.posts.end(),
                     [](const Post& a, const Post& b) { return a.timestamp < b.timestamp; });
    for (std::size_t i = 1; i < u.posts.size(); ++i)
      if (u.posts[i].timestamp == u.posts[i - 1].timestamp)
        throw SchemaError("line " + std::to_string(line_no) + ": user " + u.user_id +
                          " has duplicate timestamp " + std::to_string(u.posts[i].timestamp));
    corpus.users.push_back(std::move(u));
  }
  return corpus;
}

}  // namespace

Corpus load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open dataset file: " + path);
  return parse_jsonl(in);
}

Corpus load_dataset_jsonl(const std::string& jsonl_content) {
  std::istringstream in(jsonl_content);
  return parse_jsonl(in);
}

Corpus preprocess(Corpus corpus, const PreprocessConfig& cfg) {
  Corpus out;
  out.vocab = corpus.vocab;
  for (auto& u : corpus.users) {
    // Posts below the token threshold go first, then the user-count check.
    std::vector<Post> kept;
    for (auto& p : u.posts) {
      std::istringstream ws(p.raw_text);
      int n = 0;
      std::string tok;
      while (ws >> tok) ++n;
      if (n >= cfg.min_tokens) kept.push_back(std::move(p));
    }
    if (static_cast<int>(kept.size()) < cfg.min_posts) continue;
    if (static_cast<int>(kept.size()) > cfg.max_posts)
      kept.erase(kept.begin(), kept.end() - cfg.max_posts);  // latest max_posts
    UserRecord nu;
    nu.user_id = u.user_id;
    nu.label = u.label;
    nu.next_post = std::move(kept.back());
    kept.pop_back();
    nu.posts = std::move(kept);
    out.users.push_back(std::move(nu));
  }
  if (out.users.empty() && !corpus.users.empty())
    std::cerr << "warning: corpus is empty after preprocessing ("
              << corpus.users.size() << " users filtered out)\n";
  return out;
}

Vocabulary build_vocabulary(const Corpus& corpus, int max_size) {
  if (max_size < Vocabulary::kNumSpecials + 1)
    throw ConfigError("build_vocabulary: max_size must leave room for specials, got " +
                      std::to_string(max_size));
  std::map<std::string, std::int64_t> counts;  // ordered map: lexicographic tie-break for free
  auto count_text = [&counts](const std::string& text) {
    for (const auto& t : tokenize(text)) ++counts[t];
  };
  for (const auto& u : corpus.users) {
    for (const auto& p : u.posts) {
      count_text(p.raw_text);
      count_text(p.raw_context);
    }
    if (u.next_post) {
      count_text(u.next_post->raw_text);
      count_text(u.next_post->raw_context);
    }
  }
  std::vector<std::pair<std::string, std::int64_t>> freq(counts.begin(), counts.end());
  std::stable_sort(freq.begin(), freq.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocabulary v;
  v.id_to_token = {"<pad>", "<unk>", "<bos>"};
  for (const auto& [tok, _] : freq) {
    if (v.size() >= max_size) break;
    v.id_to_token.push_back(tok);
  }
  for (int i = 0; i < v.size(); ++i) v.token_to_id[v.id_to_token[static_cast<std::size_t>(i)]] = i;
  return v;
}

void encode_corpus(Corpus& corpus, int d, int d_prime) {
  if (corpus.vocab.size() == 0) throw ContractError("encode_corpus: vocabulary not built");
  for (auto& u : corpus.users) {
    for (auto& p : u.posts) {
      p.tokens = encode_text(p.raw_text, corpus.vocab, d);
      p.context_tokens = encode_text(p.raw_context, corpus.vocab, d_prime);
    }
    if (u.next_post) {
      u.next_post->tokens = encode_text(u.next_post->raw_text, corpus.vocab, d);
      u.next_post->context_tokens = encode_text(u.next_post->raw_context, corpus.vocab, d_prime);
    }
  }
}

std::vector<std::string> FoldAssignment::users_in_fold(int fold) const {
  std::vector<std::string> out;
  for (const auto& [id, f] : fold_of_user)
    if (f == fold) out.push_back(id);
  return out;
}

std::vector<std::string> FoldAssignment::users_not_in_fold(int fold) const {
  std::vector<std::string> out;
  for (const auto& [id, f] : fold_of_user)
    if (f != fold) out.push_back(id);
  return out;
}

FoldAssignment make_folds(const Corpus& corpus, int n_folds, std::uint64_t seed) {
  if (n_folds < 2) throw ConfigError("make_folds: need at least 2 folds");
  if (corpus.users.size() < static_cast<std::size_t>(n_folds))
    throw ConfigError("make_folds: fewer users (" + std::to_string(corpus.users.size()) +
                      ") than folds (" + std::to_string(n_folds) + ")");
  FoldAssignment fa;
  fa.n_folds = n_folds;
  fa.seed = seed;
  // Stratified: shuffle each class separately, then deal with one rotating
  // pointer so total fold sizes differ by at most one.
  std::vector<std::string> by_class[2];
  for (const auto& u : corpus.users) by_class[u.label].push_back(u.user_id);
  Rng rng = make_rng(seed);
  int pointer = 0;
  for (auto& ids : by_class) {
    std::shuffle(ids.begin(), ids.end(), rng);
    for (const auto& id : ids) {
      fa.fold_of_user[id] = pointer % n_folds;
      ++pointer;
    }
  }
  return fa;
}

Corpus synthesize_corpus(int n_users, int n_topics, int vocab_size, int posts_per_user,
                         std::uint64_t seed) {
  SynthesisConfig cfg;
  cfg.n_users = n_users;
  cfg.n_topics = n_topics;
  cfg.vocab_size = vocab_size;
  cfg.posts_per_user = posts_per_user;
  cfg.seed = seed;
  return synthesize_corpus(cfg);
}

Corpus synthesize_corpus(const SynthesisConfig& cfg) {
  if (cfg.n_users <= 0 || cfg.n_topics <= 1 || cfg.vocab_size <= 0 || cfg.posts_per_user <= 0)
    throw ConfigError("synthesize_corpus: all sizes must be positive (and n_topics >= 2)");
  if (cfg.vocab_size < cfg.n_topics)
    throw ConfigError("synthesize_corpus: vocab_size must be >= n_topics");

  Rng rng = make_rng(cfg.seed);
  int words_per_topic = cfg.vocab_size / cfg.n_topics;
  const int malicious_topic = cfg.n_topics - 1;

  auto topic_word = [&](int topic, Rng& r) {
    // Words are partitioned into contiguous per-topic slices.
    int lo = topic * words_per_topic;
    int hi = (topic == cfg.n_topics - 1) ? cfg.vocab_size : lo + words_per_topic;
    std::uniform_int_distribution<int> dist(lo, hi - 1);
    return dist(r);
  };

  Corpus corpus;
  std::uniform_int_distribution<int> len_dist(cfg.min_post_len, cfg.max_post_len);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::gamma_distribution<double> gamma(1.0, 1.0);  // Dirichlet(1) via gammas

  for (int ui = 0; ui < cfg.n_users; ++ui) {
    UserRecord u;
    u.user_id = "user_" + std::to_string(ui);
    u.label = (ui % 2 == 0) ? 0 : 1;  // balanced by construction

    // Per-user mixture over benign topics.
    std::vector<double> mix(static_cast<std::size_t>(cfg.n_topics - 1));
    double total = 0.0;
    for (auto& w : mix) { w = gamma(rng) + 1e-6; total += w; }
    for (auto& w : mix) w /= total;

    for (int pi = 0; pi < cfg.posts_per_user; ++pi) {
      // Pick the post's dominant topic.
      int topic;
      if (u.label == 1 && unit(rng) < cfg.malicious_topic_weight) {
        topic = malicious_topic;
      } else {
        double r = unit(rng), acc = 0.0;
        topic = 0;
        for (std::size_t k = 0; k < mix.size(); ++k) {
          acc += mix[k];
          if (r <= acc) { topic = static_cast<int>(k); break; }
        }
      }
      Post p;
      int len = len_dist(rng);
      std::ostringstream text;
      for (int w = 0; w < len; ++w) {
        // Mostly on-topic with a sprinkle of cross-topic noise.
        int t = (unit(rng) < 0.85) ? topic : std::uniform_int_distribution<int>(0, cfg.n_topics - 1)(rng);
        text << (w ? " " : "") << "w" << topic_word(t, rng);
      }
      p.raw_text = text.str();
      std::ostringstream ctx;
      for (int w = 0; w < cfg.context_len; ++w)
        ctx << (w ? " " : "") << "w" << topic_word(topic, rng);
      p.raw_context = ctx.str();
      p.timestamp = pi + 1;
      u.posts.push_back(std::move(p));
    }
    corpus.users.push_back(std::move(u));
  }
  return corpus;
}

CorpusStats corpus_stats(const Corpus& raw, const Corpus& preprocessed) {
  CorpusStats s;
  s.n_users = preprocessed.users.size();
  for (const auto& u : preprocessed.users) {
    if (u.label == 0) ++s.n_benign; else ++s.n_malicious;
    s.total_posts += u.posts.size();
  }
  auto median_of = [](std::vector<std::size_t> counts) -> double {
    if (counts.empty()) return 0.0;
    std::sort(counts.begin(), counts.end());
    std::size_t n = counts.size();
    return (n % 2) ? static_cast<double>(counts[n / 2])
                   : 0.5 * static_cast<double>(counts[n / 2 - 1] + counts[n / 2]);
  };
  std::vector<std::size_t> pre, post;
  for (const auto& u : raw.users) pre.push_back(u.posts.size());
  for (const auto& u : preprocessed.users)
    post.push_back(u.posts.size() + (u.next_post ? 1 : 0));
  s.median_posts_pre_filter = median_of(pre);
  s.median_posts_post_filter = median_of(post);
  return s;
}

}  // namespace seqattack
