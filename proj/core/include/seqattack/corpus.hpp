#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "seqattack/common.hpp"

namespace seqattack {

// One post plus its topic context. Token ids are filled by encode(); until
// then only the raw text fields are meaningful.
struct Post {
  std::vector<int> tokens;          // length d after encode
  std::string raw_text;
  std::vector<int> context_tokens;  // length d_prime after encode
  std::string raw_context;
  std::int64_t timestamp = 0;
};

struct UserRecord {
  std::string user_id;
  int label = 0;                 // 0 benign, 1 malicious
  std::vector<Post> posts;       // chronological, T entries after preprocess
  std::optional<Post> next_post; // detached ground-truth (T+1)-th post; its
                                 // raw_context is the target context b_u
};

struct Vocabulary {
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kBos = 2;
  static constexpr int kNumSpecials = 3;

  std::map<std::string, int> token_to_id;
  std::vector<std::string> id_to_token;  // index == id

  int size() const { return static_cast<int>(id_to_token.size()); }
  int id_of(const std::string& token) const;
  std::uint64_t fingerprint() const;
};

struct Corpus {
  std::vector<UserRecord> users;
  Vocabulary vocab;  // empty until build_vocabulary + encode

  std::size_t num_users() const { return users.size(); }
};

struct FoldAssignment {
  int n_folds = 5;
  std::uint64_t seed = 0;
  std::map<std::string, int> fold_of_user;

  std::vector<std::string> users_in_fold(int fold) const;
  std::vector<std::string> users_not_in_fold(int fold) const;
};

struct PreprocessConfig {
  int min_posts = 5;
  int min_tokens = 5;
  int max_posts = 20;
};

// Lowercase, split on whitespace and punctuation.
std::vector<std::string> tokenize(const std::string& text);

// Encode text to exactly `d` ids: UNK for OOV, right-pad with PAD, truncate tail.
std::vector<int> encode_text(const std::string& text, const Vocabulary& vocab, int d);

Corpus load_dataset(const std::string& path);
Corpus load_dataset_jsonl(const std::string& jsonl_content);  // for tests

// Drops short posts, drops small users, truncates to the latest max_posts,
// then detaches each user's final post as the ground-truth next post.
Corpus preprocess(Corpus corpus, const PreprocessConfig& cfg = {});

Vocabulary build_vocabulary(const Corpus& corpus, int max_size);

// Fills Post::tokens / Post::context_tokens everywhere (including next_post).
void encode_corpus(Corpus& corpus, int d, int d_prime);

FoldAssignment make_folds(const Corpus& corpus, int n_folds, std::uint64_t seed);

struct SynthesisConfig {
  int n_users = 200;
  int n_topics = 5;     // last topic is the malicious one
  int vocab_size = 500;
  int posts_per_user = 8;  // raw posts before preprocessing (T in the call signature)
  std::uint64_t seed = 0;
  int min_post_len = 8;
  int max_post_len = 24;
  int context_len = 10;
  double malicious_topic_weight = 0.5;
};

Corpus synthesize_corpus(const SynthesisConfig& cfg);
Corpus synthesize_corpus(int n_users, int n_topics, int vocab_size, int posts_per_user,
                         std::uint64_t seed);

struct CorpusStats {
  std::size_t n_users = 0;
  std::size_t n_benign = 0;
  std::size_t n_malicious = 0;
  std::size_t total_posts = 0;       // retained posts, excluding detached targets
  double median_posts_pre_filter = 0.0;
  double median_posts_post_filter = 0.0;
};

CorpusStats corpus_stats(const Corpus& raw, const Corpus& preprocessed);

}  // namespace seqattack
