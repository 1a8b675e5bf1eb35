#include <benchmark/benchmark.h>

#include "seqattack/classifiers.hpp"
#include "seqattack/evalsuite.hpp"
#include "seqattack/finetune.hpp"
#include "seqattack/generator.hpp"

using namespace seqattack;

namespace {

struct BenchData {
  Corpus corpus;
  TopicVectorizer vec;
  std::shared_ptr<SequenceClassifier> classifier;

  BenchData() {
    corpus = preprocess(synthesize_corpus(60, 5, 300, 8, 3));
    corpus.vocab = build_vocabulary(corpus, 320);
    encode_corpus(corpus, 16, 12);
    VectorizerConfig vcfg;
    vcfg.n_topics = 5;
    vcfg.seed = 1;
    vcfg.gibbs_sweeps = 40;
    vec = fit_topic_model(corpus, vcfg);
    ClassifierConfig ccfg;
    ccfg.token_embed = 32;
    ccfg.post_hidden = 32;
    ccfg.seq_hidden = 32;
    classifier = std::make_shared<SequenceClassifier>(ClassifierKind::HRNN, corpus.vocab.size(),
                                                      ccfg, corpus.vocab.fingerprint(), 2);
    classifier->freeze();
  }
};

BenchData& data() {
  static BenchData d;
  return d;
}

}  // namespace

static void BM_ClassifierForward(benchmark::State& state) {
  auto& d = data();
  auto posts = user_post_ids(d.corpus.users[0]);
  for (auto _ : state) benchmark::DoNotOptimize(d.classifier->predict_prob(posts));
}
BENCHMARK(BM_ClassifierForward);

static void BM_GreedyGeneration(benchmark::State& state) {
  auto& d = data();
  GeneratorConfig gcfg;
  gcfg.base_cell = "relmem";
  gcfg.token_embed = 32;
  gcfg.head_dim = 16;
  gcfg.d = 16;
  ConditionalGenerator gen(d.corpus.vocab.size(), gcfg, 0, 5);
  for (auto _ : state)
    benchmark::DoNotOptimize(gen.generate(d.corpus.users[0], d.vec, GenMode::Greedy, 0).tokens);
}
BENCHMARK(BM_GreedyGeneration);

static void BM_GumbelGenerationWithBackward(benchmark::State& state) {
  auto& d = data();
  GeneratorConfig gcfg;
  gcfg.base_cell = "relmem";
  gcfg.token_embed = 32;
  gcfg.head_dim = 16;
  gcfg.d = 16;
  ConditionalGenerator gen(d.corpus.vocab.size(), gcfg, 0, 5);
  std::uint64_t seed = 0;
  for (auto _ : state) {
    auto r = gen.generate(d.corpus.users[0], d.vec, GenMode::Gumbel, seed++);
    ad::backward(ad::sum(r.soft_post));
    gen.params().zero_grads();
  }
}
BENCHMARK(BM_GumbelGenerationWithBackward);

static void BM_Vect(benchmark::State& state) {
  auto& d = data();
  const std::string& text = d.corpus.users[0].posts[0].raw_text;
  for (auto _ : state) benchmark::DoNotOptimize(d.vec.vect(text));
}
BENCHMARK(BM_Vect);

static void BM_Mmd64(benchmark::State& state) {
  std::mt19937 rng(4);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<Eigen::VectorXd> a, b;
  for (int i = 0; i < 64; ++i) {
    Eigen::VectorXd x(32), y(32);
    for (int j = 0; j < 32; ++j) { x(j) = gauss(rng); y(j) = gauss(rng); }
    a.push_back(x);
    b.push_back(y);
  }
  MmdKernel kernel;
  for (auto _ : state) benchmark::DoNotOptimize(mmd(a, b, kernel));
}
BENCHMARK(BM_Mmd64);

static void BM_CorpusBleu(benchmark::State& state) {
  auto& d = data();
  std::vector<std::string> cands, refs;
  for (const auto& u : d.corpus.users) {
    cands.push_back(u.posts[0].raw_text);
    refs.push_back(u.next_post->raw_text);
  }
  for (auto _ : state) benchmark::DoNotOptimize(bleu(cands, refs));
}
BENCHMARK(BM_CorpusBleu);

BENCHMARK_MAIN();
