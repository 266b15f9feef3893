#include <benchmark/benchmark.h>

#include <random>

#include "docnmt/corpus.hpp"
#include "docnmt/doc_model.hpp"
#include "docnmt/metrics.hpp"

namespace {

using namespace docnmt;

Tensor random_tensor(Shape shape, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> d(-1, 1);
  for (double& v : t.values()) v = d(rng);
  return t;
}

ModelDims dims(std::size_t vocab, std::size_t d) {
  ModelDims m;
  m.src_vocab = m.trg_vocab = vocab;
  m.embed = m.hidden = m.lm_hidden = m.doc_hidden = d;
  m.align = d / 2;
  return m;
}

TokenIds sentence(std::size_t vocab, std::size_t len, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> d(3, vocab - 1);
  TokenIds s(len);
  for (auto& t : s) t = d(rng);
  return s;
}

void BM_MatVecForwardBackward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(1);
  const Tensor w = random_tensor({n, n}, rng), x = random_tensor({n, 1}, rng);
  for (auto _ : state) {
    Tape tape;
    Var loss = ad::sum(ad::tanh(ad::matmul(tape.constant(w), tape.constant(x))));
    benchmark::DoNotOptimize(tape.backward(loss));
  }
}
BENCHMARK(BM_MatVecForwardBackward)->Arg(32)->Arg(128);

void BM_SentenceNllAndGradient(benchmark::State& state) {
  std::mt19937_64 rng(2);
  Model m = Model::create(dims(60, static_cast<std::size_t>(state.range(0))), 1);
  const TokenIds x = sentence(60, 8, rng), y = with_end(sentence(60, 8, rng));
  for (auto _ : state) {
    Tape tape(&m.params);
    auto ann = encode(tape, m.nmt, x);
    benchmark::DoNotOptimize(tape.backward(nll(tape, m.nmt, ann, y, {}).loss));
  }
}
BENCHMARK(BM_SentenceNllAndGradient)->Arg(16)->Arg(32);

void BM_BeamSearch(benchmark::State& state) {
  std::mt19937_64 rng(3);
  Model m = Model::create(dims(60, 32), 1);
  const TokenIds x = sentence(60, 8, rng);
  SearchConfig cfg;
  cfg.beam_size = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) {
    Tape tape(&m.params);
    auto ann = encode(tape, m.nmt, x);
    benchmark::DoNotOptimize(beam_decode(tape, m.nmt, ann, {}, cfg));
  }
}
BENCHMARK(BM_BeamSearch)->Arg(1)->Arg(5);

void BM_DocumentLoss(benchmark::State& state) {
  std::mt19937_64 rng(4);
  Model m = Model::create(dims(60, 32), 1);
  Document doc{"bench", {}, {}};
  std::vector<Tensor> states;
  for (int s = 0; s < 8; ++s) {
    doc.src.push_back(sentence(60, 6, rng));
    doc.trg.push_back(sentence(60, 6, rng));
    states.push_back(random_tensor({32}, rng));
  }
  DocModelConfig cfg;
  for (auto _ : state) {
    Tape tape(&m.params);
    benchmark::DoNotOptimize(tape.backward(doc_nll(tape, m, cfg, doc, &states).loss));
  }
}
BENCHMARK(BM_DocumentLoss);

void BM_CorpusBleu(benchmark::State& state) {
  SyntheticSpec spec;
  const auto corpus = gen_synthetic(spec);
  const auto refs = target_sentences(corpus.train);
  auto hyps = refs;
  for (std::size_t i = 0; i < hyps.size(); i += 3) {
    if (!hyps[i].empty()) hyps[i].back() = "x";
  }
  for (auto _ : state) benchmark::DoNotOptimize(eval::bleu(hyps, refs));
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(refs.size()));
}
BENCHMARK(BM_CorpusBleu);

}  // namespace

BENCHMARK_MAIN();
