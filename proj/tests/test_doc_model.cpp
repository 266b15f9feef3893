#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "docnmt/doc_model.hpp"
#include "docnmt/errors.hpp"
#include "test_util.hpp"

namespace docnmt {
namespace {

using namespace testing;

Model random_model(std::size_t vocab, std::uint64_t seed, std::size_t dim = 4, double scale = 0.5) {
  Model m = Model::create(tiny_dims(vocab, dim), seed);
  std::mt19937_64 rng(seed + 1000);
  randomize(m.params, rng, scale);
  return m;
}

std::vector<Tensor> random_states(std::size_t n, std::size_t dim, std::mt19937_64& rng) {
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(random_tensor({dim}, rng));
  return out;
}

TEST(DocModelConfig, PrevTrgExcludesTargetMemory) {
  DocModelConfig c;
  c.prev_trg = true;
  EXPECT_THROW(c.validate(), UsageError);
  c.memories = MemorySelection::kSrc;
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(parse_memory_selection("both"), MemorySelection::kBoth);
  EXPECT_EQ(parse_integration(to_string(Integration::kMemToOutput)), Integration::kMemToOutput);
  EXPECT_THROW(parse_memory_selection("all"), UsageError);
}

TEST(DocModel, FreshModelEqualsSentenceLevel) {
  // Memory matrices start at zero, so any context leaves the model unchanged.
  Model m = Model::create(tiny_dims(9), 3);
  std::mt19937_64 rng(3);
  Document doc{"d", {{3, 4}, {5, 6, 7}}, {{4}, {5, 8}}};
  auto states = random_states(2, 4, rng);
  DocModelConfig both;
  DocModelConfig none;
  none.memories = MemorySelection::kNone;
  Tape tape(&m.params);
  const double a = doc_nll(tape, m, both, doc, &states).loss.value()[0];
  const double b = doc_nll(tape, m, none, doc, nullptr).loss.value()[0];
  EXPECT_EQ(a, b);
}

TEST(DocModel, SingleSentenceDocumentIsSentenceLevel) {
  Model m = random_model(9, 4);
  std::mt19937_64 rng(4);
  Document doc{"d", {{3, 4, 5}}, {{6, 7}}};
  auto states = random_states(1, 4, rng);
  for (Integration integ : {Integration::kMemToContext, Integration::kMemToOutput}) {
    DocModelConfig cfg;
    cfg.integration = integ;
    Tape tape(&m.params);
    const double doc_loss = doc_nll(tape, m, cfg, doc, &states).loss.value()[0];
    const double snmt = nll(tape, m.nmt, encode(tape, m.nmt, doc.src[0]), with_end(doc.trg[0]), {}).loss.value()[0];
    EXPECT_NEAR(doc_loss, snmt, 1e-12);
  }
}

TEST(DocModel, ZeroParamsAreUniform) {
  Model m = Model::create(tiny_dims(8), 5);
  zero_all(m.params);
  Document doc{"d", {{3, 4}, {5, 6, 7}}, {{4}, {5, 6}}};
  std::vector<Tensor> states(2, Tensor::zeros({4}));
  Tape tape(&m.params);
  auto r = doc_nll(tape, m, {}, doc, &states);
  EXPECT_EQ(r.tokens, 5u);
  EXPECT_NEAR(r.loss.value()[0], 5 * std::log(8.0), 1e-12);
}

double softmax_read(const std::vector<std::vector<double>>& cells, const std::vector<double>& q, std::size_t skip,
                    std::size_t coord) {
  std::vector<double> s(cells.size());
  double mx = -INFINITY;
  for (std::size_t k = 0; k < cells.size(); ++k) {
    if (k == skip) continue;
    s[k] = 0;
    for (std::size_t i = 0; i < q.size(); ++i) s[k] += cells[k][i] * q[i];
    mx = std::max(mx, s[k]);
  }
  double z = 0, out = 0;
  for (std::size_t k = 0; k < cells.size(); ++k) {
    if (k == skip) continue;
    z += std::exp(s[k] - mx);
    out += std::exp(s[k] - mx) * cells[k][coord];
  }
  return out / z;
}

TEST(DocModel, LossIsSumOfConditionalSentenceLosses) {
  Model m = random_model(9, 6);
  std::mt19937_64 rng(6);
  Document doc{"d", {{3, 4}, {5, 6, 7}}, {{4, 8}, {5}}};
  auto states = random_states(2, 4, rng);
  DocModelConfig cfg;
  Tape tape(&m.params);
  const double total = doc_nll(tape, m, cfg, doc, &states).loss.value()[0];

  // Rebuild each sentence's contexts from raw cell values.
  Tape t2(&m.params);
  auto src_mem = build_source_memory(t2, m.lm, m.doc_rnn, doc.src);
  std::vector<std::vector<double>> src_cells, trg_cells;
  for (std::size_t k = 0; k < 2; ++k) {
    src_cells.push_back(vec(src_mem.cells.value().row(k)));
    trg_cells.push_back(vec(states[k]));
  }
  double expect = 0;
  for (std::size_t t = 0; t < 2; ++t) {
    auto ann = encode(t2, m.nmt, doc.src[t]);
    const auto h = vec(ann.sentence_rep.value());
    auto q_trg = plus(vec(states[t]), mv(m.params.value(m.trg_query), h));
    std::vector<double> c_src(src_cells[0].size()), c_trg(4);
    for (std::size_t i = 0; i < c_src.size(); ++i) c_src[i] = softmax_read(src_cells, h, t, i);
    for (std::size_t i = 0; i < 4; ++i) c_trg[i] = softmax_read(trg_cells, q_trg, t, i);
    DecoderContext ctx;
    ctx.src = t2.constant(Tensor::vector(c_src));
    ctx.trg = t2.constant(Tensor::vector(c_trg));
    expect += nll(t2, m.nmt, ann, with_end(doc.trg[t]), ctx).loss.value()[0];
  }
  EXPECT_NEAR(total, expect, 1e-12);
}

TEST(DocModel, ZeroReadingsMatchSentenceLevelOnRandomSentences) {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 50; ++i) {
    Model m = random_model(10, 300 + i, 4, 0.8);
    const TokenIds x = random_sentence(10, 1 + i % 5, rng);
    const TokenIds y = with_end(random_sentence(10, 1 + i % 4, rng));
    for (Integration integ : {Integration::kMemToContext, Integration::kMemToOutput}) {
      Tape tape(&m.params);
      auto ann = encode(tape, m.nmt, x);
      DecoderContext ctx;
      ctx.integration = integ;
      ctx.src = zero_vector(tape, 8);
      ctx.trg = zero_vector(tape, 4);
      auto a = nll(tape, m.nmt, ann, y, ctx).trace.log_probs;
      auto b = nll(tape, m.nmt, ann, y, {}).trace.log_probs;
      ASSERT_EQ(a.size(), b.size());
      for (std::size_t k = 0; k < a.size(); ++k) EXPECT_NEAR(a[k], b[k], 1e-9);
    }
  }
}

TEST(DocModel, PrecomputedRepresentationsMatchOnTape) {
  Model m = random_model(9, 8);
  std::mt19937_64 rng(8);
  Document doc{"d", {{3, 4}, {5, 6, 7}, {8}}, {{4}, {5}, {6}}};
  auto states = random_states(3, 4, rng);
  Tape tape(&m.params);
  const double a = doc_nll(tape, m, {}, doc, &states).loss.value()[0];
  const double b = doc_nll(tape, m, {}, doc, &states, lm_representations(m, doc.src)).loss.value()[0];
  EXPECT_NEAR(a, b, 1e-14);
}

TEST(DocModel, TargetMemoryNeedsStates) {
  Model m = random_model(9, 9);
  Document doc{"d", {{3}, {4}}, {{5}, {6}}};
  Tape tape(&m.params);
  EXPECT_THROW(doc_nll(tape, m, {}, doc, nullptr), UsageError);
  std::vector<Tensor> one(1, Tensor::zeros({4}));
  EXPECT_THROW(doc_nll(tape, m, {}, doc, &one), DataError);
}

TEST(DocModelGradients, DualMemoryLossPassesGradCheck) {
  for (Integration integ : {Integration::kMemToContext, Integration::kMemToOutput}) {
    Model m = random_model(8, 10, 4, 0.4);
    std::mt19937_64 rng(10);
    Document doc{"d", {{3, 4}, {5, 6, 7}}, {{4, 7}, {5}}};
    auto states = random_states(2, 4, rng);
    DocModelConfig cfg;
    cfg.integration = integ;
    auto loss = [&](Tape& tape) { return doc_nll(tape, m, cfg, doc, &states).loss; };
    auto r = ad::grad_check(loss, m.params, {}, 1e-5);
    EXPECT_LE(r.max_rel_error, 1e-4) << r.worst_param;
  }
}

TEST(DocModelGradients, PrevTrgPassesGradCheck) {
  Model m = random_model(8, 11, 3, 0.4);
  std::mt19937_64 rng(11);
  Document doc{"d", {{3, 4}, {5}}, {{4}, {5, 6}}};
  auto states = random_states(2, 3, rng);
  DocModelConfig cfg;
  cfg.memories = MemorySelection::kSrc;
  cfg.prev_trg = true;
  auto loss = [&](Tape& tape) { return doc_nll(tape, m, cfg, doc, &states).loss; };
  EXPECT_LE(ad::grad_check(loss, m.params, {}, 1e-5, 6).max_rel_error, 1e-4);
}

}  // namespace
}  // namespace docnmt
