#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>

#include "docnmt/doc_decoder.hpp"
#include "test_util.hpp"

namespace docnmt {
namespace {

using namespace testing;

Model random_model(std::size_t vocab, std::uint64_t seed, double scale) {
  Model m = Model::create(tiny_dims(vocab, 3), seed);
  std::mt19937_64 rng(seed + 1);
  randomize(m.params, rng, scale);
  return m;
}

// Highest-scoring sequence of at most max_len tokens under ctx, by enumeration.
Hypothesis exhaustive(Tape& tape, const NmtParams& p, const Annotations& ann, const DecoderContext& ctx,
                      std::size_t vocab, std::size_t max_len) {
  SearchConfig cfg;
  Hypothesis best;
  best.score = -INFINITY;
  std::function<void(TokenIds&)> rec = [&](TokenIds& y) {
    if (!y.empty() && (y.back() == kEndId || y.size() == max_len)) {
      const double s = sequence_log_prob(tape, p, ann, y, ctx);
      if (s > best.score) {
        best.tokens = y;
        best.score = s;
      }
      return;
    }
    for (std::size_t k = 0; k < vocab; ++k) {
      if (!emittable(k, cfg)) continue;
      y.push_back(k);
      rec(y);
      y.pop_back();
    }
  };
  TokenIds y;
  rec(y);
  // Re-run teacher forcing for the trace.
  best.trace = nll(tape, p, ann, with_end(best.tokens), ctx).trace;
  if (best.tokens.back() != kEndId) {
    DecoderState st = initial_state(tape, p, ann);
    std::size_t prev = kStartId;
    for (auto t : best.tokens) {
      st = decode_step(tape, p, st, prev, ann, ctx).state;
      prev = t;
    }
    best.trace.final_state = st.top().value();
  }
  return best;
}

Searcher exhaustive_searcher(std::size_t vocab, std::size_t max_len) {
  return [=](Tape& tape, const NmtParams& p, const Annotations& ann, const DecoderContext& ctx) {
    return exhaustive(tape, p, ann, ctx, vocab, max_len);
  };
}

TEST(Bcd, ZeroPassesIsSentenceLevelTranslation) {
  Model m = random_model(9, 1, 1.0);
  const std::vector<TokenIds> src{{3, 4}, {5}, {6, 7, 8}};
  SearchConfig cfg;
  cfg.beam_size = 3;
  auto r = bcd_decode(m, m, {}, src, 0, beam_searcher(cfg), "d");
  ASSERT_EQ(r.translations.size(), 3u);
  EXPECT_TRUE(r.audit.empty());
  for (std::size_t t = 0; t < 3; ++t) {
    Tape tape(&m.params);
    EXPECT_EQ(r.translations[t].tokens, beam_decode(tape, m.nmt, encode(tape, m.nmt, src[t]), {}, cfg).tokens);
  }
}

TEST(Bcd, SentenceLevelModelNeverChangesTranslations) {
  Model m = random_model(9, 2, 1.0);
  const std::vector<TokenIds> src{{3, 4}, {5}, {6, 7, 8}};
  auto r = bcd_decode(m, m, {}, src, 2, beam_searcher({}), "d");
  ASSERT_EQ(r.audit.size(), 6u);
  for (const auto& a : r.audit) {
    EXPECT_FALSE(a.changed);
    EXPECT_EQ(a.old_score, a.new_score);
  }
  // Pass 2, second sentence; sentence indices are 0-based.
  EXPECT_EQ(format_audit(r.audit[4]).substr(0, 6), "d\t2\t1\t");
}

TEST(Bcd, ExhaustiveUpdatesNeverLowerOwnProbability) {
  std::mt19937_64 rng(3);
  std::size_t changed = 0;
  for (int trial = 0; trial < 100; ++trial) {
    Model base = random_model(6, 500 + trial, 1.0);
    Model doc = base;
    std::mt19937_64 mrng(900 + trial);
    for (const char* name : {"mem.W_sm", "mem.W_st", "mem.W_ym", "mem.W_yt"}) {
      for (double& v : doc.params.value(doc.params.at(name)).values()) v = std::uniform_real_distribution<>(-2, 2)(mrng);
    }
    DocModelConfig cfg;
    cfg.integration = trial % 2 ? Integration::kMemToOutput : Integration::kMemToContext;
    std::vector<TokenIds> src;
    for (int s = 0; s < 3; ++s) src.push_back(random_sentence(6, 1 + s % 2, rng));
    auto r = bcd_decode(base, doc, cfg, src, 1, exhaustive_searcher(6, 3), "t");
    ASSERT_EQ(r.audit.size(), 3u);
    for (const auto& a : r.audit) {
      EXPECT_GE(a.new_score, a.old_score - 1e-12) << "trial " << trial << " sentence " << a.sentence;
      changed += a.changed;
    }
  }
  EXPECT_GT(changed, 0u) << "the property was never exercised";
}

}  // namespace
}  // namespace docnmt
