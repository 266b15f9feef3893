#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "docnmt/corpus.hpp"

namespace docnmt::eval {

inline constexpr std::size_t kMaxBleuOrder = 4;

// Sufficient statistics of corpus BLEU; additive over sentences.
struct BleuStats {
  std::array<std::size_t, kMaxBleuOrder> matches{};
  std::array<std::size_t, kMaxBleuOrder> totals{};
  std::size_t candidate_length = 0;
  std::size_t reference_length = 0;

  BleuStats& operator+=(const BleuStats& o);
};

BleuStats sentence_stats(const Sentence& candidate, const Sentence& reference, std::size_t max_n = kMaxBleuOrder);
// Geometric mean of clipped precisions 1..max_n times the brevity penalty.
// No smoothing: any zero precision gives 0.
double bleu_from_stats(const BleuStats& s, std::size_t max_n = kMaxBleuOrder);

// Corpus BLEU in [0, 1]. Rejects unequal list lengths and empty references.
double bleu(const std::vector<Sentence>& candidates, const std::vector<Sentence>& references,
            std::size_t max_n = kMaxBleuOrder);
double bleu1(const std::vector<Sentence>& candidates, const std::vector<Sentence>& references);

// exp(total NLL / tokens), end tokens counted.
double perplexity(double total_nll, std::size_t tokens);

struct ConsistencyResult {
  std::size_t consistent = 0;
  std::size_t total = 0;
  bool applicable() const { return total > 0; }
  double score() const { return total ? static_cast<double>(consistent) / static_cast<double>(total) : 0.0; }
};

// Over source types occurring at least twice in a document, the fraction whose
// renderings agree across all occurrences. The rendering of the source token
// at position i of a length-n sentence is the candidate token at position
// floor(i * m / n) of the length-m candidate.
ConsistencyResult consistency_score(const std::vector<std::vector<Sentence>>& candidates,
                                    const std::vector<std::vector<Sentence>>& sources);

using CorpusMetric = std::function<double(const std::vector<Sentence>&, const std::vector<Sentence>&)>;

struct SignificanceResult {
  double p_value = 1.0;
  double delta = 0.0;  // metric(b) - metric(a) on the full corpus
  std::size_t resamples = 0;
};

// Paired bootstrap over sentence indices. p is the fraction of resamples on
// which system_b does not beat system_a.
SignificanceResult bootstrap_significance(const CorpusMetric& metric, const std::vector<Sentence>& system_a,
                                          const std::vector<Sentence>& system_b,
                                          const std::vector<Sentence>& references, std::size_t n_resamples,
                                          std::uint64_t seed);
// BLEU specialisation working on per-sentence statistics.
SignificanceResult bootstrap_bleu(const std::vector<Sentence>& system_a, const std::vector<Sentence>& system_b,
                                  const std::vector<Sentence>& references, std::size_t n_resamples,
                                  std::uint64_t seed, std::size_t max_n = kMaxBleuOrder);

}  // namespace docnmt::eval
