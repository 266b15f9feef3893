#include "docnmt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "docnmt/errors.hpp"

namespace docnmt::eval {

BleuStats& BleuStats::operator+=(const BleuStats& o) {
  for (std::size_t n = 0; n < kMaxBleuOrder; ++n) {
    matches[n] += o.matches[n];
    totals[n] += o.totals[n];
  }
  candidate_length += o.candidate_length;
  reference_length += o.reference_length;
  return *this;
}

namespace {

std::map<std::vector<std::string>, std::size_t> ngram_counts(const Sentence& s, std::size_t n) {
  std::map<std::vector<std::string>, std::size_t> counts;
  if (s.size() < n) return counts;
  for (std::size_t i = 0; i + n <= s.size(); ++i) ++counts[std::vector<std::string>(s.begin() + i, s.begin() + i + n)];
  return counts;
}

void check_max_n(std::size_t max_n) {
  if (max_n < 1 || max_n > kMaxBleuOrder) throw UsageError("BLEU order must be between 1 and 4");
}

}  // namespace

BleuStats sentence_stats(const Sentence& candidate, const Sentence& reference, std::size_t max_n) {
  check_max_n(max_n);
  if (reference.empty()) throw DataError("BLEU: empty reference sentence");
  BleuStats s;
  s.candidate_length = candidate.size();
  s.reference_length = reference.size();
  for (std::size_t n = 1; n <= max_n; ++n) {
    const auto cand = ngram_counts(candidate, n);
    const auto ref = ngram_counts(reference, n);
    for (const auto& [gram, c] : cand) {
      auto it = ref.find(gram);
      if (it != ref.end()) s.matches[n - 1] += std::min(c, it->second);
      s.totals[n - 1] += c;
    }
  }
  return s;
}

double bleu_from_stats(const BleuStats& s, std::size_t max_n) {
  check_max_n(max_n);
  if (s.candidate_length == 0) return 0.0;
  double log_p = 0.0;
  for (std::size_t n = 0; n < max_n; ++n) {
    if (s.matches[n] == 0 || s.totals[n] == 0) return 0.0;
    log_p += std::log(static_cast<double>(s.matches[n]) / static_cast<double>(s.totals[n]));
  }
  log_p /= static_cast<double>(max_n);
  const double c = static_cast<double>(s.candidate_length);
  const double r = static_cast<double>(s.reference_length);
  const double log_bp = c < r ? 1.0 - r / c : 0.0;
  return std::exp(log_p + log_bp);
}

double bleu(const std::vector<Sentence>& candidates, const std::vector<Sentence>& references, std::size_t max_n) {
  if (candidates.size() != references.size()) throw DataError("BLEU: candidate and reference counts differ");
  BleuStats total;
  for (std::size_t i = 0; i < candidates.size(); ++i) total += sentence_stats(candidates[i], references[i], max_n);
  return bleu_from_stats(total, max_n);
}

double bleu1(const std::vector<Sentence>& candidates, const std::vector<Sentence>& references) {
  return bleu(candidates, references, 1);
}

double perplexity(double total_nll, std::size_t tokens) {
  if (tokens == 0) throw DataError("perplexity over zero tokens");
  return std::exp(total_nll / static_cast<double>(tokens));
}

ConsistencyResult consistency_score(const std::vector<std::vector<Sentence>>& candidates,
                                    const std::vector<std::vector<Sentence>>& sources) {
  if (candidates.size() != sources.size()) throw DataError("consistency: document count mismatch");
  ConsistencyResult res;
  for (std::size_t d = 0; d < sources.size(); ++d) {
    if (candidates[d].size() != sources[d].size()) throw DataError("consistency: sentence count mismatch");
    std::map<std::string, std::vector<std::string>> renderings;
    for (std::size_t s = 0; s < sources[d].size(); ++s) {
      const auto& src = sources[d][s];
      const auto& cand = candidates[d][s];
      for (std::size_t i = 0; i < src.size(); ++i) {
        std::string rendering;
        if (!cand.empty()) rendering = cand[std::min(cand.size() - 1, i * cand.size() / src.size())];
        renderings[src[i]].push_back(rendering);
      }
    }
    for (const auto& [type, rs] : renderings) {
      if (rs.size() < 2) continue;
      ++res.total;
      if (std::all_of(rs.begin(), rs.end(), [&](const std::string& r) { return r == rs.front(); })) ++res.consistent;
    }
  }
  return res;
}

namespace {

std::vector<std::size_t> resample(std::mt19937_64& rng, std::size_t n) {
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::vector<std::size_t> idx(n);
  for (auto& i : idx) i = pick(rng);
  return idx;
}

void check_aligned(std::size_t a, std::size_t b, std::size_t r, std::size_t n_resamples) {
  if (n_resamples < 1) throw UsageError("bootstrap needs at least one resample");
  if (a != b || a != r) throw DataError("bootstrap: system outputs and references are not aligned");
  if (a == 0) throw DataError("bootstrap: empty test set");
}

}  // namespace

SignificanceResult bootstrap_significance(const CorpusMetric& metric, const std::vector<Sentence>& system_a,
                                          const std::vector<Sentence>& system_b,
                                          const std::vector<Sentence>& references, std::size_t n_resamples,
                                          std::uint64_t seed) {
  check_aligned(system_a.size(), system_b.size(), references.size(), n_resamples);
  SignificanceResult res;
  res.resamples = n_resamples;
  res.delta = metric(system_b, references) - metric(system_a, references);
  std::mt19937_64 rng(seed);
  std::size_t not_better = 0;
  std::vector<Sentence> a, b, r;
  for (std::size_t k = 0; k < n_resamples; ++k) {
    a.clear();
    b.clear();
    r.clear();
    for (auto i : resample(rng, references.size())) {
      a.push_back(system_a[i]);
      b.push_back(system_b[i]);
      r.push_back(references[i]);
    }
    if (!(metric(b, r) > metric(a, r))) ++not_better;
  }
  res.p_value = static_cast<double>(not_better) / static_cast<double>(n_resamples);
  return res;
}

SignificanceResult bootstrap_bleu(const std::vector<Sentence>& system_a, const std::vector<Sentence>& system_b,
                                  const std::vector<Sentence>& references, std::size_t n_resamples,
                                  std::uint64_t seed, std::size_t max_n) {
  check_aligned(system_a.size(), system_b.size(), references.size(), n_resamples);
  const std::size_t n = references.size();
  std::vector<BleuStats> sa(n), sb(n);
  BleuStats ta, tb;
  for (std::size_t i = 0; i < n; ++i) {
    sa[i] = sentence_stats(system_a[i], references[i], max_n);
    sb[i] = sentence_stats(system_b[i], references[i], max_n);
    ta += sa[i];
    tb += sb[i];
  }
  SignificanceResult res;
  res.resamples = n_resamples;
  res.delta = bleu_from_stats(tb, max_n) - bleu_from_stats(ta, max_n);
  std::mt19937_64 rng(seed);
  std::size_t not_better = 0;
  for (std::size_t k = 0; k < n_resamples; ++k) {
    BleuStats a, b;
    for (auto i : resample(rng, n)) {
      a += sa[i];
      b += sb[i];
    }
    if (!(bleu_from_stats(b, max_n) > bleu_from_stats(a, max_n))) ++not_better;
  }
  res.p_value = static_cast<double>(not_better) / static_cast<double>(n_resamples);
  return res;
}

}  // namespace docnmt::eval
