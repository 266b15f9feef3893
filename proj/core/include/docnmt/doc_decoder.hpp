#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "docnmt/doc_model.hpp"

namespace docnmt {

// One coordinate update: sentence `sentence` re-translated in pass `pass`.
// Both scores are log P(y | x_t, other translations) under the same context.
struct AuditRecord {
  std::string doc_id;
  std::size_t pass = 0;
  std::size_t sentence = 0;
  bool changed = false;
  double old_score = 0.0;
  double new_score = 0.0;
};
std::string format_audit(const AuditRecord& r);

struct BcdResult {
  std::vector<Hypothesis> translations;  // tokens end with the end token when it was produced
  std::vector<AuditRecord> audit;
};

// Pass 0 translates every sentence with `base` and no document context. Each
// later pass visits the sentences in order and re-translates sentence t with
// `model`, reading a target memory built from the current translations;
// the translation is replaced when the search returns different tokens.
BcdResult bcd_decode(const Model& base, const Model& model, const DocModelConfig& cfg,
                     const std::vector<TokenIds>& src, std::size_t passes, const Searcher& search,
                     const std::string& doc_id = {});

}  // namespace docnmt
