#pragma once

#include <cstddef>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "docnmt/autodiff.hpp"
#include "docnmt/layers.hpp"
#include "docnmt/snmt.hpp"

namespace docnmt {

enum class MemoryOrigin { kSource, kTarget };

// K cells, one per document sentence, stored as the rows of a K x d matrix.
struct Memory {
  Var cells;
  MemoryOrigin origin = MemoryOrigin::kSource;

  std::size_t size() const { return cells.shape()[0]; }
  std::size_t cell_dim() const { return cells.shape()[1]; }
};

struct MemRead {
  Var p;    // relevance of each cell
  Var out;  // sum_i p_i m_i
};

// p = softmax(M q) with p[excluded] forced to exactly zero; out = M^T p.
// Rejects a read where every cell is excluded.
MemRead mem_read(const Memory& mem, Var query, std::optional<std::size_t> excluded = std::nullopt);

// Bidirectional LSTM language model over source sentences. The final forward
// and backward states give the sentence representation used by the source
// memory. Both output heads start at zero, i.e. as a uniform model.
struct SentenceLm {
  EmbeddingTable embed;
  RnnCell fwd;
  RnnCell bwd;
  AffineParams fwd_out;  // predicts the next token
  AffineParams bwd_out;  // predicts the previous token
  std::string prefix;

  static SentenceLm create(ParamSet& ps, const std::string& prefix, std::size_t vocab, std::size_t embed_dim,
                           std::size_t hidden, std::mt19937_64& rng);

  std::size_t rep_dim() const { return 2 * fwd.hidden_dim(); }
  // [fwd_n ; bwd_1]. Out-of-vocabulary ids are read as unk.
  Var sentence_rep(Tape& tape, const std::vector<std::size_t>& x) const;

  struct LmLoss {
    Var loss;
    std::size_t predictions = 0;
  };
  // Sum of next-token (forward) and previous-token (backward) cross-entropies.
  LmLoss loss(Tape& tape, const std::vector<std::size_t>& x) const;
};

// Document-level bidirectional GRU over sentence representations.
struct DocRnn {
  RnnCell fwd;
  RnnCell bwd;

  static DocRnn create(ParamSet& ps, const std::string& prefix, std::size_t input_dim, std::size_t hidden,
                       std::mt19937_64& rng);
  std::size_t cell_dim() const { return 2 * fwd.hidden_dim(); }
};

Memory build_source_memory(Tape& tape, const DocRnn& rnn, const std::vector<Var>& sentence_reps,
                           const RunMode& mode = {});
Memory build_source_memory(Tape& tape, const SentenceLm& lm, const DocRnn& rnn,
                           const std::vector<std::vector<std::size_t>>& sentences, const RunMode& mode = {});

// c_src = MemNet(M[x_-t], proj(h_t)). A one-sentence document yields zeros.
Var query_source(Tape& tape, const Memory& mem, Var h_t, std::size_t t,
                 const std::optional<AffineParams>& projection = std::nullopt);

// Cell t is the final decoder state of sentence t's current translation.
// Rejects a missing trace.
Memory build_target_memory(Tape& tape, const std::vector<const DecoderTrace*>& traces);
Memory build_target_memory(Tape& tape, const std::vector<Tensor>& final_states);

// c_trg = MemNet(M[y_-t], s_t + W_at h_t). A one-sentence document yields zeros.
Var query_target(Tape& tape, const Memory& mem, Var s_t, Var h_t, ParamId w_at, std::size_t t);

}  // namespace docnmt
