#include "docnmt/memory.hpp"

#include "docnmt/errors.hpp"

namespace docnmt {

MemRead mem_read(const Memory& mem, Var query, std::optional<std::size_t> excluded) {
  if (query.size() != mem.cell_dim()) {
    throw ShapeError("mem_read: query of size " + std::to_string(query.size()) + " against cells of size " +
                     std::to_string(mem.cell_dim()));
  }
  if (excluded && mem.size() == 1) throw ShapeError("mem_read: every memory cell is excluded");
  Var scores = matmul(mem.cells, query);
  Var p = ad::masked_softmax(scores, excluded);
  Var out = matmul(ad::transpose(mem.cells), p);
  return {p, out};
}

SentenceLm SentenceLm::create(ParamSet& ps, const std::string& prefix, std::size_t vocab, std::size_t embed_dim,
                              std::size_t hidden, std::mt19937_64& rng) {
  SentenceLm lm;
  lm.prefix = prefix;
  lm.embed = EmbeddingTable::create(ps, prefix + ".E", vocab, embed_dim, rng);
  lm.fwd.kind = CellKind::kLstm;
  lm.fwd.lstm = LstmParams::create(ps, prefix + ".fwd", embed_dim, hidden, rng);
  lm.bwd.kind = CellKind::kLstm;
  lm.bwd.lstm = LstmParams::create(ps, prefix + ".bwd", embed_dim, hidden, rng);
  lm.fwd_out = AffineParams::create_zero(ps, prefix + ".fwd_out", hidden, vocab);
  lm.bwd_out = AffineParams::create_zero(ps, prefix + ".bwd_out", hidden, vocab);
  return lm;
}

namespace {

std::vector<Var> embed_all(Tape& tape, const EmbeddingTable& e, const std::vector<std::size_t>& x) {
  if (x.empty()) throw DataError("empty source sentence");
  std::vector<Var> out;
  out.reserve(x.size());
  for (auto tok : x) out.push_back(e.lookup(tape, tok < e.vocab_size ? tok : kUnkId));
  return out;
}

}  // namespace

Var SentenceLm::sentence_rep(Tape& tape, const std::vector<std::size_t>& x) const {
  auto emb = embed_all(tape, embed, x);
  auto bi = birnn(tape, emb, fwd, bwd);
  return ad::concat({bi.forward_final, bi.backward_final});
}

SentenceLm::LmLoss SentenceLm::loss(Tape& tape, const std::vector<std::size_t>& x) const {
  auto emb = embed_all(tape, embed, x);
  const std::size_t n = x.size();
  auto f = unroll(tape, emb, fwd, false);
  auto b = unroll(tape, emb, bwd, true);
  auto clamp = [&](std::size_t tok) { return tok < embed.vocab_size ? tok : kUnkId; };
  Var zero = zero_vector(tape, fwd.hidden_dim());
  std::vector<Var> terms;
  terms.reserve(2 * (n + 1));
  // Forward: state before position k predicts x_k; the last state predicts end.
  for (std::size_t k = 0; k <= n; ++k) {
    Var h = k == 0 ? zero : f[k - 1];
    const std::size_t target = k < n ? clamp(x[k]) : kEndId;
    terms.push_back(ad::pick_neg_log_softmax(affine(tape, h, fwd_out), target));
  }
  // Backward: state after position k+1 predicts x_k; the first state predicts start.
  for (std::size_t k = n + 1; k-- > 0;) {
    Var h = k == n ? zero : b[k];
    const std::size_t target = k > 0 ? clamp(x[k - 1]) : kStartId;
    terms.push_back(ad::pick_neg_log_softmax(affine(tape, h, bwd_out), target));
  }
  return {ad::sum(ad::concat(terms)), terms.size()};
}

DocRnn DocRnn::create(ParamSet& ps, const std::string& prefix, std::size_t input_dim, std::size_t hidden,
                      std::mt19937_64& rng) {
  DocRnn r;
  r.fwd.gru = GruParams::create(ps, prefix + ".fwd", input_dim, hidden, rng);
  r.bwd.gru = GruParams::create(ps, prefix + ".bwd", input_dim, hidden, rng);
  return r;
}

Memory build_source_memory(Tape& tape, const DocRnn& rnn, const std::vector<Var>& sentence_reps,
                           const RunMode& mode) {
  if (sentence_reps.empty()) throw DataError("source memory needs at least one sentence");
  std::vector<Var> inputs;
  inputs.reserve(sentence_reps.size());
  const double rate = mode.dropout ? mode.dropout->doc_rnn : 0.0;
  for (Var r : sentence_reps) inputs.push_back(maybe_dropout(r, rate, mode));
  auto bi = birnn(tape, inputs, rnn.fwd, rnn.bwd);
  return {ad::stack(bi.states), MemoryOrigin::kSource};
}

Memory build_source_memory(Tape& tape, const SentenceLm& lm, const DocRnn& rnn,
                           const std::vector<std::vector<std::size_t>>& sentences, const RunMode& mode) {
  std::vector<Var> reps;
  reps.reserve(sentences.size());
  for (const auto& s : sentences) reps.push_back(lm.sentence_rep(tape, s));
  return build_source_memory(tape, rnn, reps, mode);
}

Var query_source(Tape& tape, const Memory& mem, Var h_t, std::size_t t,
                 const std::optional<AffineParams>& projection) {
  if (t >= mem.size()) throw ShapeError("query_source: sentence index out of range");
  if (mem.size() == 1) return zero_vector(tape, mem.cell_dim());
  Var q = projection ? affine(tape, h_t, *projection) : h_t;
  return mem_read(mem, q, t).out;
}

Memory build_target_memory(Tape& tape, const std::vector<Tensor>& final_states) {
  if (final_states.empty()) throw DataError("target memory needs at least one translation");
  std::vector<Var> rows;
  rows.reserve(final_states.size());
  for (const auto& s : final_states) rows.push_back(tape.constant(s));
  return {ad::stack(rows), MemoryOrigin::kTarget};
}

Memory build_target_memory(Tape& tape, const std::vector<const DecoderTrace*>& traces) {
  std::vector<Tensor> states;
  states.reserve(traces.size());
  for (std::size_t i = 0; i < traces.size(); ++i) {
    if (!traces[i] || traces[i]->final_state.size() == 0) {
      throw DataError("target memory: missing translation trace for sentence " + std::to_string(i + 1));
    }
    states.push_back(traces[i]->final_state);
  }
  return build_target_memory(tape, states);
}

Var query_target(Tape& tape, const Memory& mem, Var s_t, Var h_t, ParamId w_at, std::size_t t) {
  if (t >= mem.size()) throw ShapeError("query_target: sentence index out of range");
  if (mem.size() == 1) return zero_vector(tape, mem.cell_dim());
  Var q = add(s_t, matmul(tape.param(w_at), h_t));
  return mem_read(mem, q, t).out;
}

}  // namespace docnmt
