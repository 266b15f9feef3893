#include "docnmt/doc_model.hpp"

#include "docnmt/errors.hpp"

namespace docnmt {

TokenIds with_end(const TokenIds& y) {
  TokenIds out = y;
  if (out.empty() || out.back() != kEndId) out.push_back(kEndId);
  return out;
}

TokenIds strip_end(const TokenIds& y) {
  TokenIds out = y;
  if (!out.empty() && out.back() == kEndId) out.pop_back();
  return out;
}

void DocModelConfig::validate() const {
  if (prev_trg && uses_trg()) throw UsageError("prev-trg cannot be combined with a target memory");
}

std::string to_string(MemorySelection m) {
  switch (m) {
    case MemorySelection::kNone: return "none";
    case MemorySelection::kSrc: return "src";
    case MemorySelection::kTrg: return "trg";
    case MemorySelection::kBoth: return "both";
  }
  return "none";
}

std::string to_string(Integration i) {
  return i == Integration::kMemToContext ? "mem-to-context" : "mem-to-output";
}

MemorySelection parse_memory_selection(const std::string& s) {
  if (s == "none") return MemorySelection::kNone;
  if (s == "src") return MemorySelection::kSrc;
  if (s == "trg") return MemorySelection::kTrg;
  if (s == "both") return MemorySelection::kBoth;
  throw UsageError("unknown memory selection '" + s + "' (expected src, trg, both or none)");
}

Integration parse_integration(const std::string& s) {
  if (s == "mem-to-context") return Integration::kMemToContext;
  if (s == "mem-to-output") return Integration::kMemToOutput;
  throw UsageError("unknown variant '" + s + "' (expected mem-to-context or mem-to-output)");
}

Model Model::create(const ModelDims& dims, std::uint64_t seed) {
  Model m;
  m.dims = dims;
  std::mt19937_64 rng(seed);
  m.nmt = NmtParams::create(m.params, dims, rng);
  m.lm = SentenceLm::create(m.params, "lm", dims.src_vocab, dims.embed, dims.lm_hidden, rng);
  m.doc_rnn = DocRnn::create(m.params, "docrnn", m.lm.rep_dim(), dims.doc_hidden, rng);
  m.trg_query = m.params.add_uniform("mem.trg_query.W_at", {dims.hidden, dims.annotation_dim()}, rng);
  if (dims.annotation_dim() != dims.src_cell_dim()) {
    m.src_query = AffineParams::create(m.params, "mem.src_query", dims.annotation_dim(), dims.src_cell_dim(), rng);
  }
  return m;
}

Memory source_memory(Tape& tape, const Model& m, const std::vector<TokenIds>& src, const std::vector<Tensor>& reps,
                     const RunMode& mode) {
  if (reps.empty()) return build_source_memory(tape, m.lm, m.doc_rnn, src, mode);
  if (reps.size() != src.size()) throw DataError("sentence representation count does not match the document");
  std::vector<Var> vars;
  vars.reserve(reps.size());
  for (const auto& r : reps) vars.push_back(tape.constant(r));
  return build_source_memory(tape, m.doc_rnn, vars, mode);
}

DocumentMemories build_memories(Tape& tape, const Model& m, const DocModelConfig& cfg,
                                const std::vector<TokenIds>& src, const std::vector<Tensor>* trg_states,
                                const std::vector<Tensor>& lm_reps, const RunMode& mode) {
  cfg.validate();
  DocumentMemories mems;
  if (cfg.uses_src()) mems.src = source_memory(tape, m, src, lm_reps, mode);
  if (cfg.uses_trg() || cfg.prev_trg) {
    if (!trg_states) throw UsageError("target-side context requested but no current translations were given");
    if (trg_states->size() != src.size()) throw DataError("one translation per document sentence is required");
    mems.trg_states = trg_states;
    if (cfg.uses_trg()) mems.trg = build_target_memory(tape, *trg_states);
  }
  return mems;
}

DecoderContext sentence_context(Tape& tape, const Model& m, const DocModelConfig& cfg, const Annotations& ann,
                                std::size_t t, const DocumentMemories& mems) {
  DecoderContext ctx;
  ctx.integration = cfg.integration;
  if (cfg.uses_src()) {
    if (!mems.src) throw UsageError("configuration selects the source memory but none was built");
    ctx.src = query_source(tape, *mems.src, ann.sentence_rep, t, m.src_query);
  }
  if (cfg.uses_trg()) {
    if (!mems.trg || !mems.trg_states) throw UsageError("configuration selects the target memory but none was built");
    Var s_t = tape.constant(mems.trg_states->at(t));
    ctx.trg = query_target(tape, *mems.trg, s_t, ann.sentence_rep, m.trg_query, t);
  }
  if (cfg.prev_trg) {
    if (!mems.trg_states) throw UsageError("prev-trg needs the current translations");
    ctx.prev = t == 0 ? zero_vector(tape, m.dims.hidden) : tape.constant(mems.trg_states->at(t - 1));
  }
  return ctx;
}

Searcher beam_searcher(const SearchConfig& cfg) {
  return [cfg](Tape& tape, const NmtParams& p, const Annotations& ann, const DecoderContext& ctx) {
    return beam_decode(tape, p, ann, ctx, cfg);
  };
}

ContextTranslation translate_in_context(Tape& tape, const Model& m, const DocModelConfig& cfg, const TokenIds& x,
                                        std::size_t t, const DocumentMemories& mems, const Searcher& search) {
  Annotations ann = encode(tape, m.nmt, x);
  ContextTranslation out;
  out.context = sentence_context(tape, m, cfg, ann, t, mems);
  out.hyp = search(tape, m.nmt, ann, out.context);
  return out;
}

DocNllResult doc_nll(Tape& tape, const Model& m, const DocModelConfig& cfg, const Document& doc,
                     const std::vector<Tensor>* trg_states, const std::vector<Tensor>& lm_reps,
                     const RunMode& mode) {
  if (doc.size() == 0) throw DataError("document '" + doc.id + "' has no sentences");
  if (doc.trg.size() != doc.src.size()) throw DataError("document '" + doc.id + "' is not sentence aligned");
  DocumentMemories mems = build_memories(tape, m, cfg, doc.src, trg_states, lm_reps, mode);
  DocNllResult res;
  std::vector<Var> losses;
  for (std::size_t t = 0; t < doc.size(); ++t) {
    Annotations ann = encode(tape, m.nmt, doc.src[t], mode);
    DecoderContext ctx = sentence_context(tape, m, cfg, ann, t, mems);
    const TokenIds y = with_end(doc.trg[t]);
    NllResult r = nll(tape, m.nmt, ann, y, ctx, mode);
    losses.push_back(r.loss);
    res.tokens += y.size();
    res.traces.push_back(std::move(r.trace));
  }
  res.loss = ad::sum(ad::concat(losses));
  return res;
}

std::vector<Tensor> lm_representations(const Model& m, const std::vector<TokenIds>& src) {
  std::vector<Tensor> out;
  out.reserve(src.size());
  for (const auto& s : src) {
    Tape tape(&m.params);
    out.push_back(m.lm.sentence_rep(tape, s).value());
  }
  return out;
}

}  // namespace docnmt
