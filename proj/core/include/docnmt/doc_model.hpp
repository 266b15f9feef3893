#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "docnmt/document.hpp"
#include "docnmt/memory.hpp"
#include "docnmt/snmt.hpp"

namespace docnmt {

enum class MemorySelection { kNone, kSrc, kTrg, kBoth };

struct DocModelConfig {
  Integration integration = Integration::kMemToContext;
  MemorySelection memories = MemorySelection::kBoth;
  bool prev_trg = false;  // condition every decoder state on the previous sentence's final state

  bool uses_src() const { return memories == MemorySelection::kSrc || memories == MemorySelection::kBoth; }
  bool uses_trg() const { return memories == MemorySelection::kTrg || memories == MemorySelection::kBoth; }
  bool sentence_level() const { return memories == MemorySelection::kNone && !prev_trg; }
  // Rejects prev_trg combined with a target memory.
  void validate() const;
};

std::string to_string(MemorySelection m);
std::string to_string(Integration i);
MemorySelection parse_memory_selection(const std::string& s);
Integration parse_integration(const std::string& s);

// The complete parameter set: translation model, source-memory builders
// (sentence LM and document RNN) and the target-memory query projection.
struct Model {
  ModelDims dims;
  ParamSet params;
  NmtParams nmt;
  SentenceLm lm;
  DocRnn doc_rnn;
  ParamId trg_query;                     // W_at: source sentence rep -> decoder state space
  std::optional<AffineParams> src_query; // present when 2*hidden != source cell dim

  static Model create(const ModelDims& dims, std::uint64_t seed);
};

inline const std::string kLmPrefix = "lm.";

// Memories of one document, built once and shared by its sentences.
struct DocumentMemories {
  std::optional<Memory> src;
  std::optional<Memory> trg;
  const std::vector<Tensor>* trg_states = nullptr;  // s_t per sentence, for the query and PrevTrg
};

// Source memory from precomputed (frozen) sentence representations, or from
// the sentence LM on the tape when `reps` is empty.
Memory source_memory(Tape& tape, const Model& m, const std::vector<TokenIds>& src, const std::vector<Tensor>& reps,
                     const RunMode& mode = {});

DocumentMemories build_memories(Tape& tape, const Model& m, const DocModelConfig& cfg,
                                const std::vector<TokenIds>& src, const std::vector<Tensor>* trg_states,
                                const std::vector<Tensor>& lm_reps = {}, const RunMode& mode = {});

// c_src and c_trg for sentence t, computed once per sentence.
DecoderContext sentence_context(Tape& tape, const Model& m, const DocModelConfig& cfg, const Annotations& ann,
                                std::size_t t, const DocumentMemories& mems);

using Searcher = std::function<Hypothesis(Tape&, const NmtParams&, const Annotations&, const DecoderContext&)>;
Searcher beam_searcher(const SearchConfig& cfg);

struct ContextTranslation {
  Hypothesis hyp;
  DecoderContext context;
};

ContextTranslation translate_in_context(Tape& tape, const Model& m, const DocModelConfig& cfg, const TokenIds& x,
                                        std::size_t t, const DocumentMemories& mems, const Searcher& search);

// Sum over sentences of the conditional NLL of the gold target given contexts
// read from memories with the sentence's own cell excluded. `trg_states` holds
// the final decoder states of the translations that form the target memory.
struct DocNllResult {
  Var loss;
  std::size_t tokens = 0;
  std::vector<DecoderTrace> traces;
};
DocNllResult doc_nll(Tape& tape, const Model& m, const DocModelConfig& cfg, const Document& doc,
                     const std::vector<Tensor>* trg_states, const std::vector<Tensor>& lm_reps = {},
                     const RunMode& mode = {});

// Sentence LM representations of every source sentence, as constants.
std::vector<Tensor> lm_representations(const Model& m, const std::vector<TokenIds>& src);

}  // namespace docnmt
