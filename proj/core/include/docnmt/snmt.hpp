#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "docnmt/autodiff.hpp"
#include "docnmt/layers.hpp"

namespace docnmt {

// Reserved token ids shared by source and target vocabularies.
inline constexpr std::size_t kUnkId = 0;
inline constexpr std::size_t kStartId = 1;
inline constexpr std::size_t kEndId = 2;

struct ModelDims {
  std::size_t src_vocab = 0;
  std::size_t trg_vocab = 0;
  std::size_t embed = 32;
  std::size_t hidden = 32;
  std::size_t align = 16;
  std::size_t lm_hidden = 32;   // sentence-level LSTM of the source memory
  std::size_t doc_hidden = 32;  // document-level GRU of the source memory
  std::size_t decoder_layers = 1;

  std::size_t annotation_dim() const { return 2 * hidden; }
  std::size_t src_cell_dim() const { return 2 * doc_hidden; }
  std::size_t trg_cell_dim() const { return hidden; }
};

struct DropoutPlan {
  double encoder = 0.0;
  double decoder = 0.0;
  double doc_rnn = 0.0;
};

// Training runs pass a plan and generator; evaluation leaves both null.
struct RunMode {
  const DropoutPlan* dropout = nullptr;
  std::mt19937_64* rng = nullptr;
  bool training() const { return dropout != nullptr && rng != nullptr; }
};

Var maybe_dropout(Var x, double rate, const RunMode& mode);

// Parameters of the attentional encoder-decoder, including the matrices that
// inject document memory contexts into the decoder. The memory matrices start
// at zero so a freshly created model is exactly the sentence-level model.
struct NmtParams {
  ModelDims dims;
  EmbeddingTable src_embed;  // E_S
  EmbeddingTable trg_embed;  // E_T
  RnnCell enc_fwd;
  RnnCell enc_bwd;
  AffineParams init;  // s_0 = tanh(W backward_final + b)
  ParamId att_ann;    // W_ae
  ParamId att_state;  // W_at (attention)
  ParamId att_v;      // v
  ParamId w_s, w_sj, w_sc;
  std::optional<GruParams> layer2;
  ParamId w_rc, w_rj;
  ParamId w_y, b_r;
  ParamId w_sm, w_st;  // Memory-to-Context
  ParamId w_ym, w_yt;  // Memory-to-Output
  ParamId w_prev;      // previous-sentence state (PrevTrg)

  static NmtParams create(ParamSet& ps, const ModelDims& dims, std::mt19937_64& rng);
};

struct Annotations {
  std::vector<Var> rows;  // h_i = [fwd_i ; bwd_i]
  Var matrix;             // n x 2H
  Var matrix_t;           // 2H x n
  Var projected;          // n x A, W_ae h_i for every i
  Var sentence_rep;       // [fwd_n ; bwd_1]
  Var backward_final;     // bwd_1

  std::size_t length() const { return rows.size(); }
};

enum class Integration { kMemToContext, kMemToOutput };

// Per-sentence document contexts. All absent = plain sentence-level model.
struct DecoderContext {
  Integration integration = Integration::kMemToContext;
  std::optional<Var> src;   // c_src, 2*doc_hidden
  std::optional<Var> trg;   // c_trg, hidden
  std::optional<Var> prev;  // previous sentence's final decoder state, hidden

  bool empty() const { return !src && !trg && !prev; }
};

struct DecoderState {
  Var s;   // layer-1 state, feeds attention
  Var s2;  // layer-2 state when the decoder is stacked

  Var top() const { return s2.valid() ? s2 : s; }
};

struct StepResult {
  DecoderState state;
  Var logits;
  Var alpha;
  Var context;
  Var readout;
};

// Everything recorded while producing one translation.
struct DecoderTrace {
  std::vector<Tensor> states;
  std::vector<Tensor> alphas;
  std::vector<Tensor> contexts;
  std::vector<Tensor> readouts;
  std::vector<std::size_t> tokens;  // emitted tokens, end token included when produced
  std::vector<double> log_probs;
  Tensor final_state;

  double score() const;
};

Annotations encode(Tape& tape, const NmtParams& p, const std::vector<std::size_t>& x, const RunMode& mode = {});

struct Attention {
  Var alpha;
  Var context;
};
Attention attend(Tape& tape, const NmtParams& p, Var s_prev, const Annotations& ann);

DecoderState initial_state(Tape& tape, const NmtParams& p, const Annotations& ann);

StepResult decode_step(Tape& tape, const NmtParams& p, const DecoderState& prev, std::size_t y_prev,
                       const Annotations& ann, const DecoderContext& ctx, const RunMode& mode = {});

struct NllResult {
  Var loss;
  DecoderTrace trace;  // teacher-forced
};

// Teacher-forced negative log-likelihood of y (which must end with the end token).
NllResult nll(Tape& tape, const NmtParams& p, const Annotations& ann, const std::vector<std::size_t>& y,
              const DecoderContext& ctx, const RunMode& mode = {});

struct SearchConfig {
  std::size_t beam_size = 5;
  std::size_t max_len = 0;  // 0: 2 * source length + 10
  bool allow_unk = false;

  std::size_t length_limit(std::size_t src_len) const { return max_len ? max_len : 2 * src_len + 10; }
};

struct Hypothesis {
  std::vector<std::size_t> tokens;
  double score = 0.0;
  DecoderTrace trace;
};

// Greedy argmax loop.
Hypothesis greedy_decode(Tape& tape, const NmtParams& p, const Annotations& ann, const DecoderContext& ctx,
                         const SearchConfig& cfg);
// Beam search scored by the unnormalised sum of token log-probs. A hypothesis
// is complete when it emits the end token or reaches the length limit.
Hypothesis beam_decode(Tape& tape, const NmtParams& p, const Annotations& ann, const DecoderContext& ctx,
                       const SearchConfig& cfg);

// Teacher-forced log P(y | x, ctx) without a loss graph.
double sequence_log_prob(Tape& tape, const NmtParams& p, const Annotations& ann, const std::vector<std::size_t>& y,
                         const DecoderContext& ctx);

std::vector<double> log_softmax(const Tensor& logits);

// Tokens the decoder may emit under cfg.
bool emittable(std::size_t token, const SearchConfig& cfg);

}  // namespace docnmt
