#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "docnmt/autodiff.hpp"
#include "docnmt/param_set.hpp"

namespace docnmt {

using ad::Tape;
using ad::Var;

// Gates z (update), r (reset), n (candidate):
//   z = sigmoid(W_z x + U_z h + b_z)
//   r = sigmoid(W_r x + U_r h + b_r)
//   n = tanh(W_n x + U_n (r * h) + b_n)
//   h' = (1 - z) * h + z * n
struct GruParams {
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;
  ParamId w_z, u_z, b_z;
  ParamId w_r, u_r, b_r;
  ParamId w_n, u_n, b_n;

  static GruParams create(ParamSet& ps, const std::string& prefix, std::size_t input_dim, std::size_t hidden_dim,
                          std::mt19937_64& rng);
};

// Standard LSTM with input, forget and output gates and a tanh candidate g:
//   c' = f * c + i * g,  h' = o * tanh(c')
struct LstmParams {
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;
  ParamId w_i, u_i, b_i;
  ParamId w_f, u_f, b_f;
  ParamId w_o, u_o, b_o;
  ParamId w_g, u_g, b_g;

  static LstmParams create(ParamSet& ps, const std::string& prefix, std::size_t input_dim, std::size_t hidden_dim,
                           std::mt19937_64& rng);
};

struct AffineParams {
  std::size_t input_dim = 0;
  std::size_t output_dim = 0;
  ParamId w, b;

  static AffineParams create(ParamSet& ps, const std::string& prefix, std::size_t input_dim, std::size_t output_dim,
                             std::mt19937_64& rng);
  static AffineParams create_zero(ParamSet& ps, const std::string& prefix, std::size_t input_dim,
                                  std::size_t output_dim);
};

struct EmbeddingTable {
  std::size_t vocab_size = 0;
  std::size_t dim = 0;
  ParamId table;

  static EmbeddingTable create(ParamSet& ps, const std::string& name, std::size_t vocab_size, std::size_t dim,
                               std::mt19937_64& rng);
  Var lookup(Tape& tape, std::size_t token) const;
};

struct LstmState {
  Var h;
  Var c;
};

enum class CellKind { kGru, kLstm };

Var gru_step(Tape& tape, Var x, Var h_prev, const GruParams& p);
LstmState lstm_step(Tape& tape, Var x, const LstmState& prev, const LstmParams& p);
Var affine(Tape& tape, Var x, const AffineParams& p);

Var zero_vector(Tape& tape, std::size_t dim);

// A recurrent cell of either kind; birnn is written against this.
struct RnnCell {
  CellKind kind = CellKind::kGru;
  GruParams gru;
  LstmParams lstm;

  std::size_t hidden_dim() const { return kind == CellKind::kGru ? gru.hidden_dim : lstm.hidden_dim; }
};

// Runs `cell` over seq left to right from a zero state and returns the
// visible state after each position.
std::vector<Var> unroll(Tape& tape, const std::vector<Var>& seq, const RnnCell& cell, bool reverse = false);

struct BirnnOutput {
  std::vector<Var> states;  // h_i = [fwd_i ; bwd_i]
  Var forward_final;        // forward state after the last position
  Var backward_final;       // backward state after the first position
};

// Bidirectional RNN. Rejects an empty sequence.
BirnnOutput birnn(Tape& tape, const std::vector<Var>& seq, const RnnCell& fwd, const RnnCell& bwd);

}  // namespace docnmt
