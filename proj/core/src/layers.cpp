#include "docnmt/layers.hpp"

#include "docnmt/errors.hpp"

namespace docnmt {

namespace {

void check_dim(Var v, std::size_t dim, const char* what) {
  if (!v.value().is_vector() || v.size() != dim) {
    throw ShapeError(std::string(what) + ": expected vector of " + std::to_string(dim) + ", got " +
                     shape_str(v.shape()));
  }
}

// W x + U h + b
Var gate_input(Tape& tape, Var x, Var h, ParamId w, ParamId u, ParamId b) {
  return add(add(matmul(tape.param(w), x), matmul(tape.param(u), h)), tape.param(b));
}

}  // namespace

GruParams GruParams::create(ParamSet& ps, const std::string& prefix, std::size_t input_dim, std::size_t hidden_dim,
                            std::mt19937_64& rng) {
  GruParams p;
  p.input_dim = input_dim;
  p.hidden_dim = hidden_dim;
  p.w_z = ps.add_uniform(prefix + ".W_z", {hidden_dim, input_dim}, rng);
  p.u_z = ps.add_uniform(prefix + ".U_z", {hidden_dim, hidden_dim}, rng);
  p.b_z = ps.add_uniform(prefix + ".b_z", {hidden_dim}, rng);
  p.w_r = ps.add_uniform(prefix + ".W_r", {hidden_dim, input_dim}, rng);
  p.u_r = ps.add_uniform(prefix + ".U_r", {hidden_dim, hidden_dim}, rng);
  p.b_r = ps.add_uniform(prefix + ".b_r", {hidden_dim}, rng);
  p.w_n = ps.add_uniform(prefix + ".W_n", {hidden_dim, input_dim}, rng);
  p.u_n = ps.add_uniform(prefix + ".U_n", {hidden_dim, hidden_dim}, rng);
  p.b_n = ps.add_uniform(prefix + ".b_n", {hidden_dim}, rng);
  return p;
}

LstmParams LstmParams::create(ParamSet& ps, const std::string& prefix, std::size_t input_dim,
                              std::size_t hidden_dim, std::mt19937_64& rng) {
  LstmParams p;
  p.input_dim = input_dim;
  p.hidden_dim = hidden_dim;
  p.w_i = ps.add_uniform(prefix + ".W_i", {hidden_dim, input_dim}, rng);
  p.u_i = ps.add_uniform(prefix + ".U_i", {hidden_dim, hidden_dim}, rng);
  p.b_i = ps.add_uniform(prefix + ".b_i", {hidden_dim}, rng);
  p.w_f = ps.add_uniform(prefix + ".W_f", {hidden_dim, input_dim}, rng);
  p.u_f = ps.add_uniform(prefix + ".U_f", {hidden_dim, hidden_dim}, rng);
  p.b_f = ps.add_uniform(prefix + ".b_f", {hidden_dim}, rng);
  p.w_o = ps.add_uniform(prefix + ".W_o", {hidden_dim, input_dim}, rng);
  p.u_o = ps.add_uniform(prefix + ".U_o", {hidden_dim, hidden_dim}, rng);
  p.b_o = ps.add_uniform(prefix + ".b_o", {hidden_dim}, rng);
  p.w_g = ps.add_uniform(prefix + ".W_g", {hidden_dim, input_dim}, rng);
  p.u_g = ps.add_uniform(prefix + ".U_g", {hidden_dim, hidden_dim}, rng);
  p.b_g = ps.add_uniform(prefix + ".b_g", {hidden_dim}, rng);
  return p;
}

AffineParams AffineParams::create(ParamSet& ps, const std::string& prefix, std::size_t input_dim,
                                  std::size_t output_dim, std::mt19937_64& rng) {
  AffineParams p;
  p.input_dim = input_dim;
  p.output_dim = output_dim;
  p.w = ps.add_uniform(prefix + ".W", {output_dim, input_dim}, rng);
  p.b = ps.add_uniform(prefix + ".b", {output_dim}, rng);
  return p;
}

AffineParams AffineParams::create_zero(ParamSet& ps, const std::string& prefix, std::size_t input_dim,
                                       std::size_t output_dim) {
  AffineParams p;
  p.input_dim = input_dim;
  p.output_dim = output_dim;
  p.w = ps.add_zeros(prefix + ".W", {output_dim, input_dim});
  p.b = ps.add_zeros(prefix + ".b", {output_dim});
  return p;
}

EmbeddingTable EmbeddingTable::create(ParamSet& ps, const std::string& name, std::size_t vocab_size,
                                      std::size_t dim, std::mt19937_64& rng) {
  EmbeddingTable e;
  e.vocab_size = vocab_size;
  e.dim = dim;
  e.table = ps.add_uniform(name, {vocab_size, dim}, rng);
  return e;
}

Var EmbeddingTable::lookup(Tape& tape, std::size_t token) const {
  if (token >= vocab_size) {
    throw DataError("token id " + std::to_string(token) + " outside vocabulary of size " + std::to_string(vocab_size));
  }
  return ad::lookup(tape.param(table), token);
}

Var zero_vector(Tape& tape, std::size_t dim) { return tape.constant(Tensor::zeros({dim})); }

Var gru_step(Tape& tape, Var x, Var h_prev, const GruParams& p) {
  check_dim(x, p.input_dim, "gru_step input");
  check_dim(h_prev, p.hidden_dim, "gru_step state");
  Var z = sigmoid(gate_input(tape, x, h_prev, p.w_z, p.u_z, p.b_z));
  Var r = sigmoid(gate_input(tape, x, h_prev, p.w_r, p.u_r, p.b_r));
  Var n = tanh(add(add(matmul(tape.param(p.w_n), x), matmul(tape.param(p.u_n), mul(r, h_prev))), tape.param(p.b_n)));
  // (1 - z) * h + z * n  ==  h + z * (n - h)
  return add(h_prev, mul(z, sub(n, h_prev)));
}

LstmState lstm_step(Tape& tape, Var x, const LstmState& prev, const LstmParams& p) {
  check_dim(x, p.input_dim, "lstm_step input");
  check_dim(prev.h, p.hidden_dim, "lstm_step state");
  check_dim(prev.c, p.hidden_dim, "lstm_step cell");
  Var i = sigmoid(gate_input(tape, x, prev.h, p.w_i, p.u_i, p.b_i));
  Var f = sigmoid(gate_input(tape, x, prev.h, p.w_f, p.u_f, p.b_f));
  Var o = sigmoid(gate_input(tape, x, prev.h, p.w_o, p.u_o, p.b_o));
  Var g = tanh(gate_input(tape, x, prev.h, p.w_g, p.u_g, p.b_g));
  Var c = add(mul(f, prev.c), mul(i, g));
  return {mul(o, tanh(c)), c};
}

Var affine(Tape& tape, Var x, const AffineParams& p) {
  check_dim(x, p.input_dim, "affine input");
  return add(matmul(tape.param(p.w), x), tape.param(p.b));
}

std::vector<Var> unroll(Tape& tape, const std::vector<Var>& seq, const RnnCell& cell, bool reverse) {
  const std::size_t n = seq.size();
  std::vector<Var> out(n);
  const std::size_t hd = cell.hidden_dim();
  if (cell.kind == CellKind::kGru) {
    Var h = zero_vector(tape, hd);
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t i = reverse ? n - 1 - k : k;
      h = gru_step(tape, seq[i], h, cell.gru);
      out[i] = h;
    }
  } else {
    LstmState s{zero_vector(tape, hd), zero_vector(tape, hd)};
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t i = reverse ? n - 1 - k : k;
      s = lstm_step(tape, seq[i], s, cell.lstm);
      out[i] = s.h;
    }
  }
  return out;
}

BirnnOutput birnn(Tape& tape, const std::vector<Var>& seq, const RnnCell& fwd, const RnnCell& bwd) {
  if (seq.empty()) throw ShapeError("birnn: empty input sequence");
  auto f = unroll(tape, seq, fwd, false);
  auto b = unroll(tape, seq, bwd, true);
  BirnnOutput out;
  out.states.reserve(seq.size());
  for (std::size_t i = 0; i < seq.size(); ++i) out.states.push_back(ad::concat({f[i], b[i]}));
  out.forward_final = f.back();
  out.backward_final = b.front();
  return out;
}

}  // namespace docnmt
