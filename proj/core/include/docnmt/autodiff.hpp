#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <optional>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "docnmt/param_set.hpp"
#include "docnmt/tensor.hpp"

namespace docnmt::ad {

enum class OpKind {
  kConstant,
  kParam,
  kMatmul,
  kTranspose,
  kAdd,
  kSub,
  kMul,
  kTanh,
  kSigmoid,
  kSoftmax,
  kMaskedSoftmax,
  kConcat,
  kStack,
  kSlice,
  kLookup,
  kSum,
  kScalarMul,
  kDropout,
  kPickNegLogSoftmax,
};

std::string_view op_name(OpKind kind);

class Tape;

// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t size() const { return value().size(); }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Gradient of a scalar loss with respect to every node on the tape.
// Nodes the loss does not depend on carry zero tensors.
class Gradients {
 public:
  explicit Gradients(std::vector<Tensor> grads) : grads_(std::move(grads)) {}
  const Tensor& operator[](Var v) const { return grads_.at(v.id()); }
  const Tensor& at(std::size_t node_id) const { return grads_.at(node_id); }
  std::size_t size() const { return grads_.size(); }

 private:
  std::vector<Tensor> grads_;
};

// Records operations in topological order (inputs always precede their
// consumers) and replays them in strict reverse order for the backward pass.
// Single-threaded; use one tape per thread.
class Tape {
 public:
  explicit Tape(const ParamSet* params = nullptr) : params_(params) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  // Leaf for a parameter of the bound ParamSet. Repeated calls return the same node.
  Var param(ParamId id);
  const ParamSet* params() const { return params_; }

  std::size_t size() const { return nodes_.size(); }
  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  OpKind kind(std::size_t id) const { return nodes_.at(id).kind; }
  const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_.at(id).inputs; }

  Gradients backward(Var loss) const;
  // Adds the gradients of all parameter leaves into grads.
  void accumulate(const Gradients& grads, ParamGrads& out) const;

 private:
  struct Node {
    OpKind kind = OpKind::kConstant;
    std::vector<std::size_t> inputs;
    Tensor value;
    std::size_t aux = 0;   // slice offset, lookup row, pick index, excluded cell + 1
    double scalar = 0.0;   // scalar-mul factor
    std::vector<double> cache;  // dropout mask or softmax of picked logits
    std::optional<ParamId> param;
  };

  Var push(Node node);
  void backprop_node(const Node& n, const std::vector<double>& gy,
                     std::vector<std::vector<double>>& grads) const;

  const ParamSet* params_;
  std::vector<Node> nodes_;
  std::vector<std::optional<std::size_t>> param_nodes_;

  friend Var matmul(Var, Var);
  friend Var transpose(Var);
  friend Var add(Var, Var);
  friend Var sub(Var, Var);
  friend Var mul(Var, Var);
  friend Var tanh(Var);
  friend Var sigmoid(Var);
  friend Var softmax(Var);
  friend Var masked_softmax(Var, std::optional<std::size_t>);
  friend Var concat(std::span<const Var>);
  friend Var stack(std::span<const Var>);
  friend Var slice(Var, std::size_t, std::size_t);
  friend Var lookup(Var, std::size_t);
  friend Var sum(Var);
  friend Var scalar_mul(Var, double);
  friend Var dropout(Var, double, std::mt19937_64&);
  friend Var pick_neg_log_softmax(Var, std::size_t);
};

// (m x k)(k x n) -> (m x n); (m x k)(k) -> (m).
Var matmul(Var a, Var b);
Var transpose(Var a);
// Elementwise; b may also be a vector broadcast over the rows of matrix a.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var tanh(Var a);
Var sigmoid(Var a);
// Along the last axis; max-subtracted.
Var softmax(Var a);
// Softmax of a vector with one entry forced to probability exactly zero.
// Rejects a length-1 input with that entry excluded.
Var masked_softmax(Var a, std::optional<std::size_t> excluded);
// Vectors only, joined end to end.
Var concat(std::span<const Var> parts);
inline Var concat(std::initializer_list<Var> parts) { return concat(std::span<const Var>(parts.begin(), parts.size())); }
// Equal-length vectors become the rows of a matrix.
Var stack(std::span<const Var> rows);
Var slice(Var a, std::size_t offset, std::size_t length);
Var lookup(Var table, std::size_t row);
Var sum(Var a);
Var scalar_mul(Var a, double k);
// Inverted dropout: keeps each entry with probability 1-rate, scaled by 1/(1-rate).
Var dropout(Var a, double rate, std::mt19937_64& rng);
// -log softmax(logits)[index], the per-token cross-entropy.
Var pick_neg_log_softmax(Var logits, std::size_t index);

inline Var dot(Var a, Var b) { return sum(mul(a, b)); }

// Max relative error |analytic - numeric| / max(1, |analytic|, |numeric|)
// between backprop and central differences, over every coordinate of the
// given parameters (all of them when `which` is empty). `max_coords_per_param`
// > 0 restricts each tensor to that many evenly spaced coordinates.
struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t coords_checked = 0;
  std::string worst_param;
};
using LossFn = std::function<Var(Tape&)>;
GradCheckResult grad_check(const LossFn& f, ParamSet& params, std::span<const ParamId> which, double eps,
                           std::size_t max_coords_per_param = 0);

}  // namespace docnmt::ad
