#include "docnmt/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "docnmt/errors.hpp"

namespace docnmt::ad {

namespace {

Tape& same_tape(Var a, Var b, std::string_view op) {
  if (!a.valid() || a.tape() != b.tape()) {
    throw ShapeError(std::string(op) + ": operands live on different tapes");
  }
  return *a.tape();
}

[[noreturn]] void shape_mismatch(std::string_view op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

void check_finite(const Tensor& t, OpKind kind) {
  if (!t.all_finite()) throw NumericalError("non-finite output from op " + std::string(op_name(kind)));
}

// In-place softmax over contiguous span, max-subtracted.
void softmax_inplace(std::span<double> x) {
  const double m = *std::max_element(x.begin(), x.end());
  double z = 0.0;
  for (auto& v : x) {
    v = std::exp(v - m);
    z += v;
  }
  for (auto& v : x) v /= z;
}

}  // namespace

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kConstant: return "constant";
    case OpKind::kParam: return "param";
    case OpKind::kMatmul: return "matmul";
    case OpKind::kTranspose: return "transpose";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "elementwise-mul";
    case OpKind::kTanh: return "tanh";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kSoftmax: return "softmax";
    case OpKind::kMaskedSoftmax: return "masked-softmax";
    case OpKind::kConcat: return "concat";
    case OpKind::kStack: return "stack";
    case OpKind::kSlice: return "slice";
    case OpKind::kLookup: return "embedding-lookup";
    case OpKind::kSum: return "sum";
    case OpKind::kScalarMul: return "scalar-mul";
    case OpKind::kDropout: return "dropout-mask";
    case OpKind::kPickNegLogSoftmax: return "pick-neg-log-softmax";
  }
  return "unknown";
}

const Tensor& Var::value() const { return tape_->value(id_); }

Var Tape::push(Node node) {
  check_finite(node.value, node.kind);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  Node n;
  n.kind = OpKind::kConstant;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::param(ParamId id) {
  if (!params_) throw UsageError("tape has no bound parameter set");
  if (param_nodes_.size() < params_->size()) param_nodes_.resize(params_->size());
  auto& slot = param_nodes_.at(id.index);
  if (slot) return Var(this, *slot);
  Node n;
  n.kind = OpKind::kParam;
  n.value = params_->value(id);
  n.param = id;
  Var v = push(std::move(n));
  slot = v.id();
  return v;
}

Var matmul(Var a, Var b) {
  Tape& t = same_tape(a, b, "matmul");
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (!A.is_matrix()) shape_mismatch("matmul", A.shape(), B.shape());
  const std::size_t m = A.shape()[0], k = A.shape()[1];
  Tape::Node n;
  n.kind = OpKind::kMatmul;
  n.inputs = {a.id(), b.id()};
  if (B.is_vector()) {
    if (B.size() != k) shape_mismatch("matmul", A.shape(), B.shape());
    Tensor out({m});
    const double* pa = A.values().data();
    const double* pb = B.values().data();
    for (std::size_t i = 0; i < m; ++i) {
      double acc = 0.0;
      const double* row = pa + i * k;
      for (std::size_t j = 0; j < k; ++j) acc += row[j] * pb[j];
      out[i] = acc;
    }
    n.value = std::move(out);
  } else if (B.is_matrix() && B.shape()[0] == k) {
    const std::size_t cols = B.shape()[1];
    Tensor out({m, cols});
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t p = 0; p < k; ++p) {
        const double av = A.at(i, p);
        for (std::size_t j = 0; j < cols; ++j) out.at(i, j) += av * B.at(p, j);
      }
    }
    n.value = std::move(out);
  } else {
    shape_mismatch("matmul", A.shape(), B.shape());
  }
  return t.push(std::move(n));
}

Var transpose(Var a) {
  const Tensor& A = a.value();
  if (!A.is_matrix()) throw ShapeError("transpose: expected matrix, got " + shape_str(A.shape()));
  const std::size_t r = A.shape()[0], c = A.shape()[1];
  Tensor out({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out.at(j, i) = A.at(i, j);
  Tape::Node n;
  n.kind = OpKind::kTranspose;
  n.inputs = {a.id()};
  n.value = std::move(out);
  return a.tape()->push(std::move(n));
}

Var add(Var a, Var b) {
  Tape& t = same_tape(a, b, "add");
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  Tensor out = A;
  if (A.shape() == B.shape()) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += B[i];
  } else if (A.is_matrix() && B.is_vector() && B.size() == A.cols()) {
    const std::size_t c = A.cols();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += B[i % c];
  } else {
    shape_mismatch("add", A.shape(), B.shape());
  }
  Tape::Node n;
  n.kind = OpKind::kAdd;
  n.inputs = {a.id(), b.id()};
  n.value = std::move(out);
  return t.push(std::move(n));
}

Var sub(Var a, Var b) {
  Tape& t = same_tape(a, b, "sub");
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.shape() != B.shape()) shape_mismatch("sub", A.shape(), B.shape());
  Tensor out = A;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= B[i];
  Tape::Node n;
  n.kind = OpKind::kSub;
  n.inputs = {a.id(), b.id()};
  n.value = std::move(out);
  return t.push(std::move(n));
}

Var mul(Var a, Var b) {
  Tape& t = same_tape(a, b, "elementwise-mul");
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.shape() != B.shape()) shape_mismatch("elementwise-mul", A.shape(), B.shape());
  Tensor out = A;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= B[i];
  Tape::Node n;
  n.kind = OpKind::kMul;
  n.inputs = {a.id(), b.id()};
  n.value = std::move(out);
  return t.push(std::move(n));
}

Var tanh(Var a) {
  Tensor out = a.value();
  for (auto& v : out.values()) v = std::tanh(v);
  Tape::Node n;
  n.kind = OpKind::kTanh;
  n.inputs = {a.id()};
  n.value = std::move(out);
  return a.tape()->push(std::move(n));
}

Var sigmoid(Var a) {
  Tensor out = a.value();
  for (auto& v : out.values()) v = 1.0 / (1.0 + std::exp(-v));
  Tape::Node n;
  n.kind = OpKind::kSigmoid;
  n.inputs = {a.id()};
  n.value = std::move(out);
  return a.tape()->push(std::move(n));
}

Var softmax(Var a) {
  Tensor out = a.value();
  const std::size_t c = out.cols();
  for (std::size_t r = 0; r < out.size() / c; ++r) softmax_inplace(out.values().subspan(r * c, c));
  Tape::Node n;
  n.kind = OpKind::kSoftmax;
  n.inputs = {a.id()};
  n.value = std::move(out);
  return a.tape()->push(std::move(n));
}

Var masked_softmax(Var a, std::optional<std::size_t> excluded) {
  const Tensor& A = a.value();
  if (!A.is_vector()) throw ShapeError("masked-softmax: expected vector, got " + shape_str(A.shape()));
  if (excluded && *excluded >= A.size()) throw ShapeError("masked-softmax: excluded index out of range");
  if (excluded && A.size() == 1) throw ShapeError("masked-softmax: every entry is excluded");
  Tensor out({A.size()});
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < A.size(); ++i) {
    if (excluded && i == *excluded) continue;
    m = std::max(m, A[i]);
  }
  double z = 0.0;
  for (std::size_t i = 0; i < A.size(); ++i) {
    if (excluded && i == *excluded) continue;
    out[i] = std::exp(A[i] - m);
    z += out[i];
  }
  for (auto& v : out.values()) v /= z;
  Tape::Node n;
  n.kind = OpKind::kMaskedSoftmax;
  n.inputs = {a.id()};
  n.aux = excluded ? *excluded + 1 : 0;
  n.value = std::move(out);
  return a.tape()->push(std::move(n));
}

Var concat(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  Tape* t = parts.front().tape();
  std::vector<double> vals;
  Tape::Node n;
  n.kind = OpKind::kConcat;
  for (const Var& p : parts) {
    if (p.tape() != t) throw ShapeError("concat: operands live on different tapes");
    if (!p.value().is_vector()) throw ShapeError("concat: expected vectors, got " + shape_str(p.shape()));
    auto v = p.value().values();
    vals.insert(vals.end(), v.begin(), v.end());
    n.inputs.push_back(p.id());
  }
  n.value = Tensor::vector(std::move(vals));
  return t->push(std::move(n));
}

Var stack(std::span<const Var> rows) {
  if (rows.empty()) throw ShapeError("stack: no inputs");
  Tape* t = rows.front().tape();
  const std::size_t c = rows.front().size();
  std::vector<double> vals;
  vals.reserve(c * rows.size());
  Tape::Node n;
  n.kind = OpKind::kStack;
  for (const Var& r : rows) {
    if (r.tape() != t) throw ShapeError("stack: operands live on different tapes");
    if (!r.value().is_vector() || r.size() != c) shape_mismatch("stack", rows.front().shape(), r.shape());
    auto v = r.value().values();
    vals.insert(vals.end(), v.begin(), v.end());
    n.inputs.push_back(r.id());
  }
  n.value = Tensor::matrix(rows.size(), c, std::move(vals));
  return t->push(std::move(n));
}

Var slice(Var a, std::size_t offset, std::size_t length) {
  const Tensor& A = a.value();
  if (!A.is_vector() || length == 0 || offset + length > A.size()) {
    throw ShapeError("slice: range [" + std::to_string(offset) + ", " + std::to_string(offset + length) +
                     ") invalid for " + shape_str(A.shape()));
  }
  auto v = A.values().subspan(offset, length);
  Tape::Node n;
  n.kind = OpKind::kSlice;
  n.inputs = {a.id()};
  n.aux = offset;
  n.value = Tensor::vector({v.begin(), v.end()});
  return a.tape()->push(std::move(n));
}

Var lookup(Var table, std::size_t row) {
  const Tensor& E = table.value();
  if (!E.is_matrix()) throw ShapeError("embedding-lookup: table must be a matrix");
  if (row >= E.rows()) {
    throw ShapeError("embedding-lookup: row " + std::to_string(row) + " out of range for " + shape_str(E.shape()));
  }
  Tape::Node n;
  n.kind = OpKind::kLookup;
  n.inputs = {table.id()};
  n.aux = row;
  n.value = E.row(row);
  return table.tape()->push(std::move(n));
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  Tape::Node n;
  n.kind = OpKind::kSum;
  n.inputs = {a.id()};
  n.value = Tensor::scalar(s);
  return a.tape()->push(std::move(n));
}

Var scalar_mul(Var a, double k) {
  Tensor out = a.value();
  for (auto& v : out.values()) v *= k;
  Tape::Node n;
  n.kind = OpKind::kScalarMul;
  n.inputs = {a.id()};
  n.scalar = k;
  n.value = std::move(out);
  return a.tape()->push(std::move(n));
}

Var dropout(Var a, double rate, std::mt19937_64& rng) {
  if (rate < 0.0 || rate >= 1.0) throw ShapeError("dropout: rate must be in [0, 1)");
  if (rate == 0.0) return a;
  std::bernoulli_distribution keep(1.0 - rate);
  const double scale = 1.0 / (1.0 - rate);
  Tensor out = a.value();
  std::vector<double> mask(out.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    mask[i] = keep(rng) ? scale : 0.0;
    out[i] *= mask[i];
  }
  Tape::Node n;
  n.kind = OpKind::kDropout;
  n.inputs = {a.id()};
  n.cache = std::move(mask);
  n.value = std::move(out);
  return a.tape()->push(std::move(n));
}

Var pick_neg_log_softmax(Var logits, std::size_t index) {
  const Tensor& L = logits.value();
  if (!L.is_vector()) throw ShapeError("pick-neg-log-softmax: expected vector logits");
  if (index >= L.size()) throw ShapeError("pick-neg-log-softmax: index out of range");
  std::vector<double> p(L.values().begin(), L.values().end());
  const double m = *std::max_element(p.begin(), p.end());
  double z = 0.0;
  for (double v : p) z += std::exp(v - m);
  const double log_z = m + std::log(z);
  for (auto& v : p) v = std::exp(v - log_z);
  Tape::Node n;
  n.kind = OpKind::kPickNegLogSoftmax;
  n.inputs = {logits.id()};
  n.aux = index;
  n.cache = std::move(p);
  n.value = Tensor::scalar(log_z - L[index]);
  return logits.tape()->push(std::move(n));
}

void Tape::backprop_node(const Node& n, const std::vector<double>& gy,
                         std::vector<std::vector<double>>& grads) const {
  auto grad_of = [&](std::size_t id) -> std::vector<double>& {
    auto& g = grads[id];
    if (g.empty()) g.assign(nodes_[id].value.size(), 0.0);
    return g;
  };
  switch (n.kind) {
    case OpKind::kConstant:
    case OpKind::kParam:
      return;
    case OpKind::kMatmul: {
      const Tensor& A = nodes_[n.inputs[0]].value;
      const Tensor& B = nodes_[n.inputs[1]].value;
      const std::size_t m = A.shape()[0], k = A.shape()[1];
      auto& ga = grad_of(n.inputs[0]);
      auto& gb = grad_of(n.inputs[1]);
      if (B.is_vector()) {
        for (std::size_t i = 0; i < m; ++i) {
          const double g = gy[i];
          if (g == 0.0) continue;
          double* ra = ga.data() + i * k;
          const double* rowa = A.values().data() + i * k;
          for (std::size_t j = 0; j < k; ++j) {
            ra[j] += g * B[j];
            gb[j] += rowa[j] * g;
          }
        }
      } else {
        const std::size_t cols = B.shape()[1];
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            double acc = 0.0;
            for (std::size_t j = 0; j < cols; ++j) {
              const double g = gy[i * cols + j];
              acc += g * B.at(p, j);
              gb[p * cols + j] += A.at(i, p) * g;
            }
            ga[i * k + p] += acc;
          }
      }
      return;
    }
    case OpKind::kTranspose: {
      const Tensor& A = nodes_[n.inputs[0]].value;
      const std::size_t r = A.shape()[0], c = A.shape()[1];
      auto& ga = grad_of(n.inputs[0]);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += gy[j * r + i];
      return;
    }
    case OpKind::kAdd: {
      auto& ga = grad_of(n.inputs[0]);
      for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i];
      auto& gb = grad_of(n.inputs[1]);
      const std::size_t bs = gb.size();
      for (std::size_t i = 0; i < gy.size(); ++i) gb[i % bs] += gy[i];
      return;
    }
    case OpKind::kSub: {
      auto& ga = grad_of(n.inputs[0]);
      for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i];
      auto& gb = grad_of(n.inputs[1]);
      for (std::size_t i = 0; i < gy.size(); ++i) gb[i] -= gy[i];
      return;
    }
    case OpKind::kMul: {
      const Tensor& A = nodes_[n.inputs[0]].value;
      const Tensor& B = nodes_[n.inputs[1]].value;
      auto& ga = grad_of(n.inputs[0]);
      for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * B[i];
      auto& gb = grad_of(n.inputs[1]);
      for (std::size_t i = 0; i < gy.size(); ++i) gb[i] += gy[i] * A[i];
      return;
    }
    case OpKind::kTanh: {
      auto& ga = grad_of(n.inputs[0]);
      for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * (1.0 - n.value[i] * n.value[i]);
      return;
    }
    case OpKind::kSigmoid: {
      auto& ga = grad_of(n.inputs[0]);
      for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * n.value[i] * (1.0 - n.value[i]);
      return;
    }
    case OpKind::kSoftmax:
    case OpKind::kMaskedSoftmax: {
      auto& ga = grad_of(n.inputs[0]);
      const std::size_t c = n.value.cols();
      for (std::size_t r = 0; r < gy.size() / c; ++r) {
        double dotp = 0.0;
        for (std::size_t j = 0; j < c; ++j) dotp += gy[r * c + j] * n.value[r * c + j];
        for (std::size_t j = 0; j < c; ++j) ga[r * c + j] += n.value[r * c + j] * (gy[r * c + j] - dotp);
      }
      return;
    }
    case OpKind::kConcat:
    case OpKind::kStack: {
      std::size_t off = 0;
      for (std::size_t in : n.inputs) {
        auto& gi = grad_of(in);
        for (std::size_t j = 0; j < gi.size(); ++j) gi[j] += gy[off + j];
        off += gi.size();
      }
      return;
    }
    case OpKind::kSlice: {
      auto& ga = grad_of(n.inputs[0]);
      for (std::size_t j = 0; j < gy.size(); ++j) ga[n.aux + j] += gy[j];
      return;
    }
    case OpKind::kLookup: {
      auto& ga = grad_of(n.inputs[0]);
      const std::size_t c = gy.size();
      for (std::size_t j = 0; j < c; ++j) ga[n.aux * c + j] += gy[j];
      return;
    }
    case OpKind::kSum: {
      auto& ga = grad_of(n.inputs[0]);
      for (auto& v : ga) v += gy[0];
      return;
    }
    case OpKind::kScalarMul: {
      auto& ga = grad_of(n.inputs[0]);
      for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += n.scalar * gy[i];
      return;
    }
    case OpKind::kDropout: {
      auto& ga = grad_of(n.inputs[0]);
      for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += n.cache[i] * gy[i];
      return;
    }
    case OpKind::kPickNegLogSoftmax: {
      auto& ga = grad_of(n.inputs[0]);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gy[0] * n.cache[i];
      ga[n.aux] -= gy[0];
      return;
    }
  }
}

Gradients Tape::backward(Var loss) const {
  if (loss.tape() != this) throw ShapeError("backward: loss belongs to another tape");
  if (!loss.value().is_scalar()) throw ShapeError("backward: loss must be a scalar, got " + shape_str(loss.shape()));
  std::vector<std::vector<double>> grads(nodes_.size());
  grads[loss.id()] = {1.0};
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    if (grads[i].empty()) continue;
    backprop_node(nodes_[i], grads[i], grads);
  }
  std::vector<Tensor> out;
  out.reserve(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (grads[i].empty()) {
      out.emplace_back(nodes_[i].value.shape());
    } else {
      out.emplace_back(nodes_[i].value.shape(), std::move(grads[i]));
    }
  }
  return Gradients(std::move(out));
}

void Tape::accumulate(const Gradients& grads, ParamGrads& out) const {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const auto& n = nodes_[i];
    if (n.kind != OpKind::kParam) continue;
    Tensor& dst = out[*n.param];
    const Tensor& g = grads.at(i);
    for (std::size_t j = 0; j < g.size(); ++j) dst[j] += g[j];
  }
}

GradCheckResult grad_check(const LossFn& f, ParamSet& params, std::span<const ParamId> which, double eps,
                           std::size_t max_coords_per_param) {
  if (!(eps > 0.0)) throw UsageError("grad_check: eps must be positive");
  std::vector<ParamId> ids(which.begin(), which.end());
  if (ids.empty()) ids = params.ids();

  auto eval = [&]() {
    Tape tape(&params);
    return f(tape).value()[0];
  };

  Tape tape(&params);
  Var loss = f(tape);
  const double base = loss.value()[0];
  if (eval() != base) throw UsageError("grad_check: loss function is not deterministic");
  ParamGrads analytic(params);
  tape.accumulate(tape.backward(loss), analytic);

  GradCheckResult result;
  for (ParamId id : ids) {
    Tensor& value = params.value(id);
    const std::size_t n = value.size();
    std::size_t stride = 1;
    if (max_coords_per_param > 0 && n > max_coords_per_param) stride = (n + max_coords_per_param - 1) / max_coords_per_param;
    for (std::size_t j = 0; j < n; j += stride) {
      const double orig = value[j];
      value[j] = orig + eps;
      const double plus = eval();
      value[j] = orig - eps;
      const double minus = eval();
      value[j] = orig;
      const double numeric = (plus - minus) / (2.0 * eps);
      const double a = analytic[id][j];
      const double err = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      ++result.coords_checked;
      if (err > result.max_rel_error || result.worst_param.empty()) {
        result.max_rel_error = std::max(err, result.max_rel_error);
        result.worst_param = params.name(id);
      }
    }
  }
  return result;
}

}  // namespace docnmt::ad
