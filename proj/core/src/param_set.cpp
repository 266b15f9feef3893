#include "docnmt/param_set.hpp"

#include <cmath>

#include "docnmt/errors.hpp"

namespace docnmt {

ParamId ParamSet::add(const std::string& name, Tensor value) {
  if (index_.count(name)) throw UsageError("duplicate parameter name: " + name);
  const std::size_t idx = entries_.size();
  entries_.push_back({name, std::move(value), false});
  index_.emplace(name, idx);
  return ParamId{idx};
}

ParamId ParamSet::add_uniform(const std::string& name, Shape shape, std::mt19937_64& rng, double scale) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> dist(-scale, scale);
  for (auto& v : t.values()) v = dist(rng);
  return add(name, std::move(t));
}

ParamId ParamSet::add_zeros(const std::string& name, Shape shape) {
  return add(name, Tensor(std::move(shape)));
}

std::optional<ParamId> ParamSet::find(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) return std::nullopt;
  return ParamId{it->second};
}

ParamId ParamSet::at(const std::string& name) const {
  auto id = find(name);
  if (!id) throw UsageError("unknown parameter: " + name);
  return *id;
}

void ParamSet::set_frozen_prefix(const std::string& prefix, bool frozen) {
  for (auto& e : entries_) {
    if (e.name.rfind(prefix, 0) == 0) e.frozen = frozen;
  }
}

std::size_t ParamSet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.value.size();
  return n;
}

std::vector<ParamId> ParamSet::ids() const {
  std::vector<ParamId> out;
  out.reserve(entries_.size());
  for (std::size_t i = 0; i < entries_.size(); ++i) out.push_back(ParamId{i});
  return out;
}

ParamGrads::ParamGrads(const ParamSet& params) {
  grads_.reserve(params.size());
  for (const auto& e : params.entries()) grads_.emplace_back(e.value.shape());
}

void ParamGrads::zero() {
  for (auto& g : grads_) {
    for (auto& v : g.values()) v = 0.0;
  }
}

void ParamGrads::scale(double factor) {
  for (auto& g : grads_) {
    for (auto& v : g.values()) v *= factor;
  }
}

double ParamGrads::global_norm() const {
  double sq = 0.0;
  for (const auto& g : grads_) {
    for (double v : g.values()) sq += v * v;
  }
  return std::sqrt(sq);
}

bool ParamGrads::all_finite() const {
  for (const auto& g : grads_) {
    if (!g.all_finite()) return false;
  }
  return true;
}

}  // namespace docnmt
