#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "docnmt/tensor.hpp"

namespace docnmt {

struct ParamId {
  std::size_t index = 0;
  friend bool operator==(ParamId, ParamId) = default;
};

// Named trainable tensors. Names are unique; insertion order is the
// canonical order for checkpoints and optimizer sweeps.
class ParamSet {
 public:
  struct Entry {
    std::string name;
    Tensor value;
    bool frozen = false;
  };

  // Adds a tensor drawn uniformly from [-scale, scale].
  ParamId add_uniform(const std::string& name, Shape shape, std::mt19937_64& rng, double scale = 0.08);
  ParamId add_zeros(const std::string& name, Shape shape);
  ParamId add(const std::string& name, Tensor value);

  std::size_t size() const { return entries_.size(); }
  const Entry& entry(ParamId id) const { return entries_.at(id.index); }
  const Tensor& value(ParamId id) const { return entries_.at(id.index).value; }
  Tensor& value(ParamId id) { return entries_.at(id.index).value; }
  const std::string& name(ParamId id) const { return entries_.at(id.index).name; }
  bool frozen(ParamId id) const { return entries_.at(id.index).frozen; }

  std::optional<ParamId> find(const std::string& name) const;
  ParamId at(const std::string& name) const;

  // Freezes every tensor whose name starts with prefix.
  void set_frozen_prefix(const std::string& prefix, bool frozen);
  std::size_t parameter_count() const;

  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<ParamId> ids() const;

 private:
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

// Per-parameter gradient accumulators aligned with a ParamSet.
class ParamGrads {
 public:
  ParamGrads() = default;
  explicit ParamGrads(const ParamSet& params);

  Tensor& operator[](ParamId id) { return grads_.at(id.index); }
  const Tensor& operator[](ParamId id) const { return grads_.at(id.index); }
  std::size_t size() const { return grads_.size(); }

  void zero();
  void scale(double factor);
  double global_norm() const;
  bool all_finite() const;

 private:
  std::vector<Tensor> grads_;
};

}  // namespace docnmt
