#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "dawp/common.hpp"
#include "dawp/obsio.hpp"
#include "dawp/rng.hpp"
#include "dawp/tensor.hpp"

namespace dawp::nn {

/// One named parameter with its gradient buffer and (lazily allocated)
/// optimizer moments.
template <typename T>
struct Param {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  Tensor<T> m, v;  // Adam moments, sized on first optimizer step

  explicit Param(std::string n, std::vector<std::int64_t> shape)
      : name(std::move(n)), value(shape), grad(std::move(shape)) {}
};

/// Ordered map name -> parameter. Registration order is the serialization
/// order, so checkpoints round-trip byte-identically.
template <typename T>
class ParamStore {
 public:
  Param<T>* add(const std::string& name, std::vector<std::int64_t> shape) {
    if (index_.count(name)) throw ContractError("duplicate parameter name '" + name + "'");
    entries_.push_back(std::make_unique<Param<T>>(name, std::move(shape)));
    index_[name] = entries_.size() - 1;
    return entries_.back().get();
  }

  Param<T>* find(const std::string& name) {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : entries_[it->second].get();
  }

  std::size_t size() const { return entries_.size(); }
  Param<T>& operator[](std::size_t i) { return *entries_[i]; }
  const Param<T>& operator[](std::size_t i) const { return *entries_[i]; }

  void zero_grads() {
    for (auto& e : entries_) e->grad.zero();
  }

  std::int64_t total_elements() const {
    std::int64_t n = 0;
    for (const auto& e : entries_) n += e->value.numel();
    return n;
  }

  NamedArrays to_named_arrays() const {
    NamedArrays a;
    for (const auto& e : entries_) {
      std::vector<float> vals(e->value.data.size());
      for (std::size_t i = 0; i < vals.size(); ++i)
        vals[i] = static_cast<float>(e->value.data[i]);
      a.add(e->name, e->value.shape, std::move(vals));
    }
    return a;
  }

  void load(const NamedArrays& a) {
    for (auto& e : entries_) {
      const std::vector<float>* v = a.find(e->name);
      if (!v) throw FormatError("checkpoint missing parameter '" + e->name + "'", 0);
      if (v->size() != e->value.data.size())
        throw FormatError("checkpoint size mismatch for '" + e->name + "'", 0);
      for (std::size_t i = 0; i < v->size(); ++i)
        e->value.data[i] = static_cast<T>((*v)[i]);
    }
  }

 private:
  std::vector<std::unique_ptr<Param<T>>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Initializers. All randomness flows through the caller's Rng so model
// construction is deterministic per seed.
template <typename T>
void init_xavier(Param<T>* p, std::int64_t fan_in, std::int64_t fan_out, Rng& rng) {
  double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (auto& v : p->value.data) v = static_cast<T>(rng.uniform(-limit, limit));
}

template <typename T>
void init_normal(Param<T>* p, double std_dev, Rng& rng) {
  for (auto& v : p->value.data) v = static_cast<T>(std_dev * rng.normal());
}

}  // namespace dawp::nn
