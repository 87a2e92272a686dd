#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "gdml/tape.hpp"
#include "gdml/tensor.hpp"

namespace gdml {

// Trainable tensors keyed by stable dotted names ("neighbor.block0.attn.wq").
// Iteration order is lexicographic, which fixes the order of optimizer
// updates and of checkpoint entries.
class ParamStore {
 public:
  void add(const std::string& name, Tensor value);
  bool contains(const std::string& name) const { return tensors_.count(name) != 0; }
  const Tensor& at(const std::string& name) const;
  Tensor& at(const std::string& name);
  std::vector<std::string> names() const;
  std::size_t size() const noexcept { return tensors_.size(); }
  std::size_t scalar_count() const noexcept;

  auto begin() const { return tensors_.begin(); }
  auto end() const { return tensors_.end(); }
  auto begin() { return tensors_.begin(); }
  auto end() { return tensors_.end(); }

  bool all_finite() const noexcept;
  friend bool bitwise_equal(const ParamStore& a, const ParamStore& b) noexcept;

 private:
  std::map<std::string, Tensor> tensors_;
};

// Parameters as variables on one tape.
class BoundParams {
 public:
  BoundParams() = default;
  // Every parameter becomes a named differentiable leaf.
  BoundParams(const ParamStore& store, Tape& tape);
  // Every parameter becomes a constant (inference).
  static BoundParams constants(const ParamStore& store, Tape& tape);
  // Pre-built variables, e.g. from grad_check; names and vars align.
  BoundParams(std::span<const std::string> names, std::span<const Var> vars);

  Var operator[](const std::string& name) const;
  bool contains(const std::string& name) const { return vars_.count(name) != 0; }

 private:
  std::map<std::string, Var> vars_;
};

}  // namespace gdml
