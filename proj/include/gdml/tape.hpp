#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "gdml/rng.hpp"
#include "gdml/tensor.hpp"

namespace gdml {

enum class Mode { train, eval };

enum class OpKind : std::uint8_t {
  constant,
  leaf,
  add,
  sub,
  mul,
  div,
  neg,
  scale,
  add_scalar,
  add_row,
  matmul,
  matmul_nt,
  transpose,
  softmax_rows,
  log_softmax_rows,
  gelu,
  dropout,
  l2_normalize_rows,
  log,
  exp,
  sum,
  mean,
  concat_rows,
  concat_cols,
  layer_norm,
  attention,
  group_mean_rows,
  interleave_rows,
  strided_rows,
};

const char* to_string(OpKind kind) noexcept;

class Tape;

// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  int id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape; }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

using GradientMap = std::map<std::string, Tensor>;

// Records operations in execution order, which is a valid topological order:
// a node's parents always have smaller ids. Single owner; not thread-safe.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, int self)>;

  explicit Tape(Mode mode = Mode::eval, std::uint64_t seed = 0) : mode_(mode), rng_(seed) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  // Differentiable leaf without a name (reported by grad(), not in backward()'s map).
  Var variable(Tensor value);
  // Named differentiable leaf; names must be unique per tape.
  Var parameter(const std::string& name, Tensor value);

  Mode mode() const noexcept { return mode_; }
  bool training() const noexcept { return mode_ == Mode::train; }
  Rng& rng() noexcept { return rng_; }

  std::size_t size() const noexcept { return nodes_.size(); }
  OpKind kind(int id) const { return nodes_.at(static_cast<std::size_t>(id)).kind; }
  std::span<const int> parents(int id) const { return nodes_.at(static_cast<std::size_t>(id)).parents; }
  const Tensor& value(int id) const { return nodes_.at(static_cast<std::size_t>(id)).value; }
  bool requires_grad(int id) const { return nodes_.at(static_cast<std::size_t>(id)).requires_grad; }

  // Runs reverse accumulation from a scalar node. Returns the gradient of every
  // named parameter; parameters the loss does not reach get zeros.
  GradientMap backward(Var loss);
  // Gradient of any node after backward(); zeros when none was accumulated.
  Tensor grad(Var v) const;

  // --- used by op implementations ---
  Var record(OpKind kind, Tensor value, std::vector<int> parents, BackwardFn backward);
  // Gradient buffer of a node, zero-initialised on first access.
  Tensor& grad_buffer(int id);
  const Tensor& output_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].grad; }

 private:
  struct Node {
    OpKind kind;
    Tensor value;
    Tensor grad;
    bool has_grad = false;
    bool requires_grad = false;
    std::vector<int> parents;
    BackwardFn backward;
    std::string name;
  };

  Mode mode_;
  Rng rng_;
  std::deque<Node> nodes_;  // stable references across record()
  std::map<std::string, int> named_;
};

}  // namespace gdml
