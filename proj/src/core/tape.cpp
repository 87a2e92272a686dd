#include "gdml/tape.hpp"

#include <fmt/format.h>

#include "gdml/error.hpp"

namespace gdml {

const char* to_string(OpKind kind) noexcept {
  switch (kind) {
    case OpKind::constant: return "constant";
    case OpKind::leaf: return "leaf";
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::mul: return "mul";
    case OpKind::div: return "div";
    case OpKind::neg: return "neg";
    case OpKind::scale: return "scale";
    case OpKind::add_scalar: return "add_scalar";
    case OpKind::add_row: return "add_row";
    case OpKind::matmul: return "matmul";
    case OpKind::matmul_nt: return "matmul_nt";
    case OpKind::transpose: return "transpose";
    case OpKind::softmax_rows: return "softmax_rows";
    case OpKind::log_softmax_rows: return "log_softmax_rows";
    case OpKind::gelu: return "gelu";
    case OpKind::dropout: return "dropout";
    case OpKind::l2_normalize_rows: return "l2_normalize_rows";
    case OpKind::log: return "log";
    case OpKind::exp: return "exp";
    case OpKind::sum: return "sum";
    case OpKind::mean: return "mean";
    case OpKind::concat_rows: return "concat_rows";
    case OpKind::concat_cols: return "concat_cols";
    case OpKind::layer_norm: return "layer_norm";
    case OpKind::attention: return "attention";
    case OpKind::group_mean_rows: return "group_mean_rows";
    case OpKind::interleave_rows: return "interleave_rows";
    case OpKind::strided_rows: return "strided_rows";
  }
  return "unknown";
}

const Tensor& Var::value() const { return tape_->value(id_); }

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{OpKind::constant, std::move(value), {}, false, false, {}, {}, {}});
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::variable(Tensor value) {
  nodes_.push_back(Node{OpKind::leaf, std::move(value), {}, false, true, {}, {}, {}});
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::parameter(const std::string& name, Tensor value) {
  if (named_.count(name)) throw ContractError(fmt::format("parameter '{}' bound twice on one tape", name));
  Var v = variable(std::move(value));
  nodes_.back().name = name;
  named_.emplace(name, v.id());
  return v;
}

Var Tape::record(OpKind kind, Tensor value, std::vector<int> parents, BackwardFn backward) {
  bool needs = false;
  for (int p : parents) needs = needs || nodes_.at(static_cast<std::size_t>(p)).requires_grad;
  nodes_.push_back(Node{kind, std::move(value), {}, false, needs, std::move(parents),
                        needs ? std::move(backward) : BackwardFn{}, {}});
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Tensor& Tape::grad_buffer(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (!n.has_grad) {
    n.grad = Tensor::zeros_like(n.value);
    n.has_grad = true;
  }
  return n.grad;
}

GradientMap Tape::backward(Var loss) {
  if (&loss.tape() != this) throw ContractError("backward: loss node belongs to another tape");
  const Tensor& lv = value(loss.id());
  if (lv.size() != 1) {
    throw ContractError(fmt::format("backward needs a scalar loss, got shape {}", shape_str(lv.shape)));
  }
  for (Node& n : nodes_) {
    n.has_grad = false;
    n.grad = Tensor(Shape{}, 0.0);
  }
  grad_buffer(loss.id()).data[0] = 1.0;
  for (int id = loss.id(); id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.has_grad || !n.requires_grad || !n.backward) continue;
    n.backward(*this, id);
  }
  GradientMap grads;
  for (const auto& [name, id] : named_) grads.emplace(name, grad(Var(this, id)));
  return grads;
}

Tensor Tape::grad(Var v) const {
  const Node& n = nodes_.at(static_cast<std::size_t>(v.id()));
  return n.has_grad ? n.grad : Tensor::zeros_like(n.value);
}

}  // namespace gdml
