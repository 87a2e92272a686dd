#include "gdml/params.hpp"

#include <fmt/format.h>

#include "gdml/error.hpp"

namespace gdml {

void ParamStore::add(const std::string& name, Tensor value) {
  if (!tensors_.emplace(name, std::move(value)).second) {
    throw ContractError(fmt::format("parameter '{}' registered twice", name));
  }
}

const Tensor& ParamStore::at(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw ContractError(fmt::format("no parameter named '{}'", name));
  return it->second;
}

Tensor& ParamStore::at(const std::string& name) {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw ContractError(fmt::format("no parameter named '{}'", name));
  return it->second;
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  for (const auto& [name, t] : tensors_) out.push_back(name);
  return out;
}

std::size_t ParamStore::scalar_count() const noexcept {
  std::size_t n = 0;
  for (const auto& [name, t] : tensors_) n += t.size();
  return n;
}

bool ParamStore::all_finite() const noexcept {
  for (const auto& [name, t] : tensors_)
    if (!t.all_finite()) return false;
  return true;
}

bool bitwise_equal(const ParamStore& a, const ParamStore& b) noexcept {
  if (a.tensors_.size() != b.tensors_.size()) return false;
  auto ib = b.tensors_.begin();
  for (const auto& [name, t] : a.tensors_) {
    if (name != ib->first || !bitwise_equal(t, ib->second)) return false;
    ++ib;
  }
  return true;
}

BoundParams::BoundParams(const ParamStore& store, Tape& tape) {
  for (const auto& [name, t] : store) vars_.emplace(name, tape.parameter(name, t));
}

BoundParams BoundParams::constants(const ParamStore& store, Tape& tape) {
  BoundParams b;
  for (const auto& [name, t] : store) b.vars_.emplace(name, tape.constant(t));
  return b;
}

BoundParams::BoundParams(std::span<const std::string> names, std::span<const Var> vars) {
  if (names.size() != vars.size()) throw ContractError("BoundParams: names and variables differ in count");
  for (std::size_t i = 0; i < names.size(); ++i) vars_.emplace(names[i], vars[i]);
}

Var BoundParams::operator[](const std::string& name) const {
  auto it = vars_.find(name);
  if (it == vars_.end()) throw ContractError(fmt::format("parameter '{}' is not bound", name));
  return it->second;
}

}  // namespace gdml
