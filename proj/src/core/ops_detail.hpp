#pragma once

#include <span>

#include "gdml/tape.hpp"

namespace gdml::detail {

Tape& same_tape(std::span<const Var> vars, const char* op);
void require_rank2(const Tensor& t, const char* op);
// buf(id) += g, skipped for nodes that do not require gradients.
void accumulate(Tape& tape, int id, const Tensor& g);

}  // namespace gdml::detail
