#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "gdml/tape.hpp"

namespace gdml {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_input = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

// Builds a scalar from leaves bound on a fresh tape.
using MultiScalarFn = std::function<Var(Tape&, std::span<const Var>)>;
using ScalarFn = std::function<Var(Tape&, Var)>;

// Compares tape gradients with central differences (f(x+h) - f(x-h)) / 2h for
// every coordinate of every input. Relative error uses the denominator
// max(|analytic|, |numeric|, 1e-8). Each evaluation runs on a fresh tape built
// with (mode, seed), so dropout masks repeat between evaluations.
GradCheckReport grad_check(const MultiScalarFn& f, std::span<const Tensor> inputs, double h = 1e-5,
                           Mode mode = Mode::eval, std::uint64_t seed = 0);

double grad_check(const ScalarFn& f, const Tensor& x, double h = 1e-5);

}  // namespace gdml
