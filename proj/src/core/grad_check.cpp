#include "gdml/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace gdml {

namespace {

double evaluate(const MultiScalarFn& f, std::span<const Tensor> inputs, Mode mode, std::uint64_t seed) {
  Tape tape(mode, seed);
  std::vector<Var> vars;
  vars.reserve(inputs.size());
  for (const Tensor& t : inputs) vars.push_back(tape.constant(t));
  return f(tape, vars).value().item();
}

}  // namespace

GradCheckReport grad_check(const MultiScalarFn& f, std::span<const Tensor> inputs, double h, Mode mode,
                           std::uint64_t seed) {
  std::vector<Tensor> analytic;
  {
    Tape tape(mode, seed);
    std::vector<Var> vars;
    for (const Tensor& t : inputs) vars.push_back(tape.variable(t));
    Var loss = f(tape, vars);
    tape.backward(loss);
    for (const Var& v : vars) analytic.push_back(tape.grad(v));
  }

  GradCheckReport report;
  std::vector<Tensor> probe(inputs.begin(), inputs.end());
  for (std::size_t t = 0; t < probe.size(); ++t) {
    for (std::size_t i = 0; i < probe[t].size(); ++i) {
      const double orig = probe[t].data[i];
      probe[t].data[i] = orig + h;
      const double up = evaluate(f, probe, mode, seed);
      probe[t].data[i] = orig - h;
      const double down = evaluate(f, probe, mode, seed);
      probe[t].data[i] = orig;

      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[t].data[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double err = std::abs(a - numeric) / denom;
      if (err > report.max_rel_error || (t == 0 && i == 0)) {
        report = {err, t, i, a, numeric};
      }
    }
  }
  return report;
}

double grad_check(const ScalarFn& f, const Tensor& x, double h) {
  const Tensor inputs[] = {x};
  return grad_check([&f](Tape& tape, std::span<const Var> v) { return f(tape, v[0]); }, inputs, h).max_rel_error;
}

}  // namespace gdml
