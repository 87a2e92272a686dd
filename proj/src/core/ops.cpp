#include "gdml/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "gdml/error.hpp"
#include "gdml/kernels.hpp"
#include "ops_detail.hpp"

namespace gdml {

namespace detail {

Tape& same_tape(std::span<const Var> vars, const char* op) {
  if (vars.empty() || !vars.front().valid()) throw ContractError(fmt::format("{}: invalid variable", op));
  Tape& t = vars.front().tape();
  for (const Var& v : vars) {
    if (!v.valid() || &v.tape() != &t) throw ContractError(fmt::format("{}: variables from different tapes", op));
  }
  return t;
}

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) throw ShapeError(fmt::format("{}: expected a matrix, got shape {}", op, shape_str(t.shape)));
}

void accumulate(Tape& tape, int id, const Tensor& g) {
  if (!tape.requires_grad(id)) return;
  Tensor& buf = tape.grad_buffer(id);
  kernels::active().axpy(1.0, g.data.data(), buf.data.data(), g.size());
}

}  // namespace detail

using detail::accumulate;
using detail::require_rank2;
using detail::same_tape;

namespace {

Tape& binary_tape(Var a, Var b, const char* op) {
  const Var vs[] = {a, b};
  Tape& t = same_tape(vs, op);
  if (a.shape() != b.shape()) {
    throw ShapeError(fmt::format("{}: shape mismatch {} vs {}", op, shape_str(a.shape()), shape_str(b.shape())));
  }
  return t;
}

template <typename F>
Tensor map_values(const Tensor& x, F f) {
  Tensor out(x.shape);
  for (std::size_t i = 0; i < x.size(); ++i) out.data[i] = f(x.data[i]);
  return out;
}

}  // namespace

Var add(Var a, Var b) {
  Tape& t = binary_tape(a, b, "add");
  Tensor out = a.value();
  kernels::active().axpy(1.0, b.value().data.data(), out.data.data(), out.size());
  const int ia = a.id(), ib = b.id();
  return t.record(OpKind::add, std::move(out), {ia, ib}, [ia, ib](Tape& tp, int self) {
    const Tensor g = tp.output_grad(self);
    accumulate(tp, ia, g);
    accumulate(tp, ib, g);
  });
}

Var sub(Var a, Var b) {
  Tape& t = binary_tape(a, b, "sub");
  Tensor out = a.value();
  kernels::active().axpy(-1.0, b.value().data.data(), out.data.data(), out.size());
  const int ia = a.id(), ib = b.id();
  return t.record(OpKind::sub, std::move(out), {ia, ib}, [ia, ib](Tape& tp, int self) {
    const Tensor& g = tp.output_grad(self);
    accumulate(tp, ia, g);
    if (tp.requires_grad(ib)) {
      Tensor& buf = tp.grad_buffer(ib);
      kernels::active().axpy(-1.0, g.data.data(), buf.data.data(), g.size());
    }
  });
}

Var mul(Var a, Var b) {
  Tape& t = binary_tape(a, b, "mul");
  Tensor out(a.shape());
  const auto& av = a.value().data;
  const auto& bv = b.value().data;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = av[i] * bv[i];
  const int ia = a.id(), ib = b.id();
  return t.record(OpKind::mul, std::move(out), {ia, ib}, [ia, ib](Tape& tp, int self) {
    const Tensor& g = tp.output_grad(self);
    const Tensor& x = tp.value(ia);
    const Tensor& y = tp.value(ib);
    if (tp.requires_grad(ia)) {
      Tensor& buf = tp.grad_buffer(ia);
      for (std::size_t i = 0; i < g.size(); ++i) buf.data[i] += g.data[i] * y.data[i];
    }
    if (tp.requires_grad(ib)) {
      Tensor& buf = tp.grad_buffer(ib);
      for (std::size_t i = 0; i < g.size(); ++i) buf.data[i] += g.data[i] * x.data[i];
    }
  });
}

Var div(Var a, Var b) {
  Tape& t = binary_tape(a, b, "div");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = a.value().data[i] / b.value().data[i];
  const int ia = a.id(), ib = b.id();
  return t.record(OpKind::div, std::move(out), {ia, ib}, [ia, ib](Tape& tp, int self) {
    const Tensor& g = tp.output_grad(self);
    const Tensor& y = tp.value(ib);
    const Tensor& q = tp.value(self);
    if (tp.requires_grad(ia)) {
      Tensor& buf = tp.grad_buffer(ia);
      for (std::size_t i = 0; i < g.size(); ++i) buf.data[i] += g.data[i] / y.data[i];
    }
    if (tp.requires_grad(ib)) {
      Tensor& buf = tp.grad_buffer(ib);
      for (std::size_t i = 0; i < g.size(); ++i) buf.data[i] -= g.data[i] * q.data[i] / y.data[i];
    }
  });
}

Var neg(Var a) { return scale(a, -1.0); }

Var scale(Var a, double c) {
  const Var vs[] = {a};
  Tape& t = same_tape(vs, "scale");
  Tensor out = map_values(a.value(), [c](double v) { return c * v; });
  const int ia = a.id();
  return t.record(OpKind::scale, std::move(out), {ia}, [ia, c](Tape& tp, int self) {
    const Tensor& g = tp.output_grad(self);
    Tensor& buf = tp.grad_buffer(ia);
    kernels::active().axpy(c, g.data.data(), buf.data.data(), g.size());
  });
}

Var add_scalar(Var a, double c) {
  const Var vs[] = {a};
  Tape& t = same_tape(vs, "add_scalar");
  Tensor out = map_values(a.value(), [c](double v) { return v + c; });
  const int ia = a.id();
  return t.record(OpKind::add_scalar, std::move(out), {ia},
                  [ia](Tape& tp, int self) { accumulate(tp, ia, tp.output_grad(self)); });
}

Var add_row(Var x, Var row) {
  const Var vs[] = {x, row};
  Tape& t = same_tape(vs, "add_row");
  require_rank2(x.value(), "add_row");
  const std::size_t r = x.rows(), c = x.cols();
  if (row.value().size() != c || row.value().rank() > 2 || (row.value().rank() == 2 && row.rows() != 1)) {
    throw ShapeError(fmt::format("add_row: bias {} does not match matrix {}", shape_str(row.shape()), shape_str(x.shape())));
  }
  Tensor out = x.value();
  const double* b = row.value().data.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out.data[i * c + j] += b[j];
  const int ix = x.id(), ib = row.id();
  return t.record(OpKind::add_row, std::move(out), {ix, ib}, [ix, ib, r, c](Tape& tp, int self) {
    const Tensor& g = tp.output_grad(self);
    accumulate(tp, ix, g);
    if (tp.requires_grad(ib)) {
      Tensor& buf = tp.grad_buffer(ib);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) buf.data[j] += g.data[i * c + j];
    }
  });
}

Var matmul(Var a, Var b) {
  const Var vs[] = {a, b};
  Tape& t = same_tape(vs, "matmul");
  require_rank2(a.value(), "matmul");
  require_rank2(b.value(), "matmul");
  const std::size_t m = a.rows(), p = a.cols(), n = b.cols();
  if (b.rows() != p) {
    throw ShapeError(fmt::format("matmul: inner dimensions differ, {} x {}", shape_str(a.shape()), shape_str(b.shape())));
  }
  Tensor out(Shape{m, n});
  kernels::active().gemm_nn(m, n, p, a.value().data.data(), b.value().data.data(), out.data.data());
  const int ia = a.id(), ib = b.id();
  return t.record(OpKind::matmul, std::move(out), {ia, ib}, [ia, ib, m, n, p](Tape& tp, int self) {
    const auto& k = kernels::active();
    const Tensor& g = tp.output_grad(self);
    if (tp.requires_grad(ia)) k.gemm_nt(m, p, n, g.data.data(), tp.value(ib).data.data(), tp.grad_buffer(ia).data.data());
    if (tp.requires_grad(ib)) k.gemm_tn(p, n, m, tp.value(ia).data.data(), g.data.data(), tp.grad_buffer(ib).data.data());
  });
}

Var matmul_nt(Var a, Var b) {
  const Var vs[] = {a, b};
  Tape& t = same_tape(vs, "matmul_nt");
  require_rank2(a.value(), "matmul_nt");
  require_rank2(b.value(), "matmul_nt");
  const std::size_t m = a.rows(), kd = a.cols(), n = b.rows();
  if (b.cols() != kd) {
    throw ShapeError(fmt::format("matmul_nt: {} x {}^T has mismatched inner dimensions", shape_str(a.shape()),
                                 shape_str(b.shape())));
  }
  Tensor out(Shape{m, n});
  kernels::active().gemm_nt(m, n, kd, a.value().data.data(), b.value().data.data(), out.data.data());
  const int ia = a.id(), ib = b.id();
  return t.record(OpKind::matmul_nt, std::move(out), {ia, ib}, [ia, ib, m, n, kd](Tape& tp, int self) {
    const auto& k = kernels::active();
    const Tensor& g = tp.output_grad(self);
    if (tp.requires_grad(ia)) k.gemm_nn(m, kd, n, g.data.data(), tp.value(ib).data.data(), tp.grad_buffer(ia).data.data());
    if (tp.requires_grad(ib)) k.gemm_tn(n, kd, m, g.data.data(), tp.value(ia).data.data(), tp.grad_buffer(ib).data.data());
  });
}

Var transpose(Var x) {
  const Var vs[] = {x};
  Tape& t = same_tape(vs, "transpose");
  require_rank2(x.value(), "transpose");
  const int ix = x.id();
  return t.record(OpKind::transpose, gdml::transpose(x.value()), {ix}, [ix](Tape& tp, int self) {
    accumulate(tp, ix, gdml::transpose(tp.output_grad(self)));
  });
}

Var softmax_rows(Var x) {
  const Var vs[] = {x};
  Tape& t = same_tape(vs, "softmax_rows");
  require_rank2(x.value(), "softmax_rows");
  const std::size_t r = x.rows(), c = x.cols();
  Tensor out(x.shape());
  for (std::size_t i = 0; i < r; ++i) {
    const auto in = x.value().row(i);
    auto o = out.row(i);
    const double mx = *std::max_element(in.begin(), in.end());
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += (o[j] = std::exp(in[j] - mx));
    for (std::size_t j = 0; j < c; ++j) o[j] /= z;
  }
  const int ix = x.id();
  return t.record(OpKind::softmax_rows, std::move(out), {ix}, [ix, r, c](Tape& tp, int self) {
    const Tensor& g = tp.output_grad(self);
    const Tensor& y = tp.value(self);
    Tensor& buf = tp.grad_buffer(ix);
    for (std::size_t i = 0; i < r; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < c; ++j) s += g(i, j) * y(i, j);
      for (std::size_t j = 0; j < c; ++j) buf(i, j) += y(i, j) * (g(i, j) - s);
    }
  });
}

Var log_softmax_rows(Var x) {
  const Var vs[] = {x};
  Tape& t = same_tape(vs, "log_softmax_rows");
  require_rank2(x.value(), "log_softmax_rows");
  const std::size_t r = x.rows(), c = x.cols();
  Tensor out(x.shape());
  for (std::size_t i = 0; i < r; ++i) {
    const auto in = x.value().row(i);
    auto o = out.row(i);
    // log1p over the non-maximal terms keeps saturated rows accurate.
    const std::size_t am = static_cast<std::size_t>(std::max_element(in.begin(), in.end()) - in.begin());
    const double mx = in[am];
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j)
      if (j != am) z += std::exp(in[j] - mx);
    const double l = std::log1p(z);
    for (std::size_t j = 0; j < c; ++j) o[j] = (in[j] - mx) - l;
  }
  const int ix = x.id();
  return t.record(OpKind::log_softmax_rows, std::move(out), {ix}, [ix, r, c](Tape& tp, int self) {
    const Tensor& g = tp.output_grad(self);
    const Tensor& y = tp.value(self);
    Tensor& buf = tp.grad_buffer(ix);
    for (std::size_t i = 0; i < r; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < c; ++j) s += g(i, j);
      for (std::size_t j = 0; j < c; ++j) buf(i, j) += g(i, j) - std::exp(y(i, j)) * s;
    }
  });
}

Var gelu(Var x) {
  const Var vs[] = {x};
  Tape& t = same_tape(vs, "gelu");
  constexpr double a = 0.044715;
  Tensor out = map_values(x.value(), [](double v) {
    return 0.5 * v * (1.0 + std::tanh(kGeluTanhCoeff * (v + a * v * v * v)));
  });
  const int ix = x.id();
  return t.record(OpKind::gelu, std::move(out), {ix}, [ix](Tape& tp, int self) {
    const Tensor& g = tp.output_grad(self);
    const Tensor& xv = tp.value(ix);
    Tensor& buf = tp.grad_buffer(ix);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = xv.data[i];
      const double th = std::tanh(kGeluTanhCoeff * (v + a * v * v * v));
      const double d = 0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * kGeluTanhCoeff * (1.0 + 3.0 * a * v * v);
      buf.data[i] += g.data[i] * d;
    }
  });
}

Var dropout(Var x, double rate, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ContractError(fmt::format("dropout rate {} outside [0, 1)", rate));
  const Var vs[] = {x};
  Tape& t = same_tape(vs, "dropout");
  if (!t.training() || rate == 0.0) return x;
  const double keep = 1.0 / (1.0 - rate);
  Tensor mask(x.shape());
  for (double& m : mask.data) m = rng.uniform() >= rate ? keep : 0.0;
  Tensor out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = x.value().data[i] * mask.data[i];
  const int ix = x.id();
  return t.record(OpKind::dropout, std::move(out), {ix}, [ix, mask = std::move(mask)](Tape& tp, int self) {
    const Tensor& g = tp.output_grad(self);
    Tensor& buf = tp.grad_buffer(ix);
    for (std::size_t i = 0; i < g.size(); ++i) buf.data[i] += g.data[i] * mask.data[i];
  });
}

Var l2_normalize_rows(Var x, ZeroRowPolicy policy) {
  const Var vs[] = {x};
  Tape& t = same_tape(vs, "l2_normalize_rows");
  require_rank2(x.value(), "l2_normalize_rows");
  const std::size_t r = x.rows(), c = x.cols();
  std::vector<double> norms(r);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < r; ++i) {
    const auto in = x.value().row(i);
    double n = std::sqrt(kernels::active().dot(in.data(), in.data(), c));
    if (n == 0.0 && policy == ZeroRowPolicy::error) {
      throw NumericError(fmt::format("l2_normalize_rows: row {} has zero norm", i));
    }
    n = std::max(n, kNormalizeEpsilon);
    norms[i] = n;
    for (std::size_t j = 0; j < c; ++j) out(i, j) = in[j] / n;
  }
  const int ix = x.id();
  return t.record(OpKind::l2_normalize_rows, std::move(out), {ix},
                  [ix, r, c, norms = std::move(norms)](Tape& tp, int self) {
                    const Tensor& g = tp.output_grad(self);
                    const Tensor& y = tp.value(self);
                    Tensor& buf = tp.grad_buffer(ix);
                    for (std::size_t i = 0; i < r; ++i) {
                      double s = 0.0;
                      for (std::size_t j = 0; j < c; ++j) s += y(i, j) * g(i, j);
                      for (std::size_t j = 0; j < c; ++j) buf(i, j) += (g(i, j) - y(i, j) * s) / norms[i];
                    }
                  });
}

Var log(Var x) {
  const Var vs[] = {x};
  Tape& t = same_tape(vs, "log");
  const int ix = x.id();
  return t.record(OpKind::log, map_values(x.value(), [](double v) { return std::log(v); }), {ix},
                  [ix](Tape& tp, int self) {
                    const Tensor& g = tp.output_grad(self);
                    const Tensor& xv = tp.value(ix);
                    Tensor& buf = tp.grad_buffer(ix);
                    for (std::size_t i = 0; i < g.size(); ++i) buf.data[i] += g.data[i] / xv.data[i];
                  });
}

Var exp(Var x) {
  const Var vs[] = {x};
  Tape& t = same_tape(vs, "exp");
  const int ix = x.id();
  return t.record(OpKind::exp, map_values(x.value(), [](double v) { return std::exp(v); }), {ix},
                  [ix](Tape& tp, int self) {
                    const Tensor& g = tp.output_grad(self);
                    const Tensor& y = tp.value(self);
                    Tensor& buf = tp.grad_buffer(ix);
                    for (std::size_t i = 0; i < g.size(); ++i) buf.data[i] += g.data[i] * y.data[i];
                  });
}

Var sum(Var x) {
  const Var vs[] = {x};
  Tape& t = same_tape(vs, "sum");
  double s = 0.0;
  for (double v : x.value().data) s += v;
  const int ix = x.id();
  return t.record(OpKind::sum, Tensor::scalar(s), {ix}, [ix](Tape& tp, int self) {
    const double g = tp.output_grad(self).data[0];
    for (double& b : tp.grad_buffer(ix).data) b += g;
  });
}

Var mean(Var x) {
  const Var vs[] = {x};
  Tape& t = same_tape(vs, "mean");
  const double n = static_cast<double>(x.value().size());
  double s = 0.0;
  for (double v : x.value().data) s += v;
  const int ix = x.id();
  return t.record(OpKind::mean, Tensor::scalar(s / n), {ix}, [ix, n](Tape& tp, int self) {
    const double g = tp.output_grad(self).data[0] / n;
    for (double& b : tp.grad_buffer(ix).data) b += g;
  });
}

Var concat_rows(std::span<const Var> parts) {
  Tape& t = same_tape(parts, "concat_rows");
  const std::size_t c = parts.front().cols();
  std::size_t total = 0;
  for (const Var& p : parts) {
    require_rank2(p.value(), "concat_rows");
    if (p.cols() != c) throw ShapeError("concat_rows: column counts differ");
    total += p.rows();
  }
  Tensor out(Shape{total, c});
  std::vector<int> ids;
  std::size_t offset = 0;
  for (const Var& p : parts) {
    std::copy(p.value().data.begin(), p.value().data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(offset));
    offset += p.value().size();
    ids.push_back(p.id());
  }
  return t.record(OpKind::concat_rows, std::move(out), ids, [ids](Tape& tp, int self) {
    const Tensor& g = tp.output_grad(self);
    std::size_t off = 0;
    for (int id : ids) {
      const std::size_t n = tp.value(id).size();
      if (tp.requires_grad(id)) {
        Tensor& buf = tp.grad_buffer(id);
        for (std::size_t i = 0; i < n; ++i) buf.data[i] += g.data[off + i];
      }
      off += n;
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  Tape& t = same_tape(parts, "concat_cols");
  const std::size_t r = parts.front().rows();
  std::size_t total = 0;
  for (const Var& p : parts) {
    require_rank2(p.value(), "concat_cols");
    if (p.rows() != r) throw ShapeError("concat_cols: row counts differ");
    total += p.cols();
  }
  Tensor out(Shape{r, total});
  std::vector<int> ids;
  std::size_t col = 0;
  for (const Var& p : parts) {
    const std::size_t c = p.cols();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) out(i, col + j) = p.value()(i, j);
    col += c;
    ids.push_back(p.id());
  }
  return t.record(OpKind::concat_cols, std::move(out), ids, [ids, r](Tape& tp, int self) {
    const Tensor& g = tp.output_grad(self);
    std::size_t off = 0;
    for (int id : ids) {
      const std::size_t c = tp.value(id).cols();
      if (tp.requires_grad(id)) {
        Tensor& buf = tp.grad_buffer(id);
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j) buf(i, j) += g(i, off + j);
      }
      off += c;
    }
  });
}

Var layer_norm_rows(Var x, Var gamma, Var beta, double eps) {
  const Var vs[] = {x, gamma, beta};
  Tape& t = same_tape(vs, "layer_norm_rows");
  require_rank2(x.value(), "layer_norm_rows");
  const std::size_t r = x.rows(), c = x.cols();
  if (gamma.value().size() != c || beta.value().size() != c) throw ShapeError("layer_norm_rows: affine size mismatch");
  Tensor xhat(x.shape());
  std::vector<double> inv_std(r);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < r; ++i) {
    const auto in = x.value().row(i);
    double mu = 0.0;
    for (double v : in) mu += v;
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (double v : in) var += (v - mu) * (v - mu);
    var /= static_cast<double>(c);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) {
      xhat(i, j) = (in[j] - mu) * inv_std[i];
      out(i, j) = gamma.value().data[j] * xhat(i, j) + beta.value().data[j];
    }
  }
  const int ix = x.id(), ig = gamma.id(), ib = beta.id();
  return t.record(OpKind::layer_norm, std::move(out), {ix, ig, ib},
                  [ix, ig, ib, r, c, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& tp, int self) {
                    const Tensor& g = tp.output_grad(self);
                    const Tensor& gam = tp.value(ig);
                    if (tp.requires_grad(ig)) {
                      Tensor& buf = tp.grad_buffer(ig);
                      for (std::size_t i = 0; i < r; ++i)
                        for (std::size_t j = 0; j < c; ++j) buf.data[j] += g(i, j) * xhat(i, j);
                    }
                    if (tp.requires_grad(ib)) {
                      Tensor& buf = tp.grad_buffer(ib);
                      for (std::size_t i = 0; i < r; ++i)
                        for (std::size_t j = 0; j < c; ++j) buf.data[j] += g(i, j);
                    }
                    if (tp.requires_grad(ix)) {
                      Tensor& buf = tp.grad_buffer(ix);
                      const double inv_c = 1.0 / static_cast<double>(c);
                      for (std::size_t i = 0; i < r; ++i) {
                        double m1 = 0.0, m2 = 0.0;
                        for (std::size_t j = 0; j < c; ++j) {
                          const double dxh = g(i, j) * gam.data[j];
                          m1 += dxh;
                          m2 += dxh * xhat(i, j);
                        }
                        m1 *= inv_c;
                        m2 *= inv_c;
                        for (std::size_t j = 0; j < c; ++j) {
                          const double dxh = g(i, j) * gam.data[j];
                          buf(i, j) += inv_std[i] * (dxh - m1 - xhat(i, j) * m2);
                        }
                      }
                    }
                  });
}

Var group_mean_rows(Var x, std::size_t size) {
  const Var vs[] = {x};
  Tape& t = same_tape(vs, "group_mean_rows");
  require_rank2(x.value(), "group_mean_rows");
  if (size == 0 || x.rows() % size != 0) {
    throw ShapeError(fmt::format("group_mean_rows: {} rows not divisible into groups of {}", x.rows(), size));
  }
  const std::size_t groups = x.rows() / size, c = x.cols();
  const double inv = 1.0 / static_cast<double>(size);
  Tensor out(Shape{groups, c});
  for (std::size_t gi = 0; gi < groups; ++gi)
    for (std::size_t s = 0; s < size; ++s) kernels::active().axpy(inv, x.value().row(gi * size + s).data(), out.row(gi).data(), c);
  const int ix = x.id();
  return t.record(OpKind::group_mean_rows, std::move(out), {ix}, [ix, groups, size, c, inv](Tape& tp, int self) {
    const Tensor& g = tp.output_grad(self);
    Tensor& buf = tp.grad_buffer(ix);
    for (std::size_t gi = 0; gi < groups; ++gi)
      for (std::size_t s = 0; s < size; ++s) kernels::active().axpy(inv, g.row(gi).data(), buf.row(gi * size + s).data(), c);
  });
}

Var interleave_rows(std::span<const Var> parts) {
  Tape& t = same_tape(parts, "interleave_rows");
  const Shape& s0 = parts.front().shape();
  for (const Var& p : parts) {
    require_rank2(p.value(), "interleave_rows");
    if (p.shape() != s0) throw ShapeError("interleave_rows: parts differ in shape");
  }
  const std::size_t np = parts.size(), n = s0[0], c = s0[1];
  Tensor out(Shape{np * n, c});
  std::vector<int> ids;
  for (std::size_t p = 0; p < np; ++p) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto src = parts[p].value().row(i);
      std::copy(src.begin(), src.end(), out.row(i * np + p).begin());
    }
    ids.push_back(parts[p].id());
  }
  return t.record(OpKind::interleave_rows, std::move(out), ids, [ids, np, n, c](Tape& tp, int self) {
    const Tensor& g = tp.output_grad(self);
    for (std::size_t p = 0; p < np; ++p) {
      if (!tp.requires_grad(ids[p])) continue;
      Tensor& buf = tp.grad_buffer(ids[p]);
      for (std::size_t i = 0; i < n; ++i) kernels::active().axpy(1.0, g.row(i * np + p).data(), buf.row(i).data(), c);
    }
  });
}

Var strided_rows(Var x, std::size_t stride, std::size_t offset) {
  const Var vs[] = {x};
  Tape& t = same_tape(vs, "strided_rows");
  require_rank2(x.value(), "strided_rows");
  if (stride == 0 || offset >= stride || x.rows() % stride != 0) {
    throw ShapeError(fmt::format("strided_rows: stride {} offset {} invalid for {} rows", stride, offset, x.rows()));
  }
  const std::size_t n = x.rows() / stride, c = x.cols();
  Tensor out(Shape{n, c});
  for (std::size_t i = 0; i < n; ++i) {
    const auto src = x.value().row(i * stride + offset);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  const int ix = x.id();
  return t.record(OpKind::strided_rows, std::move(out), {ix}, [ix, n, c, stride, offset](Tape& tp, int self) {
    const Tensor& g = tp.output_grad(self);
    Tensor& buf = tp.grad_buffer(ix);
    for (std::size_t i = 0; i < n; ++i) kernels::active().axpy(1.0, g.row(i).data(), buf.row(i * stride + offset).data(), c);
  });
}

}  // namespace gdml
