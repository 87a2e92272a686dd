#include <algorithm>
#include <cmath>
#include <vector>

#include <fmt/format.h>

#include "gdml/error.hpp"
#include "gdml/kernels.hpp"
#include "gdml/ops.hpp"
#include "ops_detail.hpp"

namespace gdml {

namespace {

struct Layout {
  std::size_t batch, seq, heads, dh, d;
};

Layout check_layout(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t seq_len, std::size_t heads) {
  detail::require_rank2(q, "attention");
  if (k.shape != q.shape || v.shape != q.shape) {
    throw ShapeError(fmt::format("attention: q {} k {} v {} must match", shape_str(q.shape), shape_str(k.shape),
                                 shape_str(v.shape)));
  }
  const std::size_t rows = q.rows(), d = q.cols();
  if (seq_len == 0 || rows % seq_len != 0) {
    throw ShapeError(fmt::format("attention: {} rows is not a whole number of length-{} sequences", rows, seq_len));
  }
  if (heads == 0 || d % heads != 0) throw ShapeError(fmt::format("attention: width {} not divisible by {} heads", d, heads));
  return {rows / seq_len, seq_len, heads, d / heads, d};
}

// Copies the [seq x dh] block of sequence b, head h into dst.
void gather(const Tensor& src, const Layout& l, std::size_t b, std::size_t h, std::vector<double>& dst) {
  dst.resize(l.seq * l.dh);
  for (std::size_t i = 0; i < l.seq; ++i) {
    const double* row = src.data.data() + (b * l.seq + i) * l.d + h * l.dh;
    std::copy_n(row, l.dh, dst.data() + i * l.dh);
  }
}

void scatter_add(Tensor& dst, const Layout& l, std::size_t b, std::size_t h, const std::vector<double>& src) {
  for (std::size_t i = 0; i < l.seq; ++i) {
    double* row = dst.data.data() + (b * l.seq + i) * l.d + h * l.dh;
    for (std::size_t j = 0; j < l.dh; ++j) row[j] += src[i * l.dh + j];
  }
}

void softmax_inplace(double* row, std::size_t n) {
  const double mx = *std::max_element(row, row + n);
  double z = 0.0;
  for (std::size_t j = 0; j < n; ++j) z += (row[j] = std::exp(row[j] - mx));
  for (std::size_t j = 0; j < n; ++j) row[j] /= z;
}

// Probabilities for every (sequence, head) block, laid out as documented in ops.hpp.
Tensor probabilities(const Tensor& q, const Tensor& k, const Layout& l) {
  const auto& kern = kernels::active();
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(l.dh));
  Tensor probs(Shape{l.batch * l.heads * l.seq, l.seq});
  std::vector<double> qh, kh;
  for (std::size_t b = 0; b < l.batch; ++b) {
    for (std::size_t h = 0; h < l.heads; ++h) {
      gather(q, l, b, h, qh);
      gather(k, l, b, h, kh);
      double* p = probs.data.data() + (b * l.heads + h) * l.seq * l.seq;
      kern.gemm_nt(l.seq, l.seq, l.dh, qh.data(), kh.data(), p);
      for (std::size_t i = 0; i < l.seq; ++i) {
        for (std::size_t j = 0; j < l.seq; ++j) p[i * l.seq + j] *= inv_sqrt;
        softmax_inplace(p + i * l.seq, l.seq);
      }
    }
  }
  return probs;
}

}  // namespace

Tensor attention_weights(const Tensor& q, const Tensor& k, std::size_t seq_len, std::size_t heads) {
  const Layout l = check_layout(q, k, k, seq_len, heads);
  return probabilities(q, k, l);
}

Var attention(Var q, Var k, Var v, std::size_t seq_len, std::size_t heads) {
  const Var vs[] = {q, k, v};
  Tape& t = detail::same_tape(vs, "attention");
  const Layout l = check_layout(q.value(), k.value(), v.value(), seq_len, heads);
  Tensor probs = probabilities(q.value(), k.value(), l);

  const auto& kern = kernels::active();
  Tensor out(q.shape());
  std::vector<double> vh, oh;
  for (std::size_t b = 0; b < l.batch; ++b) {
    for (std::size_t h = 0; h < l.heads; ++h) {
      gather(v.value(), l, b, h, vh);
      oh.assign(l.seq * l.dh, 0.0);
      const double* p = probs.data.data() + (b * l.heads + h) * l.seq * l.seq;
      kern.gemm_nn(l.seq, l.dh, l.seq, p, vh.data(), oh.data());
      scatter_add(out, l, b, h, oh);
    }
  }

  const int iq = q.id(), ik = k.id(), iv = v.id();
  return t.record(
      OpKind::attention, std::move(out), {iq, ik, iv}, [iq, ik, iv, l, probs = std::move(probs)](Tape& tp, int self) {
        const auto& kr = kernels::active();
        const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(l.dh));
        const Tensor& g = tp.output_grad(self);
        const Tensor& qv = tp.value(iq);
        const Tensor& kv = tp.value(ik);
        const Tensor& vv = tp.value(iv);
        std::vector<double> gh, qh, kh, vh, dp, dq, dk, dv;
        for (std::size_t b = 0; b < l.batch; ++b) {
          for (std::size_t h = 0; h < l.heads; ++h) {
            const double* p = probs.data.data() + (b * l.heads + h) * l.seq * l.seq;
            gather(g, l, b, h, gh);
            gather(vv, l, b, h, vh);
            if (tp.requires_grad(iv)) {
              dv.assign(l.seq * l.dh, 0.0);
              kr.gemm_tn(l.seq, l.dh, l.seq, p, gh.data(), dv.data());
              scatter_add(tp.grad_buffer(iv), l, b, h, dv);
            }
            if (!tp.requires_grad(iq) && !tp.requires_grad(ik)) continue;
            // dS = P * (dP - rowsum(dP * P)), then scaled back through 1/sqrt(dh).
            dp.assign(l.seq * l.seq, 0.0);
            kr.gemm_nt(l.seq, l.seq, l.dh, gh.data(), vh.data(), dp.data());
            for (std::size_t i = 0; i < l.seq; ++i) {
              double s = 0.0;
              for (std::size_t j = 0; j < l.seq; ++j) s += dp[i * l.seq + j] * p[i * l.seq + j];
              for (std::size_t j = 0; j < l.seq; ++j) {
                dp[i * l.seq + j] = p[i * l.seq + j] * (dp[i * l.seq + j] - s) * inv_sqrt;
              }
            }
            if (tp.requires_grad(iq)) {
              gather(kv, l, b, h, kh);
              dq.assign(l.seq * l.dh, 0.0);
              kr.gemm_nn(l.seq, l.dh, l.seq, dp.data(), kh.data(), dq.data());
              scatter_add(tp.grad_buffer(iq), l, b, h, dq);
            }
            if (tp.requires_grad(ik)) {
              gather(qv, l, b, h, qh);
              dk.assign(l.seq * l.dh, 0.0);
              kr.gemm_tn(l.seq, l.dh, l.seq, dp.data(), qh.data(), dk.data());
              scatter_add(tp.grad_buffer(ik), l, b, h, dk);
            }
          }
        }
      });
}

}  // namespace gdml
