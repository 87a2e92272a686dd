#pragma once

#include <cstddef>
#include <span>

#include "gdml/tape.hpp"

// Differentiable operations on tape variables. Matrix ops take rank-2 inputs;
// elementwise ops require identical shapes. Gradients are exercised against
// central differences in tests/unit/ops_test.cpp.
namespace gdml {

inline constexpr double kGeluTanhCoeff = 0.7978845608028654;  // sqrt(2/pi)

enum class ZeroRowPolicy { error, epsilon_guard };
inline constexpr double kNormalizeEpsilon = 1e-12;

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var neg(Var a);
Var scale(Var a, double c);
Var add_scalar(Var a, double c);
// x[r x c] + row[c] broadcast over rows; row may be rank 1 or 1 x c.
Var add_row(Var x, Var row);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator/(Var a, Var b) { return div(a, b); }
inline Var operator-(Var a) { return neg(a); }
inline Var operator*(double c, Var a) { return scale(a, c); }

Var matmul(Var a, Var b);
// a * b^T without materialising the transpose.
Var matmul_nt(Var a, Var b);
Var transpose(Var x);

// Row-max subtracted; NaN inputs propagate.
Var softmax_rows(Var x);
Var log_softmax_rows(Var x);

// Tanh approximation: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))).
Var gelu(Var x);
// Identity in eval mode or at rate 0; otherwise survivors are scaled by 1/(1-rate).
Var dropout(Var x, double rate, Rng& rng);
Var l2_normalize_rows(Var x, ZeroRowPolicy policy = ZeroRowPolicy::error);
Var log(Var x);
Var exp(Var x);

Var sum(Var x);
Var mean(Var x);

Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);

Var layer_norm_rows(Var x, Var gamma, Var beta, double eps = 1e-5);

// [groups*size x d] -> [groups x d], mean over each run of `size` rows.
Var group_mean_rows(Var x, std::size_t size);
// P inputs of [n x d] -> [P*n x d] with output row i*P + p taken from parts[p] row i.
Var interleave_rows(std::span<const Var> parts);
// Rows offset, offset+stride, ... of x; x.rows() must be a multiple of stride.
Var strided_rows(Var x, std::size_t stride, std::size_t offset);

// Scaled dot-product multi-head attention over independent sequences.
// q, k, v are [batch*seq_len x d]; heads split d evenly. No projections.
Var attention(Var q, Var k, Var v, std::size_t seq_len, std::size_t heads);
// Forward-only attention probabilities, [batch*heads*seq_len x seq_len],
// row ((b*heads)+h)*seq_len + i holds query i of sequence b, head h.
Tensor attention_weights(const Tensor& q, const Tensor& k, std::size_t seq_len, std::size_t heads);

}  // namespace gdml
