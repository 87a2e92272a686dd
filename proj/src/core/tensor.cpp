#include "gdml/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <numeric>

#include <fmt/format.h>

#include "gdml/error.hpp"

namespace gdml {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::shape: return "shape";
    case ErrorKind::contract: return "contract";
    case ErrorKind::config: return "config";
    case ErrorKind::data: return "data";
    case ErrorKind::numeric: return "numeric";
    case ErrorKind::io: return "io";
  }
  return "unknown";
}

std::size_t shape_size(const Shape& shape) noexcept {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

Tensor::Tensor(Shape s, double fill) : shape(std::move(s)), data(shape_size(shape), fill) {}

Tensor::Tensor(Shape s, std::vector<double> values) : shape(std::move(s)), data(std::move(values)) {
  if (data.size() != shape_size(shape)) {
    throw ShapeError(fmt::format("tensor of shape {} given {} values", shape_str(shape), data.size()));
  }
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  Tensor t(Shape{r, c});
  std::size_t i = 0;
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("ragged matrix literal");
    for (double v : row) t.data[i++] = v;
  }
  return t;
}

std::size_t Tensor::rows() const noexcept {
  switch (shape.size()) {
    case 0: return 1;
    case 1: return 1;
    case 2: return shape[0];
    default: return shape_size(shape) / shape.back();
  }
}

std::size_t Tensor::cols() const noexcept { return shape.empty() ? 1 : shape.back(); }

double Tensor::item() const {
  if (data.size() != 1) throw ShapeError(fmt::format("item() on tensor of shape {}", shape_str(shape)));
  return data[0];
}

Tensor Tensor::reshaped(Shape s) const {
  if (shape_size(s) != data.size()) {
    throw ShapeError(fmt::format("cannot reshape {} to {}", shape_str(shape), shape_str(s)));
  }
  return Tensor(std::move(s), data);
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); });
}

bool bitwise_equal(const Tensor& a, const Tensor& b) noexcept {
  return a.shape == b.shape &&
         std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(double)) == 0;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape != b.shape) {
    throw ShapeError(fmt::format("max_abs_diff: {} vs {}", shape_str(a.shape), shape_str(b.shape)));
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

Tensor transpose(const Tensor& t) {
  if (t.rank() != 2) throw ShapeError(fmt::format("transpose needs rank 2, got {}", shape_str(t.shape)));
  Tensor out(Shape{t.shape[1], t.shape[0]});
  for (std::size_t i = 0; i < t.shape[0]; ++i)
    for (std::size_t j = 0; j < t.shape[1]; ++j) out(j, i) = t(i, j);
  return out;
}

Tensor take_rows(const Tensor& t, std::span<const std::size_t> rows) {
  if (t.rank() == 0) throw ShapeError("take_rows on a scalar");
  const std::size_t stride = t.size() / t.shape[0];
  Shape s = t.shape;
  s[0] = rows.size();
  Tensor out(s);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= t.shape[0]) throw ShapeError(fmt::format("take_rows index {} >= {}", rows[i], t.shape[0]));
    std::copy_n(t.data.begin() + static_cast<std::ptrdiff_t>(rows[i] * stride), stride,
                out.data.begin() + static_cast<std::ptrdiff_t>(i * stride));
  }
  return out;
}

}  // namespace gdml
