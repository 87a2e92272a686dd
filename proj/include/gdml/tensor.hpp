#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace gdml {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape) noexcept;
std::string shape_str(const Shape& shape);

// Dense row-major array of doubles. Rank 0 is a scalar.
struct Tensor {
  Shape shape;
  std::vector<double> data;

  Tensor() : data(1, 0.0) {}
  explicit Tensor(Shape s, double fill = 0.0);
  Tensor(Shape s, std::vector<double> values);

  static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape, 0.0); }

  std::size_t rank() const noexcept { return shape.size(); }
  std::size_t size() const noexcept { return data.size(); }
  // Rank-2 views; rank-3 tensors report (d0*d1) x d2.
  std::size_t rows() const noexcept;
  std::size_t cols() const noexcept;

  double& operator()(std::size_t r, std::size_t c) noexcept { return data[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data[r * cols() + c]; }

  std::span<double> row(std::size_t r) noexcept { return {data.data() + r * cols(), cols()}; }
  std::span<const double> row(std::size_t r) const noexcept { return {data.data() + r * cols(), cols()}; }

  double item() const;
  Tensor reshaped(Shape s) const;
  bool all_finite() const noexcept;
};

bool bitwise_equal(const Tensor& a, const Tensor& b) noexcept;
double max_abs_diff(const Tensor& a, const Tensor& b);

Tensor transpose(const Tensor& t);
Tensor take_rows(const Tensor& t, std::span<const std::size_t> rows);

}  // namespace gdml
