#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace gedlab {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major array of doubles. Shape {} is a scalar.
struct Tensor {
  Shape shape;
  std::vector<double> data;
  bool requires_grad = false;
  std::vector<double> grad;  // empty until a backward pass reaches this tensor

  Tensor() = default;
  Tensor(Shape s, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape s, bool requires_grad = false);
  static Tensor filled(Shape s, double value, bool requires_grad = false);
  static Tensor scalar(double value);

  std::size_t numel() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  double& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

  bool has_grad() const { return !grad.empty(); }
  void zero_grad();
  bool all_finite() const;
};

}  // namespace gedlab
