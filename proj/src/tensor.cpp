#include "gedlab/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "gedlab/errors.hpp"

namespace gedlab {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape s, std::vector<double> values, bool rg)
    : shape(std::move(s)), data(std::move(values)), requires_grad(rg) {
  for (std::size_t d : shape) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_str(shape));
  }
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("shape " + shape_str(shape) + " needs " +
                         std::to_string(shape_numel(shape)) + " values, got " +
                         std::to_string(data.size()));
  }
}

Tensor Tensor::zeros(Shape s, bool rg) { return filled(std::move(s), 0.0, rg); }

Tensor Tensor::filled(Shape s, double value, bool rg) {
  const std::size_t n = shape_numel(s);
  return Tensor(std::move(s), std::vector<double>(n, value), rg);
}

Tensor Tensor::scalar(double value) { return Tensor({}, {value}); }

std::size_t Tensor::rows() const {
  if (shape.size() != 2) throw DimensionError("expected a matrix, got " + shape_str(shape));
  return shape[0];
}

std::size_t Tensor::cols() const {
  if (shape.size() != 2) throw DimensionError("expected a matrix, got " + shape_str(shape));
  return shape[1];
}

void Tensor::zero_grad() {
  if (requires_grad) {
    grad.assign(data.size(), 0.0);
  } else {
    grad.clear();
  }
}

bool Tensor::all_finite() const {
  return std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace gedlab
