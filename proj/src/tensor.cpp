#include "diffsolve/tensor.hpp"

#include <cassert>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "diffsolve/simd.hpp"

namespace diffsolve {

std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), values_(element_count(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)), values_(std::move(values)) {
  if (values_.size() != element_count(shape_)) {
    throw std::invalid_argument("tensor: " + std::to_string(values_.size()) + " values for shape " +
                                shape_to_string(shape_));
  }
}

std::size_t Tensor::offset(std::initializer_list<std::size_t> index) const {
  assert(index.size() == shape_.size());
  std::size_t off = 0;
  std::size_t axis = 0;
  for (std::size_t i : index) {
    assert(i < shape_[axis]);
    off = off * shape_[axis] + i;
    ++axis;
  }
  return off;
}

double& Tensor::at(std::initializer_list<std::size_t> index) { return values_[offset(index)]; }
double Tensor::at(std::initializer_list<std::size_t> index) const { return values_[offset(index)]; }

void Tensor::fill(double v) { std::fill(values_.begin(), values_.end(), v); }

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                                shape_to_string(b.shape()));
  }
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "max_abs_diff");
  return simd::kernels().max_abs_diff(a.values(), b.values());
}

double max_abs(const Tensor& a) {
  double m = 0.0;
  for (double v : a.values()) m = std::max(m, std::abs(v));
  return m;
}

double l2_norm(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v * v;
  return std::sqrt(s);
}

bool all_finite(const Tensor& a) { return simd::kernels().all_finite(a.values()); }

}  // namespace diffsolve
