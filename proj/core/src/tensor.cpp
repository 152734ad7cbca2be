#include "bvt/tensor.hpp"

#include <cmath>
#include <cstring>

namespace bvt {

namespace {

std::size_t checked_product(const std::vector<std::size_t>& dims) {
  if (dims.empty()) throw ShapeError("Tensor: rank must be >= 1");
  std::size_t n = 1;
  for (std::size_t d : dims) {
    if (d == 0) throw ShapeError("Tensor: zero dimension");
    n *= d;
  }
  return n;
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> dims)
    : dims_(std::move(dims)), data_(checked_product(dims_), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> dims, std::vector<double> values)
    : dims_(std::move(dims)), data_(std::move(values)) {
  if (checked_product(dims_) != data_.size())
    throw ShapeError("Tensor: dims do not match value count");
}

Tensor Tensor::full(std::vector<std::size_t> dims, double value) {
  Tensor t(std::move(dims));
  for (double& v : t.data_) v = value;
  return t;
}

Tensor Tensor::reshaped(std::vector<std::size_t> new_dims) const {
  if (checked_product(new_dims) != data_.size())
    throw ShapeError("Tensor::reshaped: element count changed");
  Tensor t;
  t.dims_ = std::move(new_dims);
  t.data_ = data_;
  return t;
}

bool Tensor::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

void check_same_dims(const Tensor& a, const Tensor& b, const char* where) {
  if (!a.same_dims(b)) throw ShapeError(std::string(where) + ": shape mismatch");
}

Tensor& Tensor::operator+=(const Tensor& other) {
  check_same_dims(*this, other, "Tensor::operator+=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Tensor& Tensor::operator-=(const Tensor& other) {
  check_same_dims(*this, other, "Tensor::operator-=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Tensor& Tensor::scale(double factor) {
  for (double& v : data_) v *= factor;
  return *this;
}

Tensor operator+(const Tensor& a, const Tensor& b) {
  Tensor out = a;
  out += b;
  return out;
}

Tensor operator-(const Tensor& a, const Tensor& b) {
  Tensor out = a;
  out -= b;
  return out;
}

double l2_norm(const Tensor& t) {
  double s = 0;
  for (std::size_t i = 0; i < t.size(); ++i) s += t[i] * t[i];
  return std::sqrt(s);
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  check_same_dims(a, b, "max_abs_diff");
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

bool bits_equal(const Tensor& a, const Tensor& b) {
  if (!a.same_dims(b)) return false;
  return std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace bvt
