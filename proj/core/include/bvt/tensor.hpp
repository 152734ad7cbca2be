// Dense row-major f64 tensor used by every stage of the pipeline.
#pragma once

#include <cstddef>
#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

namespace bvt {

// Thrown when tensor dimensions do not line up.
class ShapeError : public std::runtime_error {
 public:
  explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

// Thrown on invalid configuration (bad rig, bad head count, malformed files).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> dims);
  Tensor(std::vector<std::size_t> dims, std::vector<double> values);
  static Tensor full(std::vector<std::size_t> dims, double value);

  std::size_t ndim() const { return dims_.size(); }
  std::size_t dim(std::size_t i) const { return dims_[i]; }
  const std::vector<std::size_t>& dims() const { return dims_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  // Row-major flat offset of a multi-index; bounds-checked.
  template <class... Ix>
  std::size_t offset(Ix... ix) const {
    const std::size_t idx[] = {static_cast<std::size_t>(ix)...};
    constexpr std::size_t n = sizeof...(Ix);
    if (n != dims_.size()) throw ShapeError("Tensor::offset: rank mismatch");
    std::size_t off = 0;
    for (std::size_t a = 0; a < n; ++a) {
      if (idx[a] >= dims_[a]) throw ShapeError("Tensor::offset: index out of range");
      off = off * dims_[a] + idx[a];
    }
    return off;
  }
  template <class... Ix>
  double& at(Ix... ix) { return data_[offset(ix...)]; }
  template <class... Ix>
  double at(Ix... ix) const { return data_[offset(ix...)]; }

  bool same_dims(const Tensor& other) const { return dims_ == other.dims_; }
  Tensor reshaped(std::vector<std::size_t> new_dims) const;
  bool all_finite() const;

  Tensor& operator+=(const Tensor& other);
  Tensor& operator-=(const Tensor& other);
  Tensor& scale(double factor);

 private:
  std::vector<std::size_t> dims_;
  std::vector<double> data_;
};

Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);

void check_same_dims(const Tensor& a, const Tensor& b, const char* where);

double l2_norm(const Tensor& t);
double max_abs_diff(const Tensor& a, const Tensor& b);
// Bitwise equality, the comparison behind the removability and drift==0 claims.
bool bits_equal(const Tensor& a, const Tensor& b);

}  // namespace bvt
