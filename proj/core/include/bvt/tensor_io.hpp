// BVT1 binary tensor dumps: magic "BVT1", dtype byte (0=f32, 1=f64),
// ndim byte, ndim little-endian u64 dims, then the row-major payload.
#pragma once

#include <iosfwd>
#include <string>

#include "bvt/tensor.hpp"

namespace bvt {

enum class Dtype : unsigned char { F32 = 0, F64 = 1 };

void write_bvt(std::ostream& out, const Tensor& t, Dtype dtype = Dtype::F64);
void write_bvt_file(const std::string& path, const Tensor& t, Dtype dtype = Dtype::F64);

// f32 payloads are widened to f64 on load; *dtype_out reports what was stored.
Tensor read_bvt(std::istream& in, Dtype* dtype_out = nullptr);
Tensor read_bvt_file(const std::string& path, Dtype* dtype_out = nullptr);

}  // namespace bvt
