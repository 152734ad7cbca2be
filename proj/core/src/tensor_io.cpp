#include "bvt/tensor_io.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <ostream>

namespace bvt {

namespace {

constexpr char kMagic[4] = {'B', 'V', 'T', '1'};

void put_u64_le(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(b, 8);
}

std::uint64_t get_u64_le(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

void put_u32_le(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(b, 4);
}

std::uint32_t get_u32_le(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace

void write_bvt(std::ostream& out, const Tensor& t, Dtype dtype) {
  out.write(kMagic, 4);
  const unsigned char dt = static_cast<unsigned char>(dtype);
  const unsigned char nd = static_cast<unsigned char>(t.ndim());
  out.put(static_cast<char>(dt));
  out.put(static_cast<char>(nd));
  for (std::size_t i = 0; i < t.ndim(); ++i) put_u64_le(out, t.dim(i));
  if (dtype == Dtype::F64) {
    for (std::size_t i = 0; i < t.size(); ++i)
      put_u64_le(out, std::bit_cast<std::uint64_t>(t[i]));
  } else {
    for (std::size_t i = 0; i < t.size(); ++i)
      put_u32_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(t[i])));
  }
  if (!out) throw ConfigError("write_bvt: stream write failed");
}

void write_bvt_file(const std::string& path, const Tensor& t, Dtype dtype) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("write_bvt: cannot open " + path);
  write_bvt(f, t, dtype);
}

Tensor read_bvt(std::istream& in, Dtype* dtype_out) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::string(magic, 4) != std::string(kMagic, 4))
    throw ConfigError("read_bvt: bad magic, not a BVT1 file");
  const int dt = in.get();
  const int nd = in.get();
  if (dt != 0 && dt != 1) throw ConfigError("read_bvt: unknown dtype byte");
  if (nd <= 0) throw ConfigError("read_bvt: bad rank");
  std::vector<std::size_t> dims(static_cast<std::size_t>(nd));
  std::size_t total = 1;
  for (auto& d : dims) {
    d = static_cast<std::size_t>(get_u64_le(in));
    if (d == 0) throw ConfigError("read_bvt: zero dimension");
    total *= d;
  }
  std::vector<double> values(total);
  if (dt == 1) {
    for (auto& v : values) v = std::bit_cast<double>(get_u64_le(in));
  } else {
    for (auto& v : values) v = static_cast<double>(std::bit_cast<float>(get_u32_le(in)));
  }
  if (!in) throw ConfigError("read_bvt: truncated payload");
  if (dtype_out) *dtype_out = static_cast<Dtype>(dt);
  return Tensor(std::move(dims), std::move(values));
}

Tensor read_bvt_file(const std::string& path, Dtype* dtype_out) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("read_bvt: cannot open " + path);
  return read_bvt(f, dtype_out);
}

}  // namespace bvt
