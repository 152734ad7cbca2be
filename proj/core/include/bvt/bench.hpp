// Stage benchmarks: exact MAC counts (deterministic integers) plus advisory
// wall-clock medians per size setting.
#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "bvt/pipeline.hpp"

namespace bvt {

struct BenchSize {
  std::size_t h_i = 16;
  std::size_t w_i = 44;
  std::size_t c = 64;
  std::size_t h_b = 32;
};

// Mirrors the input-resolution sweep at feature stride 16 with a square
// desk-scale BEV grid.
std::vector<BenchSize> default_bench_sizes();

// "HxWxCxB" tokens, e.g. "16x44x64x32".
BenchSize parse_bench_size(const std::string& token);

struct BenchRow {
  std::string stage;  // pool | refine | pe | decoder | decoder_full
  BenchSize size;
  std::uint64_t macs;
  double ms_median;
};

struct BenchResult {
  std::vector<BenchRow> rows;
  // Per size setting: key/value cardinality of the width decoder vs the
  // full-feature oracle. full / width == h_i exactly.
  struct KvCounts {
    BenchSize size;
    std::uint64_t width_kv;
    std::uint64_t full_kv;
  };
  std::vector<KvCounts> kv;
};

BenchResult run_bench(const std::vector<BenchSize>& sizes, std::size_t repeats,
                      std::uint64_t seed);

// Header: stage,h_i,w_i,c,h_b,macs,ms_median
void write_bench_csv(std::ostream& out, const BenchResult& result);

}  // namespace bvt
