// Single-layer BEV decoder: BEV queries cross-attend to width features,
// no self-attention among queries. A dense full-feature attention path is
// kept as the uncompressed oracle for gap and cost comparisons.
#pragma once

#include <cstdint>

#include "bvt/encoding.hpp"
#include "bvt/nn.hpp"
#include "bvt/tensor.hpp"
#include "bvt/width.hpp"

namespace bvt {

struct BevGrid {
  std::size_t h_b = 0, w_b = 0;
  double range_m = 0;   // half extent; cells span [-range, range] per axis
  Tensor centers;       // (h_b, w_b, 2) ego-frame (x, y) cell centers
  Tensor features;      // (h_b, w_b, c) once transformed; empty before

  std::size_t cells() const { return h_b * w_b; }
};

// Cell centers at ((i - (h-1)/2) * 2*range/h, (j - (w-1)/2) * 2*range/w):
// symmetric about the origin with uniform spacing.
BevGrid make_grid(std::size_t h_b, std::size_t w_b, double range_m);

struct DecoderParams {
  MhaParams attn;
  Mlp ffn;
  LayerNorm norm_attn, norm_ffn;
  bool use_norm = true;  // false reproduces the plain residual equations

  static DecoderParams init(Rng& rng, std::size_t c, std::size_t heads,
                            std::size_t ffn_hidden);
};

struct DecoderMacs {
  MhaMacs attn;
  std::uint64_t ffn = 0;
  std::uint64_t kv_count = 0;  // attention key/value cardinality actually used
  std::uint64_t total() const { return attn.total() + ffn; }
};

struct TransformCache {
  Tensor queries;   // (nq, c) flattened BEV queries
  Tensor keys;      // (nk, c) features + positional encodings
  Tensor values;    // (nk, c)
  MhaCache attn;
  Tensor u;         // after attention residual (+ norm)
  LayerNormCache norm_attn;
  MlpCache ffn;
  LayerNormCache norm_ffn;
};

struct DecoderGrads {
  MhaGrads attn;
  MlpGrads ffn;
  LayerNormGrads norm_attn, norm_ffn;
};

// U = Q + MHA(Q, F_w + PE_w, F_w); F = U + FFN(U); post-norm after each
// residual when use_norm. Keys/values are all cameras' width features
// flattened into one pool. Returns (h_b, w_b, c).
Tensor transform(const WidthFeatures& width, const EncodingSet& width_pe,
                 const EncodingSet& bev_queries, const DecoderParams& params,
                 TransformCache* cache = nullptr, DecoderMacs* macs = nullptr);

// Same equations with every image pixel as a key/value; the H_I-times-larger
// attention pool the width path compresses away.
Tensor transform_full_oracle(const FeatureVolume& feat, const EncodingSet& pixel_pe,
                             const EncodingSet& bev_queries, const DecoderParams& params,
                             DecoderMacs* macs = nullptr);

// Gradients w.r.t. decoder params plus the flattened query / width-feature /
// width-PE inputs (any of the three out-tensors may be null).
void transform_backward(const DecoderParams& params, const TransformCache& cache,
                        const Tensor& dy, DecoderGrads& grads,
                        Tensor* dqueries, Tensor* dwidth, Tensor* dwidth_pe);
DecoderGrads make_zero_grads(const DecoderParams& p);

// Closed-form total MAC count of the decoder at the given sizes (projections,
// scores, values and FFN), for checking the measured counters.
std::uint64_t decoder_cost(std::size_t n_q, std::size_t n_k, std::size_t c,
                           std::size_t ffn_hidden);

}  // namespace bvt
