// Neural building blocks: linear, MLP (ReLU between layers), softmax,
// layer normalization and multi-head attention, each with a hand-written
// backward pass. Optional counters record exact multiply-accumulate counts.
#pragma once

#include <cstdint>
#include <vector>

#include "bvt/rng.hpp"
#include "bvt/tensor.hpp"

namespace bvt {

// --------------------------------------------------------------------------
// matmul / softmax / relu

// a: (m, k) x b: (k, n) -> (m, n). Adds m*k*n to *macs when given.
Tensor matmul(const Tensor& a, const Tensor& b, std::uint64_t* macs = nullptr);

// Numerically stable softmax (max subtraction) along `axis`.
Tensor softmax(const Tensor& x, std::size_t axis);

Tensor relu(const Tensor& x);

// --------------------------------------------------------------------------
// Linear layer: y = x W^T + b, W: (out, in), b: (out), x rows are vectors.

struct LinearLayer {
  Tensor weight;  // (out, in)
  Tensor bias;    // (out)

  static LinearLayer init(Rng& rng, std::size_t out, std::size_t in);
  std::size_t in_dim() const { return weight.dim(1); }
  std::size_t out_dim() const { return weight.dim(0); }
};

struct LinearGrads {
  Tensor weight;
  Tensor bias;
};

Tensor linear_forward(const Tensor& x, const LinearLayer& layer,
                      std::uint64_t* macs = nullptr);
// dx may be null when the input gradient is not needed.
void linear_backward(const Tensor& x, const LinearLayer& layer, const Tensor& dy,
                     LinearGrads& grads, Tensor* dx);

// --------------------------------------------------------------------------
// MLP: affine layers with ReLU between them (none after the last).

struct Mlp {
  std::vector<LinearLayer> layers;

  static Mlp init(Rng& rng, const std::vector<std::size_t>& dims);
  std::size_t in_dim() const { return layers.front().in_dim(); }
  std::size_t out_dim() const { return layers.back().out_dim(); }
};

struct MlpCache {
  std::vector<Tensor> inputs;    // input of each layer
  std::vector<Tensor> pre_act;   // affine output of each layer (pre-ReLU)
};

struct MlpGrads {
  std::vector<LinearGrads> layers;
};

// x: (..., in) applied rowwise; output (..., out).
Tensor mlp_forward(const Mlp& m, const Tensor& x, MlpCache* cache = nullptr,
                   std::uint64_t* macs = nullptr);
void mlp_backward(const Mlp& m, const MlpCache& cache, const Tensor& dy,
                  MlpGrads& grads, Tensor* dx);
MlpGrads make_zero_grads(const Mlp& m);

// --------------------------------------------------------------------------
// Layer normalization over the trailing axis.

struct LayerNorm {
  Tensor gain;   // (c)
  Tensor shift;  // (c)
  double eps = 1e-6;

  static LayerNorm init(std::size_t c, double eps = 1e-6);
};

struct LayerNormCache {
  Tensor normalized;  // x_hat, same shape as input
  Tensor inv_std;     // one value per row
};

struct LayerNormGrads {
  Tensor gain;
  Tensor shift;
};

Tensor layer_norm(const Tensor& x, const LayerNorm& ln, LayerNormCache* cache = nullptr);
void layer_norm_backward(const LayerNorm& ln, const LayerNormCache& cache, const Tensor& dy,
                         LayerNormGrads& grads, Tensor* dx);

// --------------------------------------------------------------------------
// Multi-head attention. q: (nq, c), k/v: (nk, c), c % heads == 0.
// Per-head scaled dot-product with 1/sqrt(c/heads), concat, output projection.

struct MhaParams {
  LinearLayer wq, wk, wv, wo;
  std::size_t heads = 1;

  static MhaParams init(Rng& rng, std::size_t c, std::size_t heads);
};

// proj: the four projection matmuls; attn: score and value matmuls (2*nq*nk*c).
struct MhaMacs {
  std::uint64_t proj = 0;
  std::uint64_t attn = 0;
  std::uint64_t total() const { return proj + attn; }
};

struct MhaCache {
  Tensor qp, kp, vp;   // projected inputs
  Tensor attn;         // (heads, nq, nk) attention rows, each summing to 1
  Tensor concat;       // (nq, c) concatenated head outputs
};

struct MhaGrads {
  LinearGrads wq, wk, wv, wo;
};

Tensor mha(const Tensor& query, const Tensor& key, const Tensor& value,
           const MhaParams& params, MhaCache* cache = nullptr, MhaMacs* macs = nullptr);
// dq/dk/dv may be null individually.
void mha_backward(const Tensor& query, const Tensor& key, const Tensor& value,
                  const MhaParams& params, const MhaCache& cache, const Tensor& dy,
                  MhaGrads& grads, Tensor* dq, Tensor* dk, Tensor* dv);
MhaGrads make_zero_grads(const MhaParams& p);

}  // namespace bvt
