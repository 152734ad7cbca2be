// Vertical feature compression and the refinement decoder that lets each
// width feature recover information from its own image column.
#pragma once

#include <cstdint>
#include <vector>

#include "bvt/nn.hpp"
#include "bvt/tensor.hpp"

namespace bvt {

// Multi-view image features, (n_cameras, h, w, c).
struct FeatureVolume {
  Tensor data;

  std::size_t cameras() const { return data.dim(0); }
  std::size_t height() const { return data.dim(1); }
  std::size_t width() const { return data.dim(2); }
  std::size_t channels() const { return data.dim(3); }
};

// One vector per image column, (n_cameras, w, c).
struct WidthFeatures {
  Tensor data;

  std::size_t cameras() const { return data.dim(0); }
  std::size_t width() const { return data.dim(1); }
  std::size_t channels() const { return data.dim(2); }
};

// Max over the height axis per (camera, column, channel).
WidthFeatures height_maxpool(const FeatureVolume& feat);

struct RefineParams {
  MhaParams self_attn;
  MhaParams cross_attn;
  Mlp ffn;
  LayerNorm norm_self, norm_cross, norm_ffn;
  bool use_norm = true;

  static RefineParams init(Rng& rng, std::size_t c, std::size_t heads,
                           std::size_t ffn_hidden);
};

struct RefineMacs {
  MhaMacs self;
  MhaMacs cross;
  std::uint64_t ffn = 0;
  std::uint64_t total() const { return self.total() + cross.total() + ffn; }
};

struct RefineCameraCache {
  Tensor w0;                        // input width features of this camera
  MhaCache self;
  Tensor r1;                        // after self residual (+ norm)
  LayerNormCache norm_self;
  std::vector<MhaCache> cross;      // one per column
  Tensor r2;                        // after cross residual (+ norm)
  LayerNormCache norm_cross;
  MlpCache ffn;
  LayerNormCache norm_ffn;
};

struct RefineCache {
  std::vector<RefineCameraCache> cameras;
};

struct RefineGrads {
  MhaGrads self_attn;
  MhaGrads cross_attn;
  MlpGrads ffn;
  LayerNormGrads norm_self, norm_cross, norm_ffn;
};

// Per camera: self-attention across the w columns, then cross-attention of
// column j against the h pixels of image column j only, then FFN; residual
// connections with post-norm after each stage (norms skippable).
WidthFeatures refine(const WidthFeatures& width, const FeatureVolume& feat,
                     const RefineParams& params, RefineCache* cache = nullptr,
                     RefineMacs* macs = nullptr);

void refine_backward(const WidthFeatures& width, const FeatureVolume& feat,
                     const RefineParams& params, const RefineCache& cache,
                     const Tensor& dy, RefineGrads& grads,
                     Tensor* dwidth, Tensor* dfeat);
RefineGrads make_zero_grads(const RefineParams& p);

// Closed-form multiply-accumulate counts of the two attention stages per
// camera: score and value matmuls only, projections excluded. self = 2*w^2*c,
// cross = 2*w*h*c, which is the O(W^2) + O(WH) scaling claim in countable form.
struct RefineCost {
  std::uint64_t self_macs = 0;
  std::uint64_t cross_macs = 0;
};

RefineCost refine_cost(std::size_t w, std::size_t h, std::size_t c);

// Cost stub for the convolutional refinement alternative (not implemented
// here): `layers` 1D convs of kernel `k` over the w axis at channel dim c,
// w*c*c*k MACs each. Linear in w where the attention refiner's self stage is
// quadratic; used for cost comparisons only.
std::uint64_t conv_refine_cost(std::size_t w, std::size_t c, std::size_t k,
                               std::size_t layers = 2);

}  // namespace bvt
