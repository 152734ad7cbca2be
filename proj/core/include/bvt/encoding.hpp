// Reference positional encodings: Fourier encoding of polar coordinates,
// per-pixel encodings aggregated over depth-binned reference points with
// learned coefficients, sparse-query and BEV-query variants, and the width
// variant aggregated by a per-column height distribution.
#pragma once

#include <cstdint>
#include <vector>

#include "bvt/camera.hpp"
#include "bvt/nn.hpp"
#include "bvt/tensor.hpp"

namespace bvt {

struct FeatureVolume;  // width.hpp
struct BevGrid;        // decoder.hpp

// Geometric frequency ladder omega_k = 2^k * pi, k = 0..bands-1; each scalar
// maps to [sin(w0 x), cos(w0 x), ..., sin(w_{L-1} x), cos(w_{L-1} x)].
struct FourierEncoder {
  int bands = 8;
  std::size_t dim() const { return 2 * static_cast<std::size_t>(bands); }
};

// Scalars are divided by these before the Fourier map to keep the first
// bands well-conditioned over the working range.
struct EncodingScales {
  double d_div = 60.0;
  double z_div = 10.0;
};

std::vector<double> fourier(double x, const FourierEncoder& enc);

// Concat of encoded (d, sin, cos) plus z when include_height. Length
// 6*bands or 8*bands.
std::vector<double> reference_pe(const PolarCoord& coord, bool include_height,
                                 const FourierEncoder& enc,
                                 const EncodingScales& scales = {});

std::size_t reference_pe_dim(bool include_height, const FourierEncoder& enc);

enum class EncodingKind { Pixel, Width, Query, Bev };

struct EncodingSet {
  EncodingKind kind = EncodingKind::Pixel;
  Tensor values;  // leading dims match the encoded objects, trailing dim C
};

// Per-pixel reference coefficients s, (n_cameras, h, w, depth_bins);
// every (camera, pixel) slice sums to 1.
struct ReferenceCoefficients {
  Tensor s;
};

// Per-column height distribution t, (n_cameras, w, h); every column sums to 1.
struct HeightDistribution {
  Tensor t;
};

void validate_coefficients(const ReferenceCoefficients& c, double tol = 1e-6);
void validate_height_distribution(const HeightDistribution& d, double tol = 1e-6);

// Predictor heads. Both run a small per-pixel MLP over the channel axis and
// normalize with a softmax, which is what enforces the sum-to-1 invariants.
ReferenceCoefficients predict_coefficients(const FeatureVolume& feat, const Mlp& head,
                                           std::uint64_t* macs = nullptr);
HeightDistribution predict_height_distribution(const FeatureVolume& feat, const Mlp& head,
                                               std::uint64_t* macs = nullptr);

// Feature-pixel centers: pixel (row i, col j) sits at (u, v) = (j+0.5, i+0.5).
inline double pixel_u(std::size_t j) { return static_cast<double>(j) + 0.5; }
inline double pixel_v(std::size_t i) { return static_cast<double>(i) + 0.5; }

// Pre-MLP pixel encodings: lift -> project -> polar -> Fourier per depth bin,
// aggregated with the reference coefficients. Shape (n, h, w, pe_dim).
Tensor pixel_refpe_premlp(const FeatureVolume& feat, const CameraRig& rig,
                          const DepthBins& bins, const ReferenceCoefficients& coeffs,
                          bool include_height, const FourierEncoder& enc,
                          const EncodingScales& scales = {},
                          std::uint64_t* macs = nullptr);

// Full per-pixel encoding; output shape equals the feature volume's
// (n, h, w, C) with C = agg_mlp output dim.
EncodingSet pixel_refpe(const FeatureVolume& feat, const CameraRig& rig,
                        const DepthBins& bins, const ReferenceCoefficients& coeffs,
                        const Mlp& agg_mlp, bool include_height,
                        const FourierEncoder& enc, const EncodingScales& scales = {},
                        std::uint64_t* macs = nullptr);

// Encoding of a sparse 3D query anchor; always includes the height term.
Tensor query_refpe(const Vec3& anchor, const Mlp& mlp, const FourierEncoder& enc,
                   const EncodingScales& scales = {});

// BEV query vectors from grid cell centers; no height term. (h_b, w_b, C).
EncodingSet bev_query_pe(const BevGrid& grid, const Mlp& mlp, const FourierEncoder& enc,
                         const EncodingScales& scales = {},
                         std::uint64_t* macs = nullptr);

// Column aggregation of height-free pixel encodings by the height
// distribution, before the MLP. Shape (n, w, pe_dim).
Tensor width_refpe_premlp(const FeatureVolume& feat, const CameraRig& rig,
                          const DepthBins& bins, const ReferenceCoefficients& coeffs,
                          const HeightDistribution& heights, const FourierEncoder& enc,
                          const EncodingScales& scales = {},
                          std::uint64_t* macs = nullptr);

// Width-feature encoding, (n, w, C). Height never enters: the per-point
// encodings drop z before both aggregations.
EncodingSet width_refpe(const FeatureVolume& feat, const CameraRig& rig,
                        const DepthBins& bins, const ReferenceCoefficients& coeffs,
                        const HeightDistribution& heights, const Mlp& agg_mlp,
                        const FourierEncoder& enc, const EncodingScales& scales = {},
                        std::uint64_t* macs = nullptr);

}  // namespace bvt
