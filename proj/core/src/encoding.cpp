#include "bvt/encoding.hpp"

#include <cmath>
#include <numbers>

#include "bvt/decoder.hpp"
#include "bvt/width.hpp"

namespace bvt {

namespace {

// Writes [sin(w0 x), cos(w0 x), ...] into out; w_k = 2^k * pi.
void fourier_into(double* out, double x, const FourierEncoder& enc) {
  double omega = std::numbers::pi;
  for (int k = 0; k < enc.bands; ++k) {
    out[2 * k] = std::sin(omega * x);
    out[2 * k + 1] = std::cos(omega * x);
    omega *= 2.0;
  }
}

void reference_pe_into(double* out, const PolarCoord& coord, bool include_height,
                       const FourierEncoder& enc, const EncodingScales& scales) {
  const std::size_t block = enc.dim();
  fourier_into(out, coord.d / scales.d_div, enc);
  fourier_into(out + block, coord.sin_theta, enc);
  fourier_into(out + 2 * block, coord.cos_theta, enc);
  if (include_height) fourier_into(out + 3 * block, coord.z / scales.z_div, enc);
}

}  // namespace

std::vector<double> fourier(double x, const FourierEncoder& enc) {
  if (enc.bands <= 0) throw ConfigError("FourierEncoder: bands must be positive");
  std::vector<double> out(enc.dim());
  fourier_into(out.data(), x, enc);
  return out;
}

std::size_t reference_pe_dim(bool include_height, const FourierEncoder& enc) {
  return (include_height ? 4 : 3) * enc.dim();
}

std::vector<double> reference_pe(const PolarCoord& coord, bool include_height,
                                 const FourierEncoder& enc, const EncodingScales& scales) {
  if (enc.bands <= 0) throw ConfigError("FourierEncoder: bands must be positive");
  std::vector<double> out(reference_pe_dim(include_height, enc));
  reference_pe_into(out.data(), coord, include_height, enc, scales);
  return out;
}

void validate_coefficients(const ReferenceCoefficients& c, double tol) {
  if (c.s.ndim() != 4) throw ShapeError("ReferenceCoefficients: expects (n, h, w, d)");
  const std::size_t d = c.s.dim(3);
  const std::size_t slices = c.s.size() / d;
  for (std::size_t p = 0; p < slices; ++p) {
    double sum = 0;
    for (std::size_t k = 0; k < d; ++k) {
      const double v = c.s[p * d + k];
      if (v < 0) throw ConfigError("ReferenceCoefficients: negative coefficient");
      sum += v;
    }
    if (std::fabs(sum - 1.0) > tol)
      throw ConfigError("ReferenceCoefficients: slice does not sum to 1");
  }
}

void validate_height_distribution(const HeightDistribution& dist, double tol) {
  if (dist.t.ndim() != 3) throw ShapeError("HeightDistribution: expects (n, w, h)");
  const std::size_t h = dist.t.dim(2);
  const std::size_t cols = dist.t.size() / h;
  for (std::size_t p = 0; p < cols; ++p) {
    double sum = 0;
    for (std::size_t i = 0; i < h; ++i) {
      const double v = dist.t[p * h + i];
      if (v < 0) throw ConfigError("HeightDistribution: negative weight");
      sum += v;
    }
    if (std::fabs(sum - 1.0) > tol)
      throw ConfigError("HeightDistribution: column does not sum to 1");
  }
}

ReferenceCoefficients predict_coefficients(const FeatureVolume& feat, const Mlp& head,
                                           std::uint64_t* macs) {
  if (head.in_dim() != feat.channels())
    throw ShapeError("predict_coefficients: head input != feature channels");
  Tensor logits = mlp_forward(head, feat.data, nullptr, macs);
  // (n, h, w, d): normalize the reference-point axis per pixel
  return ReferenceCoefficients{softmax(logits, 3)};
}

HeightDistribution predict_height_distribution(const FeatureVolume& feat, const Mlp& head,
                                               std::uint64_t* macs) {
  if (head.in_dim() != feat.channels())
    throw ShapeError("predict_height_distribution: head input != feature channels");
  if (head.out_dim() != 1)
    throw ConfigError("predict_height_distribution: head must emit one logit per pixel");
  Tensor logits = mlp_forward(head, feat.data, nullptr, macs);  // (n, h, w, 1)
  const std::size_t n = feat.cameras(), h = feat.height(), w = feat.width();
  Tensor t({n, w, h});
  for (std::size_t cam = 0; cam < n; ++cam)
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j)
        t.at(cam, j, i) = logits[(cam * h + i) * w + j];
  return HeightDistribution{softmax(t, 2)};
}

namespace {

// Shared core of the pixel-wise encoders: for every pixel, lift through the
// depth bins, project into the ego frame, take polar coordinates, Fourier-
// encode and aggregate with the reference coefficients.
Tensor aggregate_pixel_encodings(const FeatureVolume& feat, const CameraRig& rig,
                                 const DepthBins& bins, const ReferenceCoefficients& coeffs,
                                 bool include_height, const FourierEncoder& enc,
                                 const EncodingScales& scales, std::uint64_t* macs) {
  rig.validate();
  bins.validate();
  const std::size_t n = feat.cameras(), h = feat.height(), w = feat.width();
  const std::size_t d = bins.count();
  if (rig.count() != n) throw ShapeError("pixel encoding: rig/feature camera count mismatch");
  const auto& s = coeffs.s;
  if (s.ndim() != 4 || s.dim(0) != n || s.dim(1) != h || s.dim(2) != w || s.dim(3) != d)
    throw ShapeError("pixel encoding: coefficient shape != (n, h, w, depth_bins)");

  const std::size_t pe_dim = reference_pe_dim(include_height, enc);
  Tensor out({n, h, w, pe_dim});
  std::vector<double> point_pe(pe_dim);
  for (std::size_t cam = 0; cam < n; ++cam) {
    const CameraModel& camera = rig.cameras[cam];
    for (std::size_t i = 0; i < h; ++i) {
      for (std::size_t j = 0; j < w; ++j) {
        const double u = pixel_u(j), v = pixel_v(i);
        double* acc = out.data() + ((cam * h + i) * w + j) * pe_dim;
        const double* sw = s.data() + ((cam * h + i) * w + j) * d;
        for (std::size_t k = 0; k < d; ++k) {
          const double depth = bins.values[k];
          const Vec3 lifted{u * depth, v * depth, depth};
          const PolarCoord polar = to_polar(project_to_ego(lifted, camera));
          reference_pe_into(point_pe.data(), polar, include_height, enc, scales);
          const double weight = sw[k];
          for (std::size_t e = 0; e < pe_dim; ++e) acc[e] += weight * point_pe[e];
        }
      }
    }
  }
  if (macs) *macs += static_cast<std::uint64_t>(n) * h * w * d * pe_dim;
  return out;
}

}  // namespace

Tensor pixel_refpe_premlp(const FeatureVolume& feat, const CameraRig& rig,
                          const DepthBins& bins, const ReferenceCoefficients& coeffs,
                          bool include_height, const FourierEncoder& enc,
                          const EncodingScales& scales, std::uint64_t* macs) {
  return aggregate_pixel_encodings(feat, rig, bins, coeffs, include_height, enc, scales, macs);
}

EncodingSet pixel_refpe(const FeatureVolume& feat, const CameraRig& rig,
                        const DepthBins& bins, const ReferenceCoefficients& coeffs,
                        const Mlp& agg_mlp, bool include_height,
                        const FourierEncoder& enc, const EncodingScales& scales,
                        std::uint64_t* macs) {
  Tensor pre = aggregate_pixel_encodings(feat, rig, bins, coeffs, include_height, enc,
                                         scales, macs);
  if (agg_mlp.in_dim() != pre.dim(3))
    throw ShapeError("pixel_refpe: aggregation MLP input dim != encoding dim");
  // pixel encodings carry the same shape as the features they annotate
  if (agg_mlp.out_dim() != feat.channels())
    throw ShapeError("pixel_refpe: encoding channels must match feature channels");
  return EncodingSet{EncodingKind::Pixel, mlp_forward(agg_mlp, pre, nullptr, macs)};
}

Tensor query_refpe(const Vec3& anchor, const Mlp& mlp, const FourierEncoder& enc,
                   const EncodingScales& scales) {
  const PolarCoord polar = to_polar(anchor);
  const std::size_t pe_dim = reference_pe_dim(true, enc);
  if (mlp.in_dim() != pe_dim) throw ShapeError("query_refpe: MLP input dim != encoding dim");
  Tensor pre({1, pe_dim});
  reference_pe_into(pre.data(), polar, true, enc, scales);
  Tensor out = mlp_forward(mlp, pre);
  return out.reshaped({out.dim(1)});
}

EncodingSet bev_query_pe(const BevGrid& grid, const Mlp& mlp, const FourierEncoder& enc,
                         const EncodingScales& scales, std::uint64_t* macs) {
  const std::size_t pe_dim = reference_pe_dim(false, enc);
  if (mlp.in_dim() != pe_dim) throw ShapeError("bev_query_pe: MLP input dim != encoding dim");
  Tensor pre({grid.h_b, grid.w_b, pe_dim});
  for (std::size_t i = 0; i < grid.h_b; ++i) {
    for (std::size_t j = 0; j < grid.w_b; ++j) {
      const Vec3 center{grid.centers.at(i, j, std::size_t{0}),
                        grid.centers.at(i, j, std::size_t{1}), 0.0};
      reference_pe_into(pre.data() + (i * grid.w_b + j) * pe_dim, to_polar(center), false,
                        enc, scales);
    }
  }
  return EncodingSet{EncodingKind::Bev, mlp_forward(mlp, pre, nullptr, macs)};
}

Tensor width_refpe_premlp(const FeatureVolume& feat, const CameraRig& rig,
                          const DepthBins& bins, const ReferenceCoefficients& coeffs,
                          const HeightDistribution& heights, const FourierEncoder& enc,
                          const EncodingScales& scales, std::uint64_t* macs) {
  const std::size_t n = feat.cameras(), h = feat.height(), w = feat.width();
  const auto& t = heights.t;
  if (t.ndim() != 3 || t.dim(0) != n || t.dim(1) != w || t.dim(2) != h)
    throw ShapeError("width_refpe: height distribution shape != (n, w, h)");
  validate_height_distribution(heights);

  // Height is dropped before any aggregation: encode without z.
  Tensor pixel_pre = aggregate_pixel_encodings(feat, rig, bins, coeffs, false, enc,
                                               scales, macs);
  const std::size_t pe_dim = pixel_pre.dim(3);
  Tensor out({n, w, pe_dim});
  for (std::size_t cam = 0; cam < n; ++cam) {
    for (std::size_t j = 0; j < w; ++j) {
      double* acc = out.data() + (cam * w + j) * pe_dim;
      for (std::size_t i = 0; i < h; ++i) {
        const double weight = t.at(cam, j, i);
        const double* px = pixel_pre.data() + ((cam * h + i) * w + j) * pe_dim;
        for (std::size_t e = 0; e < pe_dim; ++e) acc[e] += weight * px[e];
      }
    }
  }
  if (macs) *macs += static_cast<std::uint64_t>(n) * w * h * pe_dim;
  return out;
}

EncodingSet width_refpe(const FeatureVolume& feat, const CameraRig& rig,
                        const DepthBins& bins, const ReferenceCoefficients& coeffs,
                        const HeightDistribution& heights, const Mlp& agg_mlp,
                        const FourierEncoder& enc, const EncodingScales& scales,
                        std::uint64_t* macs) {
  Tensor pre = width_refpe_premlp(feat, rig, bins, coeffs, heights, enc, scales, macs);
  if (agg_mlp.in_dim() != pre.dim(2))
    throw ShapeError("width_refpe: aggregation MLP input dim != encoding dim");
  return EncodingSet{EncodingKind::Width, mlp_forward(agg_mlp, pre, nullptr, macs)};
}

}  // namespace bvt
