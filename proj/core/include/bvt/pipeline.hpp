// End-to-end view transformation: pool -> refine -> positional encodings ->
// single-layer decoder, with per-stage MAC counters and the cached partial
// results the perturbation sweep reuses.
#pragma once

#include <cstdint>
#include <optional>
#include <span>

#include "bvt/auxhead.hpp"
#include "bvt/decoder.hpp"
#include "bvt/encoding.hpp"
#include "bvt/scene.hpp"

namespace bvt {

struct PipelineConfig {
  std::size_t h_b = 32;
  std::size_t w_b = 32;
  double bev_range = 51.2;
  std::size_t heads = 4;
  int fourier_bands = 8;
  EncodingScales scales;
  bool use_refine = true;
  bool use_norm = true;

  void validate(std::size_t channels) const;
};

struct PipelineParams {
  PipelineConfig cfg;
  FourierEncoder enc;
  Mlp coeff_head;      // per-pixel C -> C -> depth_bins, softmax outside
  Mlp height_head;     // per-pixel C -> C -> 1, softmax over the column
  Mlp width_pe_mlp;    // 6L -> C -> C
  Mlp bev_pe_mlp;      // 6L -> C -> C
  RefineParams refine;
  DecoderParams decoder;
  BevGrid grid;
};

PipelineParams init_pipeline(const SceneSpec& scene, const PipelineConfig& cfg, Rng& rng);

struct StageMacs {
  std::uint64_t pool = 0;     // max pooling performs no multiplies
  std::uint64_t refine = 0;
  std::uint64_t pe = 0;
  std::uint64_t decoder = 0;
  std::uint64_t decoder_kv = 0;  // attention key/value cardinality
};

// Feature-dependent intermediates that do not change when only the camera
// extrinsics move: pooled+refined width features, predicted coefficient and
// height tensors, and the BEV queries (grid geometry only).
struct FeaturePathCache {
  WidthFeatures width;            // refined width features F^W
  ReferenceCoefficients coeffs;
  HeightDistribution heights;
  EncodingSet bev_queries;
};

FeaturePathCache run_feature_path(const Scene& scene, const PipelineParams& params,
                                  StageMacs* macs = nullptr);

// Geometry-dependent tail: width positional encodings for the given rig,
// then the decoder. Rerun per perturbed rig against a fixed feature cache.
Tensor bev_from_geometry(const CameraRig& rig, const Scene& scene,
                         const FeaturePathCache& cache, const PipelineParams& params,
                         StageMacs* macs = nullptr);

// Full pipeline on the scene's own rig. (h_b, w_b, c).
Tensor run_pipeline(const Scene& scene, const PipelineParams& params,
                    StageMacs* macs = nullptr);

// Computes the BEV features twice, once with the auxiliary head attached and
// evaluated (its output discarded, as at inference) and once with it absent,
// and reports whether the outputs are bit-identical.
bool removability_check(const Scene& scene, const PipelineParams& params,
                        const AuxHeadParams& head);

// Relative L2 gap between the width-compressed decoder output and the
// full-feature attention path with per-pixel encodings (no height, matching
// the width construction).
double compression_gap(const Scene& scene, const PipelineParams& params);

}  // namespace bvt
