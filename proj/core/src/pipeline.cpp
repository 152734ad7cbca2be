#include "bvt/pipeline.hpp"

namespace bvt {

void PipelineConfig::validate(std::size_t channels) const {
  if (h_b == 0 || w_b == 0) throw ConfigError("PipelineConfig: BEV grid must be non-empty");
  if (bev_range <= 0) throw ConfigError("PipelineConfig: BEV range must be positive");
  if (fourier_bands <= 0) throw ConfigError("PipelineConfig: need at least one band");
  if (heads == 0 || channels % heads != 0)
    throw ConfigError("PipelineConfig: channels must be divisible by head count");
}

PipelineParams init_pipeline(const SceneSpec& scene, const PipelineConfig& cfg, Rng& rng) {
  scene.validate();
  cfg.validate(scene.channels);
  const std::size_t c = scene.channels;
  PipelineParams p;
  p.cfg = cfg;
  p.enc = FourierEncoder{cfg.fourier_bands};
  const std::size_t pe_dim = reference_pe_dim(false, p.enc);
  p.coeff_head = Mlp::init(rng, {c, c, scene.depth_bins});
  p.height_head = Mlp::init(rng, {c, c, 1});
  p.width_pe_mlp = Mlp::init(rng, {pe_dim, c, c});
  p.bev_pe_mlp = Mlp::init(rng, {pe_dim, c, c});
  p.refine = RefineParams::init(rng, c, cfg.heads, 2 * c);
  p.refine.use_norm = cfg.use_norm;
  p.decoder = DecoderParams::init(rng, c, cfg.heads, 4 * c);
  p.decoder.use_norm = cfg.use_norm;
  p.grid = make_grid(cfg.h_b, cfg.w_b, cfg.bev_range);
  return p;
}

FeaturePathCache run_feature_path(const Scene& scene, const PipelineParams& params,
                                  StageMacs* macs) {
  FeaturePathCache cache;
  WidthFeatures pooled = height_maxpool(scene.features);
  if (params.cfg.use_refine) {
    RefineMacs refine_macs;
    cache.width = refine(pooled, scene.features, params.refine, nullptr,
                         macs ? &refine_macs : nullptr);
    if (macs) macs->refine += refine_macs.total();
  } else {
    cache.width = std::move(pooled);
  }
  std::uint64_t pe_macs = 0;
  cache.coeffs = predict_coefficients(scene.features, params.coeff_head, &pe_macs);
  cache.heights = predict_height_distribution(scene.features, params.height_head, &pe_macs);
  cache.bev_queries = bev_query_pe(params.grid, params.bev_pe_mlp, params.enc,
                                   params.cfg.scales, &pe_macs);
  if (macs) macs->pe += pe_macs;
  return cache;
}

Tensor bev_from_geometry(const CameraRig& rig, const Scene& scene,
                         const FeaturePathCache& cache, const PipelineParams& params,
                         StageMacs* macs) {
  std::uint64_t pe_macs = 0;
  EncodingSet width_pe = width_refpe(scene.features, rig, scene.bins, cache.coeffs,
                                     cache.heights, params.width_pe_mlp, params.enc,
                                     params.cfg.scales, &pe_macs);
  DecoderMacs dec_macs;
  Tensor bev = transform(cache.width, width_pe, cache.bev_queries, params.decoder,
                         nullptr, macs ? &dec_macs : nullptr);
  if (macs) {
    macs->pe += pe_macs;
    macs->decoder += dec_macs.total();
    macs->decoder_kv = dec_macs.kv_count;
  }
  return bev;
}

Tensor run_pipeline(const Scene& scene, const PipelineParams& params, StageMacs* macs) {
  const FeaturePathCache cache = run_feature_path(scene, params, macs);
  return bev_from_geometry(scene.rig, scene, cache, params, macs);
}

bool removability_check(const Scene& scene, const PipelineParams& params,
                        const AuxHeadParams& head) {
  // Inference arrangement: no head anywhere.
  const FeaturePathCache detached = run_feature_path(scene, params);
  const Tensor without_head = bev_from_geometry(scene.rig, scene, detached, params);

  // Training arrangement: head attached to the width features and evaluated;
  // its logits go nowhere.
  const FeaturePathCache attached = run_feature_path(scene, params);
  const AuxLogits logits = aux_forward(attached.width, head);
  if (!logits.cls.all_finite() || !logits.depth.all_finite() || !logits.height.all_finite())
    throw ConfigError("removability_check: aux head produced non-finite logits");
  const Tensor with_head = bev_from_geometry(scene.rig, scene, attached, params);

  return bits_equal(without_head, with_head);
}

double compression_gap(const Scene& scene, const PipelineParams& params) {
  const FeaturePathCache cache = run_feature_path(scene, params);
  const Tensor width_bev = bev_from_geometry(scene.rig, scene, cache, params);
  const EncodingSet pixel_pe =
      pixel_refpe(scene.features, scene.rig, scene.bins, cache.coeffs, params.width_pe_mlp,
                  false, params.enc, params.cfg.scales);
  const Tensor full_bev = transform_full_oracle(scene.features, pixel_pe,
                                                cache.bev_queries, params.decoder);
  return l2_norm(full_bev - width_bev) / l2_norm(full_bev);
}

}  // namespace bvt
