#include "bvt/decoder.hpp"

namespace bvt {

BevGrid make_grid(std::size_t h_b, std::size_t w_b, double range_m) {
  if (h_b == 0 || w_b == 0) throw ConfigError("make_grid: cell counts must be >= 1");
  if (range_m <= 0) throw ConfigError("make_grid: range must be positive");
  BevGrid grid;
  grid.h_b = h_b;
  grid.w_b = w_b;
  grid.range_m = range_m;
  grid.centers = Tensor({h_b, w_b, 2});
  const double sx = 2.0 * range_m / static_cast<double>(h_b);
  const double sy = 2.0 * range_m / static_cast<double>(w_b);
  const double mx = (static_cast<double>(h_b) - 1.0) / 2.0;
  const double my = (static_cast<double>(w_b) - 1.0) / 2.0;
  for (std::size_t i = 0; i < h_b; ++i) {
    for (std::size_t j = 0; j < w_b; ++j) {
      // (i - mid) * spacing keeps mirror cells exactly negated
      grid.centers.at(i, j, std::size_t{0}) = (static_cast<double>(i) - mx) * sx;
      grid.centers.at(i, j, std::size_t{1}) = (static_cast<double>(j) - my) * sy;
    }
  }
  return grid;
}

DecoderParams DecoderParams::init(Rng& rng, std::size_t c, std::size_t heads,
                                  std::size_t ffn_hidden) {
  DecoderParams p;
  p.attn = MhaParams::init(rng, c, heads);
  p.ffn = Mlp::init(rng, {c, ffn_hidden, c});
  p.norm_attn = LayerNorm::init(c);
  p.norm_ffn = LayerNorm::init(c);
  return p;
}

namespace {

Tensor decode(const Tensor& queries, const Tensor& keys, const Tensor& values,
              const DecoderParams& params, std::size_t h_b, std::size_t w_b,
              TransformCache* cache, DecoderMacs* macs) {
  const std::size_t nq = queries.dim(0), c = queries.dim(1);
  MhaCache attn_cache;
  MhaMacs attn_macs;
  Tensor a = mha(queries, keys, values, params.attn, cache ? &attn_cache : nullptr,
                 &attn_macs);
  Tensor u = queries + a;
  LayerNormCache norm_attn_cache;
  if (params.use_norm) u = layer_norm(u, params.norm_attn, cache ? &norm_attn_cache : nullptr);

  std::uint64_t ffn_macs = 0;
  MlpCache ffn_cache;
  Tensor f = mlp_forward(params.ffn, u, cache ? &ffn_cache : nullptr, &ffn_macs);
  Tensor out = u + f;
  LayerNormCache norm_ffn_cache;
  if (params.use_norm)
    out = layer_norm(out, params.norm_ffn, cache ? &norm_ffn_cache : nullptr);

  if (macs) {
    macs->attn.proj += attn_macs.proj;
    macs->attn.attn += attn_macs.attn;
    macs->ffn += ffn_macs;
    macs->kv_count += keys.dim(0);
  }
  if (cache) {
    cache->queries = queries;
    cache->keys = keys;
    cache->values = values;
    cache->attn = std::move(attn_cache);
    cache->u = u;
    cache->norm_attn = std::move(norm_attn_cache);
    cache->ffn = std::move(ffn_cache);
    cache->norm_ffn = std::move(norm_ffn_cache);
  }
  (void)nq;
  return out.reshaped({h_b, w_b, c});
}

}  // namespace

Tensor transform(const WidthFeatures& width, const EncodingSet& width_pe,
                 const EncodingSet& bev_queries, const DecoderParams& params,
                 TransformCache* cache, DecoderMacs* macs) {
  if (width_pe.kind != EncodingKind::Width)
    throw ShapeError("transform: width_pe must be a width encoding");
  if (bev_queries.kind != EncodingKind::Bev)
    throw ShapeError("transform: bev_queries must be a BEV encoding");
  check_same_dims(width.data, width_pe.values, "transform: width features vs PE");
  const std::size_t n = width.cameras(), w = width.width(), c = width.channels();
  if (bev_queries.values.dim(2) != c) throw ShapeError("transform: channel dims disagree");
  const std::size_t h_b = bev_queries.values.dim(0), w_b = bev_queries.values.dim(1);

  const Tensor queries = bev_queries.values.reshaped({h_b * w_b, c});
  const Tensor values = width.data.reshaped({n * w, c});
  const Tensor keys = values + width_pe.values.reshaped({n * w, c});
  return decode(queries, keys, values, params, h_b, w_b, cache, macs);
}

Tensor transform_full_oracle(const FeatureVolume& feat, const EncodingSet& pixel_pe,
                             const EncodingSet& bev_queries, const DecoderParams& params,
                             DecoderMacs* macs) {
  if (pixel_pe.kind != EncodingKind::Pixel)
    throw ShapeError("transform_full_oracle: pixel_pe must be a pixel encoding");
  if (bev_queries.kind != EncodingKind::Bev)
    throw ShapeError("transform_full_oracle: bev_queries must be a BEV encoding");
  check_same_dims(feat.data, pixel_pe.values, "transform_full_oracle: features vs PE");
  const std::size_t n = feat.cameras(), h = feat.height(), w = feat.width(),
                    c = feat.channels();
  if (bev_queries.values.dim(2) != c)
    throw ShapeError("transform_full_oracle: channel dims disagree");
  const std::size_t h_b = bev_queries.values.dim(0), w_b = bev_queries.values.dim(1);

  const Tensor queries = bev_queries.values.reshaped({h_b * w_b, c});
  const Tensor values = feat.data.reshaped({n * h * w, c});
  const Tensor keys = values + pixel_pe.values.reshaped({n * h * w, c});
  return decode(queries, keys, values, params, h_b, w_b, nullptr, macs);
}

void transform_backward(const DecoderParams& params, const TransformCache& cache,
                        const Tensor& dy, DecoderGrads& grads,
                        Tensor* dqueries, Tensor* dwidth, Tensor* dwidth_pe) {
  if (grads.ffn.layers.empty()) grads = make_zero_grads(params);
  const std::size_t nq = cache.queries.dim(0), c = cache.queries.dim(1);
  Tensor dflat = dy.reshaped({nq, c});

  Tensor dout_pre;
  if (params.use_norm) {
    dout_pre = Tensor({nq, c});
    layer_norm_backward(params.norm_ffn, cache.norm_ffn, dflat, grads.norm_ffn, &dout_pre);
  } else {
    dout_pre = dflat;
  }
  Tensor du = dout_pre;
  Tensor du_ffn({nq, c});
  mlp_backward(params.ffn, cache.ffn, dout_pre, grads.ffn, &du_ffn);
  du += du_ffn;

  Tensor du_pre;
  if (params.use_norm) {
    du_pre = Tensor({nq, c});
    layer_norm_backward(params.norm_attn, cache.norm_attn, du, grads.norm_attn, &du_pre);
  } else {
    du_pre = du;
  }

  Tensor dq_attn({nq, c});
  Tensor dkeys({cache.keys.dim(0), c}), dvalues({cache.values.dim(0), c});
  mha_backward(cache.queries, cache.keys, cache.values, params.attn, cache.attn, du_pre,
               grads.attn, &dq_attn, &dkeys, &dvalues);

  if (dqueries) {
    if (dqueries->empty()) *dqueries = Tensor({nq, c});
    *dqueries += du_pre;  // residual path
    *dqueries += dq_attn;
  }
  if (dwidth_pe) {
    if (dwidth_pe->empty()) *dwidth_pe = Tensor(dkeys.dims());
    *dwidth_pe += dkeys;  // keys = width + pe
  }
  if (dwidth) {
    if (dwidth->empty()) *dwidth = Tensor(dvalues.dims());
    *dwidth += dkeys;
    *dwidth += dvalues;
  }
}

DecoderGrads make_zero_grads(const DecoderParams& p) {
  DecoderGrads g;
  g.attn = make_zero_grads(p.attn);
  g.ffn = make_zero_grads(p.ffn);
  const std::size_t c = p.norm_attn.gain.size();
  g.norm_attn = {Tensor({c}), Tensor({c})};
  g.norm_ffn = {Tensor({c}), Tensor({c})};
  return g;
}

std::uint64_t decoder_cost(std::size_t n_q, std::size_t n_k, std::size_t c,
                           std::size_t ffn_hidden) {
  const std::uint64_t proj = static_cast<std::uint64_t>(n_q) * c * c       // Q
                             + 2ull * n_k * c * c                          // K, V
                             + static_cast<std::uint64_t>(n_q) * c * c;    // output
  const std::uint64_t attn = 2ull * n_q * n_k * c;                         // scores+values
  const std::uint64_t ffn = 2ull * n_q * c * ffn_hidden;
  return proj + attn + ffn;
}

}  // namespace bvt
